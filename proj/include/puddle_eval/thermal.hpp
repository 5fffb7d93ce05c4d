#pragma once

// Raw radiometric frames to standardized 8-bit images, channel replication,
// and geometric augmentations that carry their bounding boxes along.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "puddle_eval/coco.hpp"
#include "puddle_eval/errors.hpp"
#include "puddle_eval/rng.hpp"

namespace puddle_eval {

/// Row-major, channel-interleaved image.
template <class T, int Channels = 1>
struct Image {
  static_assert(Channels >= 1);
  static constexpr int kChannels = Channels;
  using value_type = T;

  int width = 0;
  int height = 0;
  std::vector<T> values;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), values(static_cast<std::size_t>(w) * h * Channels, fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * Channels + c;
  }
  T& at(int x, int y, int c = 0) { return values[index(x, y, c)]; }
  T at(int x, int y, int c = 0) const { return values[index(x, y, c)]; }

  bool valid() const { return width > 0 && height > 0 && values.size() == index(0, height); }

  friend bool operator==(const Image&, const Image&) = default;
};

using RawFrame = Image<std::int16_t>;
using GrayFrame = Image<std::uint8_t>;
using RgbImage = Image<std::uint8_t, 3>;

/// Raw units mapped onto [0, 255]; shared by every frame of a dataset.
struct CalibrationRange {
  double lo = 0.0;
  double hi = 0.0;

  void check() const {
    if (!(lo < hi)) throw std::invalid_argument("calibration range requires lo < hi");
  }
};

inline std::uint8_t normalize_sample(double v, const CalibrationRange& cal) {
  double t = (v - cal.lo) / (cal.hi - cal.lo);
  t = std::clamp(t, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * t + 0.5));
}

/// Global affine clamp into 8 bits with round-half-up.
inline GrayFrame normalize_frame(const RawFrame& raw, const CalibrationRange& cal) {
  cal.check();
  if (!raw.valid()) throw std::invalid_argument("raw frame: values do not match dimensions");
  GrayFrame out(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.values.size(); ++i)
    out.values[i] = normalize_sample(raw.values[i], cal);
  return out;
}

inline RgbImage triple_channels(const GrayFrame& g) {
  RgbImage out(g.width, g.height);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    out.values[3 * i] = g.values[i];
    out.values[3 * i + 1] = g.values[i];
    out.values[3 * i + 2] = g.values[i];
  }
  return out;
}

// --- file formats --------------------------------------------------------

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32le(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::string_view data, std::size_t& pos) {
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (pos < data.size()) {
    if (space(data[pos])) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < data.size() && !space(data[pos])) ++pos;
  return std::string(data.substr(start, pos - start));
}

template <int Channels>
std::string write_pnm(const Image<std::uint8_t, Channels>& img) {
  static_assert(Channels == 1 || Channels == 3);
  std::string out = (Channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.values.data()), img.values.size());
  return out;
}

template <int Channels>
Image<std::uint8_t, Channels> read_pnm(std::string_view data) {
  std::size_t pos = 0;
  const std::string magic = pnm_token(data, pos);
  if (magic != (Channels == 1 ? "P5" : "P6")) throw DataError("pnm: unexpected magic '" + magic + "'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(data, pos));
    h = std::stoi(pnm_token(data, pos));
    maxval = std::stoi(pnm_token(data, pos));
  } catch (const std::exception&) {
    throw DataError("pnm: malformed header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError("pnm: only 8-bit images are supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h * Channels;
  if (data.size() < pos + n) throw DataError("pnm: truncated raster");
  Image<std::uint8_t, Channels> img(w, h);
  std::memcpy(img.values.data(), data.data() + pos, n);
  return img;
}

}  // namespace detail

inline constexpr std::string_view kRawMagic = "THRM";
inline constexpr std::size_t kRawHeaderSize = 16;

/// 16-byte header ("THRM", u32 width, u32 height, u32 reserved) followed by
/// little-endian int16 samples.
inline std::string write_raw_frame(const RawFrame& f) {
  std::string out(kRawMagic);
  detail::put_u32le(out, static_cast<std::uint32_t>(f.width));
  detail::put_u32le(out, static_cast<std::uint32_t>(f.height));
  detail::put_u32le(out, 0);
  out.reserve(kRawHeaderSize + 2 * f.values.size());
  for (std::int16_t v : f.values) {
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<char>(u & 0xFF));
    out.push_back(static_cast<char>(u >> 8));
  }
  return out;
}

inline RawFrame read_raw_frame(std::string_view data) {
  if (data.size() < kRawHeaderSize || data.substr(0, 4) != kRawMagic)
    throw DataError("raw frame: missing THRM header");
  const std::uint32_t w = detail::get_u32le(data, 4);
  const std::uint32_t h = detail::get_u32le(data, 8);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15)
    throw DataError("raw frame: implausible dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (data.size() != kRawHeaderSize + 2 * n)
    throw DataError("raw frame: payload size does not match " + std::to_string(w) + "x" +
                    std::to_string(h));
  RawFrame f(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<unsigned char>(data[kRawHeaderSize + 2 * i]);
    const auto hi = static_cast<unsigned char>(data[kRawHeaderSize + 2 * i + 1]);
    f.values[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  return f;
}

inline std::string write_pgm(const GrayFrame& g) { return detail::write_pnm<1>(g); }
inline GrayFrame read_pgm(std::string_view data) { return detail::read_pnm<1>(data); }
inline std::string write_ppm(const RgbImage& img) { return detail::write_pnm<3>(img); }
inline RgbImage read_ppm(std::string_view data) { return detail::read_pnm<3>(data); }

// --- augmentation ----------------------------------------------------------

enum class FlipAxis { Horizontal, Vertical };

template <class Img>
struct Augmented {
  Img image;
  std::vector<BBox> boxes;
};

inline void check_boxes_in_bounds(std::span<const BBox> boxes, int width, int height) {
  constexpr double eps = 1e-9;
  for (const auto& b : boxes) {
    if (b.w < 0.0 || b.h < 0.0 || b.x < -eps || b.y < -eps || b.right() > width + eps ||
        b.bottom() > height + eps)
      throw std::invalid_argument("box lies outside the image bounds");
  }
}

/// Mirrors the image; horizontal maps x to width - x - w.
template <class T, int C>
Augmented<Image<T, C>> flip(const Image<T, C>& img, std::span<const BBox> boxes, FlipAxis axis) {
  check_boxes_in_bounds(boxes, img.width, img.height);
  Augmented<Image<T, C>> out{Image<T, C>(img.width, img.height), {}};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx = axis == FlipAxis::Horizontal ? img.width - 1 - x : x;
      const int sy = axis == FlipAxis::Vertical ? img.height - 1 - y : y;
      for (int c = 0; c < C; ++c) out.image.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  out.boxes.reserve(boxes.size());
  for (const auto& b : boxes) {
    if (axis == FlipAxis::Horizontal) {
      out.boxes.push_back({img.width - b.x - b.w, b.y, b.w, b.h});
    } else {
      out.boxes.push_back({b.x, img.height - b.y - b.h, b.w, b.h});
    }
  }
  return out;
}

namespace detail {

// cos/sin with exact values at multiples of 90 degrees.
inline std::array<double, 2> cos_sin_degrees(double degrees) {
  const double quarter = degrees / 90.0;
  if (quarter == std::floor(quarter)) {
    switch (static_cast<int>(static_cast<long long>(quarter) % 4)) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

}  // namespace detail

/// Rotates about the canvas center on a fixed canvas of the same size.
/// Uncovered pixels become 0; boxes become the clipped axis-aligned hull of
/// their rotated corners, and boxes rotated entirely off canvas are dropped.
template <class T, int C>
Augmented<Image<T, C>> rotate(const Image<T, C>& img, std::span<const BBox> boxes, double degrees) {
  degrees = std::fmod(degrees, 360.0);
  if (degrees < 0.0) degrees += 360.0;
  if (degrees == 0.0) {
    return {img, std::vector<BBox>(boxes.begin(), boxes.end())};
  }
  const auto [cs, sn] = detail::cos_sin_degrees(degrees);
  const double cx = img.width / 2.0;
  const double cy = img.height / 2.0;

  Augmented<Image<T, C>> out{Image<T, C>(img.width, img.height), {}};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Inverse rotation of the output pixel center.
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      const auto ix = static_cast<long>(std::floor(sx));
      const auto iy = static_cast<long>(std::floor(sy));
      if (ix < 0 || iy < 0 || ix >= img.width || iy >= img.height) continue;
      for (int c = 0; c < C; ++c)
        out.image.at(x, y, c) = img.at(static_cast<int>(ix), static_cast<int>(iy), c);
    }
  }

  for (const auto& b : boxes) {
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    const std::array<std::array<double, 2>, 4> corners = {
        {{b.x, b.y}, {b.right(), b.y}, {b.x, b.bottom()}, {b.right(), b.bottom()}}};
    for (const auto& [px, py] : corners) {
      const double dx = px - cx;
      const double dy = py - cy;
      const double rx = cx + cs * dx - sn * dy;
      const double ry = cy + sn * dx + cs * dy;
      x0 = std::min(x0, rx);
      x1 = std::max(x1, rx);
      y0 = std::min(y0, ry);
      y1 = std::max(y1, ry);
    }
    x0 = std::clamp(x0, 0.0, static_cast<double>(img.width));
    x1 = std::clamp(x1, 0.0, static_cast<double>(img.width));
    y0 = std::clamp(y0, 0.0, static_cast<double>(img.height));
    y1 = std::clamp(y1, 0.0, static_cast<double>(img.height));
    if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) continue;
    out.boxes.push_back({x0, y0, x1 - x0, y1 - y0});
  }
  return out;
}

struct AugmentPolicy {
  double p_hflip = 0.2;
  double p_vflip = 0.2;
  double p_rotate = 0.2;
};

template <class Img>
struct AugmentResult {
  Img image;
  std::vector<BBox> boxes;
  bool hflipped = false;
  bool vflipped = false;
  std::optional<double> rotation;  // degrees, when applied

  bool any_applied() const { return hflipped || vflipped || rotation.has_value(); }
};

/// Independent draws for hflip, vflip and rotate, applied in that order.
/// Four variates are always consumed so the outcome is a pure function of
/// the seed.
template <class T, int C>
AugmentResult<Image<T, C>> augment_sample(const Image<T, C>& img, std::span<const BBox> boxes,
                                          const AugmentPolicy& policy, std::uint64_t seed) {
  Rng rng(seed);
  const double u_h = rng.uniform();
  const double u_v = rng.uniform();
  const double u_r = rng.uniform();
  const double angle = 360.0 * rng.uniform();

  AugmentResult<Image<T, C>> out;
  out.image = img;
  out.boxes.assign(boxes.begin(), boxes.end());
  if (u_h < policy.p_hflip) {
    auto r = flip(out.image, out.boxes, FlipAxis::Horizontal);
    out.image = std::move(r.image);
    out.boxes = std::move(r.boxes);
    out.hflipped = true;
  }
  if (u_v < policy.p_vflip) {
    auto r = flip(out.image, out.boxes, FlipAxis::Vertical);
    out.image = std::move(r.image);
    out.boxes = std::move(r.boxes);
    out.vflipped = true;
  }
  if (u_r < policy.p_rotate) {
    auto r = rotate(out.image, out.boxes, angle);
    out.image = std::move(r.image);
    out.boxes = std::move(r.boxes);
    out.rotation = angle;
  }
  return out;
}

}  // namespace puddle_eval
