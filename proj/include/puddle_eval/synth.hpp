#pragma once

// Synthetic thermal scenes with exact puddle ground truth, and a
// parameterized mock detector over COCO datasets.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "puddle_eval/coco.hpp"
#include "puddle_eval/rng.hpp"
#include "puddle_eval/thermal.hpp"

namespace puddle_eval {

struct SceneSpec {
  int width = 640;
  int height = 480;
  double empty_probability = 0.284;
  // A non-empty scene holds 1 + Poisson(extra_puddles_mean) puddles.
  double extra_puddles_mean = 899.0 / 716.0;
  // Semi-axis lengths in pixels, log-uniform so small puddles dominate.
  double puddle_axis_min = 2.5;
  double puddle_axis_max = 40.0;
  double puddle_aspect_min = 0.45;  // minor/major axis ratio lower bound
  // Expected distractor counts per scene (Poisson).
  double pigs_mean = 3.0;
  double stripes_mean = 0.0;
  double birds_mean = 0.0;
  double background = 7400.0;
  double noise_sigma = 30.0;
  // Warm objects sit this many raw units above the background.
  double warm_delta_min = 500.0;
  double warm_delta_max = 900.0;

  void check() const {
    const auto bad = [](const std::string& what) { return std::invalid_argument("scene spec: " + what); };
    if (width <= 0 || height <= 0) throw bad("canvas must be positive");
    if (!(empty_probability >= 0.0 && empty_probability <= 1.0)) throw bad("empty_probability outside [0,1]");
    if (!(extra_puddles_mean >= 0.0) || !(pigs_mean >= 0.0) || !(stripes_mean >= 0.0) || !(birds_mean >= 0.0))
      throw bad("counts must be non-negative");
    if (!(puddle_axis_min >= 1.0 && puddle_axis_min <= puddle_axis_max)) throw bad("invalid puddle axis range");
    if (!(puddle_aspect_min > 0.0 && puddle_aspect_min <= 1.0)) throw bad("puddle_aspect_min outside (0,1]");
    if (2.0 * puddle_axis_max > std::min(width, height)) throw bad("puddles larger than the canvas");
    if (pigs_mean > 0.0 && 2.0 * kPigMajorMax > std::min(width, height)) throw bad("pigs larger than the canvas");
    if (stripes_mean > 0.0 && kStripeLengthMax > std::min(width, height)) throw bad("stripes longer than the canvas");
    if (!(noise_sigma >= 0.0)) throw bad("noise_sigma must be non-negative");
    if (!(warm_delta_min <= warm_delta_max)) throw bad("invalid warm delta range");
    if (background - 6.0 * noise_sigma < -32768.0 || background + warm_delta_max + 6.0 * noise_sigma > 32767.0)
      throw bad("raw levels exceed the 16-bit range");
  }

  static constexpr double kPigMajorMax = 60.0;
  static constexpr double kStripeLengthMax = 200.0;
};

/// First barn: small objects dominate, no large puddles, pigs as the main
/// warm distractor.
inline SceneSpec scene_preset_a() { return SceneSpec{}; }

/// Second barn: larger puddles including a few large ones, plus sun-warmed
/// stripes and birds.
inline SceneSpec scene_preset_b() {
  SceneSpec s;
  s.puddle_axis_min = 4.0;
  s.puddle_axis_max = 80.0;
  s.pigs_mean = 2.0;
  s.stripes_mean = 2.0;
  s.birds_mean = 3.0;
  return s;
}

inline SceneSpec scene_preset(std::string_view name) {
  if (name == "A" || name == "a") return scene_preset_a();
  if (name == "B" || name == "b") return scene_preset_b();
  throw std::invalid_argument("unknown scene preset '" + std::string(name) + "'");
}

inline nlohmann::ordered_json to_json(const SceneSpec& s) {
  return {{"width", s.width},
          {"height", s.height},
          {"empty_probability", s.empty_probability},
          {"extra_puddles_mean", s.extra_puddles_mean},
          {"puddle_axis_min", s.puddle_axis_min},
          {"puddle_axis_max", s.puddle_axis_max},
          {"puddle_aspect_min", s.puddle_aspect_min},
          {"pigs_mean", s.pigs_mean},
          {"stripes_mean", s.stripes_mean},
          {"birds_mean", s.birds_mean},
          {"background", s.background},
          {"noise_sigma", s.noise_sigma},
          {"warm_delta_min", s.warm_delta_min},
          {"warm_delta_max", s.warm_delta_max}};
}

/// Fields absent from the document keep the values of `base`.
inline SceneSpec scene_spec_from_json(const nlohmann::json& doc, SceneSpec base = {}) {
  if (!doc.is_object()) throw DataError("scene spec: expected an object");
  const auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc[key].get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    get("width", base.width);
    get("height", base.height);
    get("empty_probability", base.empty_probability);
    get("extra_puddles_mean", base.extra_puddles_mean);
    get("puddle_axis_min", base.puddle_axis_min);
    get("puddle_axis_max", base.puddle_axis_max);
    get("puddle_aspect_min", base.puddle_aspect_min);
    get("pigs_mean", base.pigs_mean);
    get("stripes_mean", base.stripes_mean);
    get("birds_mean", base.birds_mean);
    get("background", base.background);
    get("noise_sigma", base.noise_sigma);
    get("warm_delta_min", base.warm_delta_min);
    get("warm_delta_max", base.warm_delta_max);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scene spec: ") + e.what());
  }
  return base;
}

enum class DistractorKind { Pig, Stripe, Bird };

inline std::string_view to_string(DistractorKind k) {
  switch (k) {
    case DistractorKind::Pig: return "pig";
    case DistractorKind::Stripe: return "stripe";
    case DistractorKind::Bird: return "bird";
  }
  return "?";
}

struct Distractor {
  DistractorKind kind = DistractorKind::Pig;
  BBox bbox;
};

/// Rotated ellipse; a pixel belongs to it when its center lies inside.
struct Ellipse {
  double cx = 0.0, cy = 0.0;
  double a = 1.0, b = 1.0;  // semi-axes
  double angle = 0.0;       // radians

  // Half extents of the continuous shape along x and y.
  double half_width() const {
    return std::sqrt(a * a * std::cos(angle) * std::cos(angle) + b * b * std::sin(angle) * std::sin(angle));
  }
  double half_height() const {
    return std::sqrt(a * a * std::sin(angle) * std::sin(angle) + b * b * std::cos(angle) * std::cos(angle));
  }

  bool contains(int px, int py) const {
    const double dx = px + 0.5 - cx;
    const double dy = py + 0.5 - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
  }
};

struct PixelSpan {
  int y = 0;
  int x0 = 0;
  int x1 = 0;  // inclusive
};

/// Pixels of the ellipse clipped to the canvas, as row spans.
inline std::vector<PixelSpan> rasterize(const Ellipse& e, int width, int height) {
  std::vector<PixelSpan> spans;
  const int y_lo = std::max(0, static_cast<int>(std::floor(e.cy - e.half_height())) - 1);
  const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(e.cy + e.half_height())) + 1);
  const int x_lo = std::max(0, static_cast<int>(std::floor(e.cx - e.half_width())) - 1);
  const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(e.cx + e.half_width())) + 1);
  for (int y = y_lo; y <= y_hi; ++y) {
    int first = -1, last = -1;
    for (int x = x_lo; x <= x_hi; ++x) {
      if (e.contains(x, y)) {
        if (first < 0) first = x;
        last = x;
      }
    }
    if (first >= 0) spans.push_back({y, first, last});
  }
  return spans;
}

/// Tight pixel bounding box of a span set; nullopt when empty.
inline std::optional<BBox> pixel_extent(std::span<const PixelSpan> spans) {
  if (spans.empty()) return std::nullopt;
  int x0 = spans.front().x0, x1 = spans.front().x1;
  for (const auto& s : spans) {
    x0 = std::min(x0, s.x0);
    x1 = std::max(x1, s.x1);
  }
  const int y0 = spans.front().y, y1 = spans.back().y;
  return BBox{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
              static_cast<double>(y1 - y0 + 1)};
}

struct Scene {
  RawFrame frame;  // empty when frames were not requested
  std::vector<BBox> puddles;
  std::vector<Distractor> distractors;
};

namespace detail {

struct Blob {
  std::vector<PixelSpan> spans;
  double delta = 0.0;
};

inline bool overlaps(const BBox& a, const BBox& b) {
  return a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom();
}

inline Ellipse place_ellipse(Rng& rng, double a, double b, int width, int height) {
  Ellipse e{0.0, 0.0, a, b, rng.uniform(0.0, std::numbers::pi)};
  const double hw = e.half_width(), hh = e.half_height();
  e.cx = rng.uniform(hw, width - hw);
  e.cy = rng.uniform(hh, height - hh);
  return e;
}

inline std::vector<PixelSpan> rect_spans(int x, int y, int w, int h) {
  std::vector<PixelSpan> spans;
  for (int r = y; r < y + h; ++r) spans.push_back({r, x, x + w - 1});
  return spans;
}

}  // namespace detail

/// One scene. Layout and sensor noise come from separate streams derived
/// from `seed`, so annotations do not depend on whether a frame is rendered.
inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, bool render = true) {
  spec.check();
  Rng layout(derive_seed(seed, 1));
  Scene scene;
  std::vector<detail::Blob> blobs;
  const int W = spec.width, H = spec.height;
  const auto delta = [&] { return layout.uniform(spec.warm_delta_min, spec.warm_delta_max); };

  // Distractors first; puddles are painted over them.
  const auto pigs = layout.poisson(spec.pigs_mean);
  for (int i = 0; i < pigs; ++i) {
    const double a = layout.uniform(30.0, SceneSpec::kPigMajorMax);
    const double b = a * layout.uniform(0.35, 0.55);
    const Ellipse e = detail::place_ellipse(layout, a, b, W, H);
    auto spans = rasterize(e, W, H);
    if (auto box = pixel_extent(spans)) {
      scene.distractors.push_back({DistractorKind::Pig, *box});
      blobs.push_back({std::move(spans), delta()});
    }
  }
  const auto stripes = layout.poisson(spec.stripes_mean);
  for (int i = 0; i < stripes; ++i) {
    const int len = static_cast<int>(layout.uniform(80.0, SceneSpec::kStripeLengthMax));
    const int thick = 3 + static_cast<int>(layout.below(4));
    const bool horizontal = layout.bernoulli(0.5);
    const int w = horizontal ? len : thick, h = horizontal ? thick : len;
    const int x = static_cast<int>(layout.below(static_cast<std::uint64_t>(W - w + 1)));
    const int y = static_cast<int>(layout.below(static_cast<std::uint64_t>(H - h + 1)));
    scene.distractors.push_back({DistractorKind::Stripe, BBox{double(x), double(y), double(w), double(h)}});
    blobs.push_back({detail::rect_spans(x, y, w, h), delta()});
  }
  const auto birds = layout.poisson(spec.birds_mean);
  for (int i = 0; i < birds; ++i) {
    const double r = layout.uniform(1.5, 4.0);
    const Ellipse e = detail::place_ellipse(layout, r, r, W, H);
    auto spans = rasterize(e, W, H);
    if (auto box = pixel_extent(spans)) {
      scene.distractors.push_back({DistractorKind::Bird, *box});
      blobs.push_back({std::move(spans), delta()});
    }
  }

  if (!layout.bernoulli(spec.empty_probability)) {
    const std::uint64_t n = 1 + layout.poisson(spec.extra_puddles_mean);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double a = layout.log_uniform(spec.puddle_axis_min, spec.puddle_axis_max);
      const double b = std::max(1.0, a * layout.uniform(spec.puddle_aspect_min, 1.0));
      // A few attempts to avoid touching earlier puddles; the last one stays.
      std::vector<PixelSpan> spans;
      BBox box;
      for (int attempt = 0; attempt < 20; ++attempt) {
        const Ellipse e = detail::place_ellipse(layout, a, b, W, H);
        auto s = rasterize(e, W, H);
        auto extent = pixel_extent(s);
        if (!extent) continue;
        spans = std::move(s);
        box = *extent;
        const bool clash = std::any_of(scene.puddles.begin(), scene.puddles.end(),
                                       [&](const BBox& p) { return detail::overlaps(p, box); });
        if (!clash) break;
      }
      if (spans.empty()) continue;
      scene.puddles.push_back(box);
      blobs.push_back({std::move(spans), delta()});
    }
  }

  if (render) {
    Rng noise(derive_seed(seed, 2));
    std::vector<double> raw(static_cast<std::size_t>(W) * H, spec.background);
    for (const auto& blob : blobs)
      for (const auto& s : blob.spans)
        for (int x = s.x0; x <= s.x1; ++x) raw[static_cast<std::size_t>(s.y) * W + x] = spec.background + blob.delta;
    scene.frame = RawFrame(W, H);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double v = raw[i] + (spec.noise_sigma > 0.0 ? noise.normal(0.0, spec.noise_sigma) : 0.0);
      scene.frame.values[i] = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
    }
  }
  return scene;
}

inline constexpr Id kPuddleCategory = 1;

struct Corpus {
  Dataset dataset;
  std::vector<RawFrame> frames;                    // empty unless requested
  std::vector<std::vector<Distractor>> distractors;  // per image, aligned with dataset.images
};

/// Scene i gets image id i + 1 and its own derived seed.
inline Corpus generate_corpus(const SceneSpec& spec, std::size_t n, std::uint64_t seed, bool keep_frames = true) {
  spec.check();
  Corpus c;
  c.dataset.categories.push_back({kPuddleCategory, "puddle"});
  Id next_ann = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const Id image_id = static_cast<Id>(i + 1);
    Scene s = generate_scene(spec, derive_seed(seed, image_id), keep_frames);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06lld.raw", static_cast<long long>(image_id));
    c.dataset.images.push_back({image_id, name, spec.width, spec.height});
    for (const auto& box : s.puddles)
      c.dataset.annotations.push_back({next_ann++, image_id, kPuddleCategory, box, false});
    c.distractors.push_back(std::move(s.distractors));
    if (keep_frames) c.frames.push_back(std::move(s.frame));
  }
  return c;
}

// --- mock detector -------------------------------------------------------------

struct MockDetectorSpec {
  double p_drop = 0.0;            // chance a ground truth is missed
  double p_fp = 0.0;              // expected false positives per image
  double jitter_sigma = 0.0;      // box-corner noise, pixels
  double tp_score_lo = 0.6, tp_score_hi = 1.0;
  double fp_score_lo = 0.0, fp_score_hi = 0.6;
  double fp_size_min = 6.0, fp_size_max = 60.0;
  double p_distractor_fp = 0.0;   // chance each distractor is reported as a puddle

  void check() const {
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_drop) || !prob(p_distractor_fp)) throw std::invalid_argument("mock detector: probability outside [0,1]");
    if (!(p_fp >= 0.0)) throw std::invalid_argument("mock detector: p_fp must be non-negative");
    if (!(jitter_sigma >= 0.0)) throw std::invalid_argument("mock detector: jitter_sigma must be non-negative");
    if (!(prob(tp_score_lo) && prob(tp_score_hi) && tp_score_lo <= tp_score_hi && prob(fp_score_lo) &&
          prob(fp_score_hi) && fp_score_lo <= fp_score_hi))
      throw std::invalid_argument("mock detector: invalid score range");
    if (!(fp_size_min >= 1.0 && fp_size_min <= fp_size_max))
      throw std::invalid_argument("mock detector: invalid false-positive size range");
  }
};

inline nlohmann::ordered_json to_json(const MockDetectorSpec& s) {
  return {{"p_drop", s.p_drop},           {"p_fp", s.p_fp},
          {"jitter_sigma", s.jitter_sigma}, {"tp_score_lo", s.tp_score_lo},
          {"tp_score_hi", s.tp_score_hi},   {"fp_score_lo", s.fp_score_lo},
          {"fp_score_hi", s.fp_score_hi},   {"fp_size_min", s.fp_size_min},
          {"fp_size_max", s.fp_size_max},   {"p_distractor_fp", s.p_distractor_fp}};
}

inline MockDetectorSpec mock_spec_from_json(const nlohmann::json& doc, MockDetectorSpec base = {}) {
  if (!doc.is_object()) throw DataError("mock detector spec: expected an object");
  try {
    for (auto [key, field] : std::initializer_list<std::pair<const char*, double*>>{
             {"p_drop", &base.p_drop},
             {"p_fp", &base.p_fp},
             {"jitter_sigma", &base.jitter_sigma},
             {"tp_score_lo", &base.tp_score_lo},
             {"tp_score_hi", &base.tp_score_hi},
             {"fp_score_lo", &base.fp_score_lo},
             {"fp_score_hi", &base.fp_score_hi},
             {"fp_size_min", &base.fp_size_min},
             {"fp_size_max", &base.fp_size_max},
             {"p_distractor_fp", &base.p_distractor_fp}})
      if (doc.contains(key)) *field = doc[key].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mock detector spec: ") + e.what());
  }
  return base;
}

namespace detail {

inline BBox jitter_clamp(const BBox& b, double sigma, Rng& rng, int width, int height) {
  double x0 = b.x, y0 = b.y, x1 = b.right(), y1 = b.bottom();
  // Draw all four offsets even at sigma 0 so streams stay aligned.
  const double n0 = rng.normal(), n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
  if (sigma > 0.0) {
    x0 += sigma * n0;
    y0 += sigma * n1;
    x1 += sigma * n2;
    y1 += sigma * n3;
  }
  x0 = std::clamp(x0, 0.0, double(width));
  x1 = std::clamp(x1, 0.0, double(width));
  y0 = std::clamp(y0, 0.0, double(height));
  y1 = std::clamp(y1, 0.0, double(height));
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace detail

/// Detections in image order. Each image draws from its own stream, so
/// adding or removing images leaves the others unchanged. `distractors`, if
/// given, is aligned with ds.images.
inline std::vector<Detection> mock_detect(const Dataset& ds, const MockDetectorSpec& spec, std::uint64_t seed,
                                          std::span<const std::vector<Distractor>> distractors = {}) {
  spec.check();
  if (!distractors.empty() && distractors.size() != ds.images.size())
    throw std::invalid_argument("mock_detect: distractor list not aligned with images");
  const Id category = ds.categories.empty() ? kPuddleCategory : ds.categories.front().id;
  std::unordered_map<Id, std::vector<const AnnotationRecord*>> by_image;
  for (const auto& a : ds.annotations) by_image[a.image_id].push_back(&a);

  std::vector<Detection> out;
  for (std::size_t ii = 0; ii < ds.images.size(); ++ii) {
    const auto& im = ds.images[ii];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(im.id)));
    for (const AnnotationRecord* a : by_image[im.id]) {
      if (a->ignore) continue;
      const bool dropped = rng.uniform() < spec.p_drop;
      const BBox box = detail::jitter_clamp(a->bbox, spec.jitter_sigma, rng, im.width, im.height);
      const double score = rng.uniform(spec.tp_score_lo, spec.tp_score_hi);
      if (!dropped) out.push_back({im.id, a->category_id, box, score});
    }
    if (!distractors.empty()) {
      for (const auto& d : distractors[ii]) {
        const bool hit = rng.uniform() < spec.p_distractor_fp;
        const BBox box = detail::jitter_clamp(d.bbox, spec.jitter_sigma, rng, im.width, im.height);
        const double score = rng.uniform(spec.tp_score_lo, spec.tp_score_hi);
        if (hit) out.push_back({im.id, category, box, score});
      }
    }
    const std::uint64_t n_fp = spec.p_fp > 0.0 ? rng.poisson(spec.p_fp) : 0;
    for (std::uint64_t f = 0; f < n_fp; ++f) {
      const double w = std::min<double>(im.width, rng.log_uniform(spec.fp_size_min, spec.fp_size_max));
      const double h = std::min<double>(im.height, rng.log_uniform(spec.fp_size_min, spec.fp_size_max));
      const double x = rng.uniform(0.0, im.width - w);
      const double y = rng.uniform(0.0, im.height - h);
      out.push_back({im.id, category, BBox{x, y, w, h}, rng.uniform(spec.fp_score_lo, spec.fp_score_hi)});
    }
  }
  return out;
}

}  // namespace puddle_eval
