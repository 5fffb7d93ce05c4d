#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pe = puddle_eval;

namespace {

pe::RawFrame random_raw(pe::Rng& rng, int w, int h) {
  pe::RawFrame f(w, h);
  for (auto& v : f.values) v = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
  return f;
}

pe::GrayFrame random_gray(pe::Rng& rng, int w, int h) {
  pe::GrayFrame f(w, h);
  for (auto& v : f.values) v = static_cast<std::uint8_t>(rng.below(256));
  return f;
}

std::vector<pe::BBox> random_boxes(pe::Rng& rng, int w, int h, int n) {
  std::vector<pe::BBox> out;
  for (int i = 0; i < n; ++i) {
    const double bw = std::floor(rng.uniform(1, w / 2.0)), bh = std::floor(rng.uniform(1, h / 2.0));
    out.push_back({std::floor(rng.uniform(0, w - bw)), std::floor(rng.uniform(0, h - bh)), bw, bh});
  }
  return out;
}

}  // namespace

TEST(Normalize, EndpointsMidpointAndClamp) {
  const pe::CalibrationRange cal{1000.0, 3000.0};
  EXPECT_EQ(pe::normalize_sample(1000, cal), 0);
  EXPECT_EQ(pe::normalize_sample(3000, cal), 255);
  EXPECT_EQ(pe::normalize_sample(2000, cal), 128);  // 127.5 rounds up
  EXPECT_EQ(pe::normalize_sample(-32768, cal), 0);
  EXPECT_EQ(pe::normalize_sample(32767, cal), 255);

  pe::RawFrame raw(4, 1);
  raw.values = {999, 1000, 3000, 3001};
  const auto g = pe::normalize_frame(raw, cal);
  EXPECT_EQ(g.values, (std::vector<std::uint8_t>{0, 0, 255, 255}));
}

TEST(Normalize, RejectsEmptyRange) {
  pe::RawFrame raw(2, 2);
  EXPECT_THROW(pe::normalize_frame(raw, {5.0, 5.0}), std::invalid_argument);
  EXPECT_THROW(pe::normalize_frame(raw, {6.0, 5.0}), std::invalid_argument);
}

TEST(Normalize, MonotoneInRawValue) {
  const pe::CalibrationRange cal{-500.0, 7000.0};
  int prev = 0;
  for (int v = -32768; v <= 32767; v += 7) {
    const int g = pe::normalize_sample(v, cal);
    ASSERT_GE(g, prev);
    prev = g;
  }
}

TEST(Channels, TripledChannelsAreEqual) {
  pe::GrayFrame one(1, 1);
  one.values[0] = 77;
  const auto rgb = pe::triple_channels(one);
  EXPECT_EQ(rgb.values, (std::vector<std::uint8_t>{77, 77, 77}));

  pe::Rng rng(3);
  const auto g = random_gray(rng, 13, 7);
  const auto back = pe::read_ppm(pe::write_ppm(pe::triple_channels(g)));
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(back.at(x, y, c), g.at(x, y));
}

TEST(FileFormats, RawAndPgmRoundTrip) {
  pe::Rng rng(4);
  const auto raw = random_raw(rng, 17, 9);
  const std::string bytes = pe::write_raw_frame(raw);
  EXPECT_EQ(bytes.size(), 16u + 2u * 17 * 9);
  EXPECT_EQ(bytes.substr(0, 4), "THRM");
  EXPECT_EQ(pe::read_raw_frame(bytes), raw);
  EXPECT_THROW(pe::read_raw_frame(bytes.substr(0, bytes.size() - 1)), pe::DataError);
  EXPECT_THROW(pe::read_raw_frame("XXXX" + bytes.substr(4)), pe::DataError);

  const auto g = random_gray(rng, 5, 3);
  const std::string pgm = pe::write_pgm(g);
  EXPECT_EQ(pgm.substr(0, 2), "P5");
  EXPECT_EQ(pe::read_pgm(pgm), g);
}

TEST(FileFormats, RawIsLittleEndianSigned) {
  pe::RawFrame f(2, 1);
  f.values = {-2, 0x1234};
  const std::string b = pe::write_raw_frame(f);
  EXPECT_EQ(static_cast<unsigned char>(b[16]), 0xFE);
  EXPECT_EQ(static_cast<unsigned char>(b[17]), 0xFF);
  EXPECT_EQ(static_cast<unsigned char>(b[18]), 0x34);
  EXPECT_EQ(static_cast<unsigned char>(b[19]), 0x12);
}

TEST(Flip, HorizontalFormulaAndSymmetry) {
  pe::GrayFrame img(640, 480);
  const std::vector<pe::BBox> boxes = {{0, 0, 10, 10}, {310, 230, 20, 20}};
  const auto h = pe::flip(img, boxes, pe::FlipAxis::Horizontal);
  EXPECT_EQ(h.boxes[0], (pe::BBox{630, 0, 10, 10}));
  const auto v = pe::flip(img, std::vector<pe::BBox>{{310, 230, 20, 20}}, pe::FlipAxis::Vertical);
  EXPECT_EQ(h.boxes[1], boxes[1]);
  EXPECT_EQ(v.boxes[0], boxes[1]);
}

TEST(Flip, RejectsOutOfBoundsBoxes) {
  pe::GrayFrame img(10, 10);
  EXPECT_THROW(pe::flip(img, std::vector<pe::BBox>{{5, 5, 6, 1}}, pe::FlipAxis::Horizontal), std::invalid_argument);
}

TEST(Flip, InvolutionOnRandomFrames) {
  pe::Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
    const auto img = random_gray(rng, w, h);
    const auto boxes = random_boxes(rng, w, h, 3);
    for (auto axis : {pe::FlipAxis::Horizontal, pe::FlipAxis::Vertical}) {
      const auto once = pe::flip(img, boxes, axis);
      const auto twice = pe::flip(once.image, once.boxes, axis);
      ASSERT_EQ(twice.image, img);
      ASSERT_EQ(twice.boxes, boxes);
      for (std::size_t b = 0; b < boxes.size(); ++b) ASSERT_DOUBLE_EQ(once.boxes[b].area(), boxes[b].area());
    }
  }
}

TEST(Rotate, ZeroIsIdentity) {
  pe::Rng rng(9);
  const auto img = random_gray(rng, 31, 17);
  const auto boxes = random_boxes(rng, 31, 17, 4);
  const auto r = pe::rotate(img, boxes, 0.0);
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.boxes, boxes);
  EXPECT_EQ(pe::rotate(img, boxes, 360.0).image, img);
  const std::vector<pe::BBox> fractional = {{0.1, 0.3, 7.7, 2.9}, {3.3, 4.4, 0.0, 1.0}};
  EXPECT_EQ(pe::rotate(img, fractional, 0.0).boxes, fractional);
}

TEST(Rotate, HalfTurnMapsBoxesThroughCenter) {
  pe::GrayFrame img(640, 480);
  img.at(0, 0) = 9;
  const auto r = pe::rotate(img, std::vector<pe::BBox>{{10, 20, 30, 40}}, 180.0);
  ASSERT_EQ(r.boxes.size(), 1u);
  EXPECT_EQ(r.boxes[0], (pe::BBox{640 - 10 - 30, 480 - 20 - 40, 30, 40}));
  EXPECT_EQ(r.image.at(639, 479), 9);
}

TEST(Rotate, QuarterTurnOnSquareCanvasSwapsDimensions) {
  pe::GrayFrame img(100, 100);
  const auto r = pe::rotate(img, std::vector<pe::BBox>{{10, 20, 30, 15}}, 90.0);
  ASSERT_EQ(r.boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(r.boxes[0].w, 15.0);
  EXPECT_DOUBLE_EQ(r.boxes[0].h, 30.0);
  // Four quarter turns restore the image exactly.
  pe::Rng rng(10);
  const auto g = random_gray(rng, 20, 20);
  auto cur = pe::Augmented<pe::GrayFrame>{g, {}};
  for (int i = 0; i < 4; ++i) cur = pe::rotate(cur.image, cur.boxes, 90.0);
  EXPECT_EQ(cur.image, g);
}

TEST(Rotate, InverseRotationKeepsHullsAndStaysOnCanvas) {
  pe::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const int w = 50 + static_cast<int>(rng.below(100)), h = 50 + static_cast<int>(rng.below(100));
    const pe::GrayFrame img(w, h);
    // Boxes near the center survive both rotations without clipping.
    std::vector<pe::BBox> boxes;
    const double cx = w / 2.0, cy = h / 2.0, r = std::min(w, h) / 2.0 / std::sqrt(2.0) / 2.0;
    for (int b = 0; b < 3; ++b) {
      const double bw = rng.uniform(1, r), bh = rng.uniform(1, r);
      boxes.push_back({cx - rng.uniform(0, r), cy - rng.uniform(0, r), bw, bh});
    }
    const double a = rng.uniform(0, 360);
    const auto fwd = pe::rotate(img, boxes, a);
    for (const auto& b : fwd.boxes) {
      ASSERT_GE(b.x, 0.0);
      ASSERT_GE(b.y, 0.0);
      ASSERT_LE(b.right(), w + 1e-9);
      ASSERT_LE(b.bottom(), h + 1e-9);
    }
    const auto back = pe::rotate(fwd.image, fwd.boxes, 360.0 - a);
    ASSERT_EQ(back.boxes.size(), boxes.size());
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      // The hull of a hull contains the original box.
      ASSERT_LE(back.boxes[b].x, boxes[b].x + 1e-6);
      ASSERT_LE(back.boxes[b].y, boxes[b].y + 1e-6);
      ASSERT_GE(back.boxes[b].right(), boxes[b].right() - 1e-6);
      ASSERT_GE(back.boxes[b].bottom(), boxes[b].bottom() - 1e-6);
    }
  }
  // Multiples of 90 degrees restore boxes exactly (within 1 px).
  const pe::GrayFrame sq(64, 64);
  const std::vector<pe::BBox> boxes = {{3, 5, 10, 20}, {40, 40, 24, 24}};
  for (double a : {90.0, 180.0, 270.0}) {
    const auto fwd = pe::rotate(sq, boxes, a);
    const auto back = pe::rotate(fwd.image, fwd.boxes, 360.0 - a);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      EXPECT_NEAR(back.boxes[b].x, boxes[b].x, 1.0);
      EXPECT_NEAR(back.boxes[b].w, boxes[b].w, 1.0);
    }
  }
}

TEST(Rotate, DropsBoxesRotatedOffCanvas) {
  const pe::GrayFrame img(200, 20);
  const auto r = pe::rotate(img, std::vector<pe::BBox>{{0, 0, 5, 5}}, 90.0);
  EXPECT_TRUE(r.boxes.empty());
}

TEST(Augment, ZeroPolicyIsIdentity) {
  pe::Rng rng(12);
  const auto img = random_gray(rng, 16, 12);
  const auto boxes = random_boxes(rng, 16, 12, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = pe::augment_sample(img, boxes, pe::AugmentPolicy{0, 0, 0}, seed);
    ASSERT_FALSE(r.any_applied());
    ASSERT_EQ(r.image, img);
    ASSERT_EQ(r.boxes, boxes);
  }
}

TEST(Augment, DeterministicPerSeedAndInBounds) {
  pe::Rng rng(13);
  const auto img = random_gray(rng, 40, 30);
  const auto boxes = random_boxes(rng, 40, 30, 4);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto a = pe::augment_sample(img, boxes, {}, seed);
    const auto b = pe::augment_sample(img, boxes, {}, seed);
    ASSERT_EQ(a.image, b.image);
    ASSERT_EQ(a.boxes, b.boxes);
    for (const auto& bx : a.boxes) {
      ASSERT_GE(bx.x, -1e-9);
      ASSERT_LE(bx.right(), 40 + 1e-9);
      ASSERT_LE(bx.bottom(), 30 + 1e-9);
    }
  }
}
