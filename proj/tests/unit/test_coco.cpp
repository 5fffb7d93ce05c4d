#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_util.hpp"

namespace pe = puddle_eval;

namespace {

const char* kSmallDoc = R"({
  "info": {"description": "kept out of the model"},
  "images": [
    {"id": 1, "file_name": "a.png", "width": 640, "height": 480},
    {"id": 2, "file_name": "b.png", "width": 640, "height": 480}
  ],
  "annotations": [
    {"id": 10, "image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 50], "area": 500},
    {"id": 11, "image_id": 1, "category_id": 1, "bbox": [20, 20, 11, 11], "area": 121, "iscrowd": 0},
    {"id": 12, "image_id": 2, "category_id": 1, "bbox": [5.5, 6, 40, 30], "area": 1200.3, "ignore": true}
  ],
  "categories": [{"id": 1, "name": "puddle"}]
})";

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

pe::Dataset random_dataset(pe::Rng& rng) {
  pe::Dataset ds;
  ds.categories.push_back({1, "puddle"});
  if (rng.bernoulli(0.3)) ds.categories.push_back({2, "other"});
  const int n_images = 1 + static_cast<int>(rng.below(12));
  pe::Id ann = 1;
  for (int i = 0; i < n_images; ++i) {
    ds.images.push_back({100 + i, "img" + std::to_string(i) + ".png", 640, 480});
    const int k = static_cast<int>(rng.below(5));
    for (int j = 0; j < k; ++j) {
      pe::BBox b{std::floor(rng.uniform(0, 600)), std::floor(rng.uniform(0, 440)),
                 std::floor(rng.uniform(1, 40)), std::floor(rng.uniform(1, 40))};
      if (rng.bernoulli(0.3)) b.w = rng.uniform(0.5, 30.0);  // non-integer geometry too
      ds.annotations.push_back({ann++, 100 + i, ds.categories[rng.below(ds.categories.size())].id, b,
                                rng.bernoulli(0.2)});
    }
  }
  return ds;
}

std::set<pe::Id> ignore_set(const pe::Dataset& ds) {
  std::set<pe::Id> out;
  for (const auto& a : ds.annotations)
    if (a.ignore) out.insert(a.id);
  return out;
}

}  // namespace

TEST(CocoParse, CountsMatchDocument) {
  const auto ds = pe::parse_coco(kSmallDoc);
  EXPECT_EQ(ds.images.size(), 2u);
  EXPECT_EQ(ds.annotations.size(), 3u);
  EXPECT_EQ(ds.categories.size(), 1u);
  EXPECT_FALSE(ds.annotations[0].ignore);
  EXPECT_TRUE(ds.annotations[2].ignore);
  EXPECT_DOUBLE_EQ(ds.annotations[2].bbox.x, 5.5);
}

TEST(CocoParse, IscrowdFoldsIntoIgnore) {
  const auto doc = replace_once(kSmallDoc, "\"iscrowd\": 0", "\"iscrowd\": 1");
  EXPECT_TRUE(pe::parse_coco(doc).annotations[1].ignore);
}

TEST(CocoParse, AreaChecksum) {
  // 2 px^2 off: rejected with the annotation id in the message.
  const auto bad = replace_once(kSmallDoc, "\"area\": 500", "\"area\": 502");
  try {
    pe::parse_coco(bad);
    FAIL() << "expected a validation error";
  } catch (const pe::ValidationError& e) {
    EXPECT_EQ(e.record_id(), 10);
    EXPECT_NE(std::string(e.what()).find("id=10"), std::string::npos);
  }
  // Within the 0.5 px^2 tolerance.
  EXPECT_NO_THROW(pe::parse_coco(replace_once(kSmallDoc, "\"area\": 500", "\"area\": 500.4")));
}

TEST(CocoParse, RejectsBrokenDocuments) {
  EXPECT_THROW(pe::parse_coco("{not json"), pe::DataError);
  EXPECT_THROW(pe::parse_coco(R"({"images": [], "annotations": []})"), pe::DataError);

  const auto dangling = replace_once(kSmallDoc, "\"image_id\": 2", "\"image_id\": 7");
  try {
    pe::parse_coco(dangling);
    FAIL();
  } catch (const pe::ValidationError& e) {
    EXPECT_EQ(e.record_id(), 12);
  }
  const auto dup = replace_once(kSmallDoc, "\"id\": 11", "\"id\": 10");
  try {
    pe::parse_coco(dup);
    FAIL();
  } catch (const pe::ValidationError& e) {
    EXPECT_EQ(e.collection(), "annotations");
    EXPECT_EQ(e.record_id(), 10);
  }
  const auto negative = replace_once(replace_once(kSmallDoc, "[20, 20, 11, 11]", "[20, 20, -11, 11]"),
                                     "\"area\": 121", "\"area\": -121");
  try {
    pe::parse_coco(negative);
    FAIL();
  } catch (const pe::ValidationError& e) {
    EXPECT_EQ(e.record_id(), 11);
  }
  EXPECT_THROW(pe::parse_coco(replace_once(kSmallDoc, "\"category_id\": 1, \"bbox\": [0", "\"category_id\": 3, \"bbox\": [0")),
               pe::ValidationError);
}

TEST(CocoWrite, EmptyDatasetHasThreeCollections) {
  const auto doc = nlohmann::json::parse(pe::write_coco({}));
  EXPECT_TRUE(doc.at("images").empty());
  EXPECT_TRUE(doc.at("annotations").empty());
  EXPECT_TRUE(doc.at("categories").empty());
}

TEST(CocoWrite, IgnoreFlagRoundTrips) {
  const auto ds = pe::parse_coco(kSmallDoc);
  const auto back = pe::parse_coco(pe::write_coco(ds));
  EXPECT_EQ(back, ds);
  EXPECT_TRUE(back.annotations[2].ignore);
}

TEST(CocoWrite, ParseOfWriteIsIdentityOnRandomDatasets) {
  pe::Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto ds = random_dataset(rng);
    const std::string text = pe::write_coco(ds);
    const auto back = pe::parse_coco(text);
    ASSERT_EQ(back, ds) << "iteration " << i;
    ASSERT_EQ(pe::write_coco(back), text);
  }
}

TEST(CocoWrite, ThousandImageCorpusIsStable) {
  // 1000 images, 1615 annotations, 284 of the images without any.
  pe::Dataset ds;
  ds.categories.push_back({1, "puddle"});
  pe::Rng rng(99);
  std::vector<int> counts(1000, 0);
  for (int i = 284; i < 1000; ++i) counts[i] = 1;
  for (int extra = 1615 - 716; extra > 0; --extra) ++counts[284 + rng.below(716)];
  rng.shuffle(counts);
  pe::Id ann = 1;
  for (int i = 0; i < 1000; ++i) {
    ds.images.push_back({i + 1, "frame.png", 640, 480});
    for (int k = 0; k < counts[i]; ++k) {
      const double w = 2 + static_cast<double>(rng.below(90));
      const double h = 2 + static_cast<double>(rng.below(90));
      ds.annotations.push_back({ann++, i + 1, 1, {double(rng.below(500)), double(rng.below(380)), w, h}, false});
    }
  }
  const std::string text = pe::write_coco(ds);
  const auto parsed = pe::parse_coco(text);
  EXPECT_EQ(parsed.images.size(), 1000u);
  EXPECT_EQ(parsed.annotations.size(), 1615u);
  std::set<pe::Id> with_objects;
  for (const auto& a : parsed.annotations) with_objects.insert(a.image_id);
  EXPECT_EQ(1000 - with_objects.size(), 284u);
  EXPECT_EQ(pe::write_coco(parsed), text);
}

TEST(Detections, ParseValidatesScoreAndImage) {
  const auto ds = pe::parse_coco(kSmallDoc);
  const auto dets = pe::parse_detections(
      R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9}])", &ds);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(pe::parse_detections(pe::write_detections(dets), &ds), dets);
  EXPECT_THROW(pe::parse_detections(R"([{"image_id": 1, "category_id": 1, "bbox": [0,0,1,1], "score": 1.5}])", &ds),
               pe::ValidationError);
  EXPECT_THROW(pe::parse_detections(R"([{"image_id": 9, "category_id": 1, "bbox": [0,0,1,1], "score": 0.5}])", &ds),
               pe::ValidationError);
  EXPECT_THROW(pe::parse_detections(R"({"image_id": 1})"), pe::DataError);
}

TEST(SizeClass, Boundaries) {
  EXPECT_EQ(pe::classify_size(0.0), pe::SizeClass::Small);
  EXPECT_EQ(pe::classify_size(1024.0), pe::SizeClass::Small);
  EXPECT_EQ(pe::classify_size(std::nextafter(1024.0, 2000.0)), pe::SizeClass::Medium);
  EXPECT_EQ(pe::classify_size(9216.0), pe::SizeClass::Medium);
  EXPECT_EQ(pe::classify_size(std::nextafter(9216.0, 1e5)), pe::SizeClass::Large);
  EXPECT_EQ(pe::classify_size(9217.0), pe::SizeClass::Large);
  EXPECT_THROW(pe::classify_size(-1.0), std::invalid_argument);
}

TEST(Filter, StrictBoundaryAtTenPixels) {
  const auto ds = pe::filter_small_objects(pe::parse_coco(kSmallDoc));
  EXPECT_TRUE(ds.annotations[0].ignore);   // 10 x 50
  EXPECT_FALSE(ds.annotations[1].ignore);  // 11 x 11
  EXPECT_TRUE(ds.annotations[2].ignore);   // already ignored, stays so
  EXPECT_EQ(ds.annotations.size(), 3u);
}

TEST(Filter, CountsMarkedBoxes) {
  pe::Dataset ds;
  ds.images.push_back({1, "x", 640, 480});
  ds.categories.push_back({1, "puddle"});
  for (int i = 0; i < 20; ++i) {
    const double side = i < 5 ? 4.0 + i : 12.0 + i;  // 5 boxes under the threshold
    ds.annotations.push_back({i + 1, 1, 1, {1.0 * i, 1.0 * i, side, 30.0}, false});
  }
  EXPECT_EQ(ignore_set(pe::filter_small_objects(ds)).size(), 5u);
}

TEST(Filter, IdempotentAndMonotone) {
  pe::Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto ds = random_dataset(rng);
    const double t1 = rng.uniform(0, 30), t2 = t1 + rng.uniform(0, 30);
    const auto once = pe::filter_small_objects(ds, t1);
    ASSERT_EQ(pe::filter_small_objects(once, t1), once);
    const auto a = ignore_set(once), b = ignore_set(pe::filter_small_objects(ds, t2));
    ASSERT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    ASSERT_EQ(once.annotations.size(), ds.annotations.size());
  }
}

TEST(Subset, AnnotationsFollowImages) {
  const auto ds = pe::parse_coco(kSmallDoc);
  const std::vector<pe::Id> keep = {2};
  const auto sub = pe::subset_images(ds, keep);
  ASSERT_EQ(sub.images.size(), 1u);
  ASSERT_EQ(sub.annotations.size(), 1u);
  EXPECT_EQ(sub.annotations[0].id, 12);
}
