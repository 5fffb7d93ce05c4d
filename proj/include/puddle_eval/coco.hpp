#pragma once

// COCO-shaped ground truth and detection results: data model, parsing,
// validation and the size/ignore rules applied to puddle annotations.

#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "puddle_eval/errors.hpp"

namespace puddle_eval {

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const noexcept { return w * h; }
  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ImageRecord {
  Id id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct AnnotationRecord {
  Id id = 0;
  Id image_id = 0;
  Id category_id = 0;
  BBox bbox;
  bool ignore = false;

  // The document's area field is only a checksum; geometry is authoritative.
  double area() const noexcept { return bbox.area(); }

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct CategoryRecord {
  Id id = 0;
  std::string name;

  friend bool operator==(const CategoryRecord&, const CategoryRecord&) = default;
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<AnnotationRecord> annotations;
  std::vector<CategoryRecord> categories;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Detection {
  Id image_id = 0;
  Id category_id = 0;
  BBox bbox;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class SizeClass { Small, Medium, Large };

inline constexpr double kSmallMaxArea = 32.0 * 32.0;
inline constexpr double kMediumMaxArea = 96.0 * 96.0;
inline constexpr double kAreaChecksumTolerance = 0.5;
inline constexpr double kDefaultMinExtent = 10.0;

inline SizeClass classify_size(double area) {
  if (!(area >= 0.0)) throw std::invalid_argument("classify_size: area must be non-negative");
  if (area <= kSmallMaxArea) return SizeClass::Small;
  if (area <= kMediumMaxArea) return SizeClass::Medium;
  return SizeClass::Large;
}

inline std::string_view to_string(SizeClass s) {
  switch (s) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
  }
  return "?";
}

/// Checks referential integrity, id uniqueness and geometry of a dataset.
/// Throws ValidationError naming the first offending record.
inline void validate(const Dataset& ds) {
  std::unordered_set<Id> image_ids;
  for (const auto& im : ds.images) {
    if (!image_ids.insert(im.id).second) throw ValidationError("images", im.id, "duplicate id");
    if (im.width <= 0 || im.height <= 0)
      throw ValidationError("images", im.id, "width and height must be positive");
  }
  std::unordered_set<Id> category_ids;
  for (const auto& c : ds.categories) {
    if (!category_ids.insert(c.id).second) throw ValidationError("categories", c.id, "duplicate id");
  }
  std::unordered_set<Id> ann_ids;
  for (const auto& a : ds.annotations) {
    if (!ann_ids.insert(a.id).second) throw ValidationError("annotations", a.id, "duplicate id");
    if (!image_ids.contains(a.image_id))
      throw ValidationError("annotations", a.id, "dangling image_id " + std::to_string(a.image_id));
    if (!category_ids.contains(a.category_id))
      throw ValidationError("annotations", a.id,
                            "dangling category_id " + std::to_string(a.category_id));
    if (!std::isfinite(a.bbox.x) || !std::isfinite(a.bbox.y) || !std::isfinite(a.bbox.w) ||
        !std::isfinite(a.bbox.h))
      throw ValidationError("annotations", a.id, "non-finite bbox");
    if (a.bbox.w < 0.0 || a.bbox.h < 0.0)
      throw ValidationError("annotations", a.id, "negative bbox extent");
  }
}

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline const json& require(const json& obj, const char* key, const char* collection,
                           std::optional<Id> id) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(collection, id, std::string("missing field '") + key + "'");
  return *it;
}

inline Id require_id(const json& obj, const char* key, const char* collection,
                     std::optional<Id> id) {
  const json& v = require(obj, key, collection, id);
  if (!v.is_number_integer())
    throw ValidationError(collection, id, std::string("field '") + key + "' must be an integer");
  return v.get<Id>();
}

inline double require_number(const json& v, const char* what, const char* collection,
                             std::optional<Id> id) {
  if (!v.is_number()) throw ValidationError(collection, id, std::string(what) + " must be numeric");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(collection, id, std::string(what) + " must be finite");
  return d;
}

inline BBox parse_bbox(const json& v, const char* collection, std::optional<Id> id) {
  if (!v.is_array() || v.size() != 4)
    throw ValidationError(collection, id, "bbox must be an array [x, y, w, h]");
  BBox b{require_number(v[0], "bbox", collection, id), require_number(v[1], "bbox", collection, id),
         require_number(v[2], "bbox", collection, id), require_number(v[3], "bbox", collection, id)};
  if (b.w < 0.0 || b.h < 0.0) throw ValidationError(collection, id, "negative bbox extent");
  return b;
}

inline bool parse_flag(const json& v, const char* what, std::optional<Id> id) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<long long>() != 0;
  throw ValidationError("annotations", id, std::string(what) + " must be boolean or integer");
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed document: ") + e.what());
  }
}

inline const json& require_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array())
    throw DataError(std::string("malformed document: top-level '") + key + "' must be an array");
  return *it;
}

inline ordered_json bbox_json(const BBox& b) { return ordered_json::array({b.x, b.y, b.w, b.h}); }

}  // namespace detail

/// Parses a COCO annotation document. Unknown keys are ignored; `iscrowd`
/// is folded into the ignore flag.
inline Dataset parse_coco(std::string_view text) {
  using detail::json;
  const json doc = detail::parse_json(text);
  if (!doc.is_object()) throw DataError("malformed document: top level must be an object");

  Dataset ds;
  for (const json& im : detail::require_array(doc, "images")) {
    if (!im.is_object()) throw ValidationError("images", std::nullopt, "record must be an object");
    ImageRecord r;
    r.id = detail::require_id(im, "id", "images", std::nullopt);
    const json& name = detail::require(im, "file_name", "images", r.id);
    if (!name.is_string()) throw ValidationError("images", r.id, "file_name must be a string");
    r.file_name = name.get<std::string>();
    const json& w = detail::require(im, "width", "images", r.id);
    const json& h = detail::require(im, "height", "images", r.id);
    if (!w.is_number_integer() || !h.is_number_integer())
      throw ValidationError("images", r.id, "width and height must be integers");
    r.width = w.get<int>();
    r.height = h.get<int>();
    ds.images.push_back(std::move(r));
  }
  for (const json& c : detail::require_array(doc, "categories")) {
    if (!c.is_object()) throw ValidationError("categories", std::nullopt, "record must be an object");
    CategoryRecord r;
    r.id = detail::require_id(c, "id", "categories", std::nullopt);
    const json& name = detail::require(c, "name", "categories", r.id);
    if (!name.is_string()) throw ValidationError("categories", r.id, "name must be a string");
    r.name = name.get<std::string>();
    ds.categories.push_back(std::move(r));
  }
  for (const json& a : detail::require_array(doc, "annotations")) {
    if (!a.is_object()) throw ValidationError("annotations", std::nullopt, "record must be an object");
    AnnotationRecord r;
    r.id = detail::require_id(a, "id", "annotations", std::nullopt);
    r.image_id = detail::require_id(a, "image_id", "annotations", r.id);
    r.category_id = detail::require_id(a, "category_id", "annotations", r.id);
    r.bbox = detail::parse_bbox(detail::require(a, "bbox", "annotations", r.id), "annotations", r.id);
    if (auto it = a.find("area"); it != a.end()) {
      const double area = detail::require_number(*it, "area", "annotations", r.id);
      if (std::abs(area - r.bbox.area()) > kAreaChecksumTolerance)
        throw ValidationError("annotations", r.id,
                              "area " + std::to_string(area) + " does not match bbox w*h " +
                                  std::to_string(r.bbox.area()));
    }
    if (auto it = a.find("ignore"); it != a.end()) r.ignore = detail::parse_flag(*it, "ignore", r.id);
    if (auto it = a.find("iscrowd"); it != a.end())
      r.ignore = r.ignore || detail::parse_flag(*it, "iscrowd", r.id);
    ds.annotations.push_back(r);
  }
  validate(ds);
  return ds;
}

inline std::string write_coco(const Dataset& ds) {
  using detail::ordered_json;
  ordered_json doc = ordered_json::object();
  doc["images"] = ordered_json::array();
  doc["annotations"] = ordered_json::array();
  doc["categories"] = ordered_json::array();
  for (const auto& im : ds.images) {
    doc["images"].push_back(
        {{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  for (const auto& a : ds.annotations) {
    doc["annotations"].push_back({{"id", a.id},
                                  {"image_id", a.image_id},
                                  {"category_id", a.category_id},
                                  {"bbox", detail::bbox_json(a.bbox)},
                                  {"area", a.area()},
                                  {"ignore", a.ignore ? 1 : 0}});
  }
  for (const auto& c : ds.categories) doc["categories"].push_back({{"id", c.id}, {"name", c.name}});
  return doc.dump(1) + "\n";
}

/// Parses a flat detection-results list. When `against` is given, every
/// image_id must resolve within it.
inline std::vector<Detection> parse_detections(std::string_view text,
                                               const Dataset* against = nullptr) {
  using detail::json;
  const json doc = detail::parse_json(text);
  if (!doc.is_array()) throw DataError("malformed document: detection results must be a list");
  std::unordered_set<Id> images;
  if (against)
    for (const auto& im : against->images) images.insert(im.id);

  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& d = doc[i];
    const auto index = static_cast<Id>(i);
    if (!d.is_object()) throw ValidationError("detections", index, "record must be an object");
    Detection r;
    r.image_id = detail::require_id(d, "image_id", "detections", index);
    r.category_id = detail::require_id(d, "category_id", "detections", index);
    r.bbox = detail::parse_bbox(detail::require(d, "bbox", "detections", index), "detections", index);
    r.score = detail::require_number(detail::require(d, "score", "detections", index), "score",
                                     "detections", index);
    if (r.score < 0.0 || r.score > 1.0)
      throw ValidationError("detections", index, "score must lie in [0, 1]");
    if (against && !images.contains(r.image_id))
      throw ValidationError("detections", index,
                            "dangling image_id " + std::to_string(r.image_id));
    out.push_back(r);
  }
  return out;
}

inline std::string write_detections(std::span<const Detection> dets) {
  using detail::ordered_json;
  ordered_json doc = ordered_json::array();
  for (const auto& d : dets) {
    doc.push_back({{"image_id", d.image_id},
                   {"category_id", d.category_id},
                   {"bbox", detail::bbox_json(d.bbox)},
                   {"score", d.score}});
  }
  return doc.dump(1) + "\n";
}

/// Demotes annotations whose width or height is at most `threshold` pixels
/// to ignore regions. Nothing is removed.
inline Dataset filter_small_objects(const Dataset& ds, double threshold = kDefaultMinExtent) {
  Dataset out = ds;
  for (auto& a : out.annotations) {
    if (a.bbox.w <= threshold || a.bbox.h <= threshold) a.ignore = true;
  }
  return out;
}

/// Restricts a dataset to the given image ids; annotations follow their image.
inline Dataset subset_images(const Dataset& ds, std::span<const Id> image_ids) {
  const std::unordered_set<Id> keep(image_ids.begin(), image_ids.end());
  Dataset out;
  out.categories = ds.categories;
  for (const auto& im : ds.images)
    if (keep.contains(im.id)) out.images.push_back(im);
  for (const auto& a : ds.annotations)
    if (keep.contains(a.image_id)) out.annotations.push_back(a);
  return out;
}

inline std::vector<Detection> subset_detections(std::span<const Detection> dets,
                                                std::span<const Id> image_ids) {
  const std::unordered_set<Id> keep(image_ids.begin(), image_ids.end());
  std::vector<Detection> out;
  for (const auto& d : dets)
    if (keep.contains(d.image_id)) out.push_back(d);
  return out;
}

}  // namespace puddle_eval
