#pragma once

// IoU, greedy matching and the COCO-style AP/AR metrics.
//
// The accumulation follows the conventions of the COCO reference evaluator:
// per-image detections are ranked by score and capped at max_dets, matched
// greedily per IoU threshold, pooled across images in ascending image id
// order and stably re-sorted by score; precision is made monotone and
// sampled at 101 recall points.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "puddle_eval/coco.hpp"

namespace puddle_eval {

inline constexpr double kUndefinedMetric = -1.0;

inline bool is_defined(double metric) { return metric > kUndefinedMetric; }

// Same arithmetic as numpy.linspace(start, stop, num), endpoint included.
inline std::vector<double> linspace(double start, double stop, std::size_t num) {
  std::vector<double> out(num);
  if (num == 0) return out;
  if (num == 1) {
    out[0] = start;
    return out;
  }
  const double step = (stop - start) / static_cast<double>(num - 1);
  for (std::size_t i = 0; i < num; ++i) out[i] = static_cast<double>(i) * step + start;
  out.back() = stop;
  return out;
}

class IoUThresholds {
 public:
  /// 0.50, 0.55, ..., 0.95
  IoUThresholds() : values_(linspace(0.5, 0.95, 10)) {}

  explicit IoUThresholds(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("IoU thresholds: empty list");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0 && values_[i] <= 1.0))
        throw std::invalid_argument("IoU thresholds: each value must lie in (0, 1]");
      if (i > 0 && !(values_[i] > values_[i - 1]))
        throw std::invalid_argument("IoU thresholds: values must be strictly increasing");
    }
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::optional<std::size_t> index_of(double thr) const {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (std::abs(values_[i] - thr) < 1e-9) return i;
    return std::nullopt;
  }

 private:
  std::vector<double> values_;
};

/// Intersection over union; 0 when the boxes do not overlap.
inline double iou(const BBox& a, const BBox& b) {
  const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  if (w <= 0.0) return 0.0;
  const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (h <= 0.0) return 0.0;
  const double inter = w * h;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Count-based scores. Zero denominators yield nullopt, except that an
// empty prediction set against an empty ground truth has precision 1.
inline std::optional<double> precision(long tp, long fp, long fn = 0) {
  if (tp + fp == 0) return fn == 0 ? std::optional<double>(1.0) : std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

inline std::optional<double> recall(long tp, long fn) {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

inline std::optional<double> f1(double p, double r) {
  if (p + r <= 0.0) return std::nullopt;
  return 2.0 * (p * r) / (p + r);
}

struct MatchResult {
  // Indexed like the input detections.
  std::vector<std::optional<Id>> detection_match;
  std::vector<bool> detection_absorbed;
  // Indexed like the input ground truths.
  std::vector<bool> ground_truth_matched;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

namespace detail {

inline constexpr std::ptrdiff_t kNoMatch = -1;

// Greedy assignment for one image and category. `det_order` lists
// detections in processing order, `gt_order` lists ground truths with
// eligible ones first (ascending id within each block). Writes the matched
// ground-truth index for every detection, or kNoMatch.
template <class IouFn>
void greedy_match(std::span<const std::size_t> det_order, std::span<const std::size_t> gt_order,
                  const std::vector<bool>& gt_ignore, double thr, IouFn&& iou_of,
                  std::vector<std::ptrdiff_t>& det_match) {
  std::vector<bool> taken(gt_ignore.size(), false);
  for (const std::size_t d : det_order) {
    double best = std::min(thr, 1.0 - 1e-10);
    std::ptrdiff_t m = kNoMatch;
    for (const std::size_t g : gt_order) {
      if (taken[g]) continue;
      // An eligible match is never traded for an ignore region.
      if (m != kNoMatch && !gt_ignore[static_cast<std::size_t>(m)] && gt_ignore[g]) break;
      const double v = iou_of(d, g);
      if (v < best) continue;
      if (m != kNoMatch && v == best) continue;  // keep the lower id on ties
      best = v;
      m = static_cast<std::ptrdiff_t>(g);
    }
    det_match[d] = m;
    if (m != kNoMatch) taken[static_cast<std::size_t>(m)] = true;
  }
}

inline std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

inline std::vector<std::size_t> eligible_first(std::span<const AnnotationRecord> gts,
                                               const std::vector<bool>& ignore) {
  std::vector<std::size_t> order(gts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ignore[a] != ignore[b]) return !ignore[a];
    return gts[a].id < gts[b].id;
  });
  return order;
}

}  // namespace detail

/// Matches the detections of one image and category against its ground
/// truths at a single IoU threshold.
inline MatchResult match_detections(std::span<const AnnotationRecord> gts,
                                    std::span<const Detection> dets, double iou_thr) {
  std::vector<bool> ignore(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) ignore[g] = gts[g].ignore;
  const auto det_order = detail::score_order(dets);
  const auto gt_order = detail::eligible_first(gts, ignore);
  std::vector<std::ptrdiff_t> match(dets.size(), detail::kNoMatch);
  detail::greedy_match(det_order, gt_order, ignore, iou_thr,
                       [&](std::size_t d, std::size_t g) { return iou(dets[d].bbox, gts[g].bbox); },
                       match);

  MatchResult r;
  r.detection_match.resize(dets.size());
  r.detection_absorbed.assign(dets.size(), false);
  r.ground_truth_matched.assign(gts.size(), false);
  long eligible = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) eligible += ignore[g] ? 0 : 1;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (match[d] == detail::kNoMatch) {
      ++r.fp;
      continue;
    }
    const auto g = static_cast<std::size_t>(match[d]);
    r.detection_match[d] = gts[g].id;
    r.ground_truth_matched[g] = true;
    if (ignore[g]) {
      r.detection_absorbed[d] = true;
    } else {
      ++r.tp;
    }
  }
  r.fn = eligible - r.tp;
  return r;
}

enum class Metric { AP, AP50, AP75, APs, APm, AR, ARs, ARm };

inline constexpr std::array<Metric, 8> kAllMetrics = {Metric::AP,  Metric::AP50, Metric::AP75,
                                                      Metric::APs, Metric::APm,  Metric::AR,
                                                      Metric::ARs, Metric::ARm};

inline std::string_view metric_name(Metric m) {
  constexpr std::array<std::string_view, 8> names = {"AP",  "AP50", "AP75", "APs",
                                                     "APm", "AR",   "ARs",  "ARm"};
  return names[static_cast<std::size_t>(m)];
}

inline Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics)
    if (metric_name(m) == name) return m;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

/// The eight reported values; an empty size stratum is kUndefinedMetric.
struct MetricReport {
  std::array<double, 8> values{};

  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct EvalOptions {
  IoUThresholds thresholds;
  std::size_t max_dets = 100;
  unsigned threads = 1;
};

/// Precomputes matches for every (category, image, stratum, threshold) once
/// and answers AP/AR queries from them.
class Evaluator {
 public:
  // Stratum 0 is all sizes, then Small and Medium. Large is never reported.
  static constexpr std::size_t kStrata = 3;

  Evaluator(const Dataset& gt, std::span<const Detection> dets, EvalOptions options = {})
      : options_(std::move(options)) {
    if (options_.max_dets == 0) throw std::invalid_argument("max_dets must be positive");
    build(gt, dets);
  }

  const EvalOptions& options() const noexcept { return options_; }

  /// Mean over categories of the 101-point interpolated AP at one threshold;
  /// kUndefinedMetric when no category has eligible ground truth.
  double average_precision(std::size_t thr_index, std::optional<SizeClass> size = {}) const {
    return mean_over_categories(thr_index, stratum_of(size), true);
  }

  double recall(std::size_t thr_index, std::optional<SizeClass> size = {}) const {
    return mean_over_categories(thr_index, stratum_of(size), false);
  }

  MetricReport report() const {
    MetricReport r;
    const auto& thr = options_.thresholds;
    r[Metric::AP] = mean_over_thresholds(0, true);
    r[Metric::AP50] = at_threshold(thr.index_of(0.5), 0, true);
    r[Metric::AP75] = at_threshold(thr.index_of(0.75), 0, true);
    r[Metric::APs] = mean_over_thresholds(1, true);
    r[Metric::APm] = mean_over_thresholds(2, true);
    r[Metric::AR] = mean_over_thresholds(0, false);
    r[Metric::ARs] = mean_over_thresholds(1, false);
    r[Metric::ARm] = mean_over_thresholds(2, false);
    return r;
  }

 private:
  enum : std::uint8_t { kFalsePositive = 0, kTruePositive = 1, kIgnored = 2 };

  struct Cell {
    std::size_t category = 0;
    std::vector<const AnnotationRecord*> gts;
    std::vector<const Detection*> dets;  // score-ranked and capped
    std::array<long, kStrata> eligible{};
    // state[stratum][threshold][det]
    std::array<std::vector<std::vector<std::uint8_t>>, kStrata> state;
  };

  // AP and recall per (category, stratum, threshold); kUndefinedMetric if
  // the category has no eligible ground truth in that stratum.
  struct Summary {
    std::vector<double> ap;
    std::vector<double> rec;
  };

  static std::size_t stratum_of(std::optional<SizeClass> size) {
    if (!size) return 0;
    switch (*size) {
      case SizeClass::Small: return 1;
      case SizeClass::Medium: return 2;
      case SizeClass::Large: break;
    }
    throw std::invalid_argument("large-object stratum is not evaluated");
  }

  static bool in_stratum(std::size_t stratum, double area) {
    if (stratum == 0) return true;
    const SizeClass c = classify_size(area);
    return stratum == 1 ? c == SizeClass::Small : c == SizeClass::Medium;
  }

  void build(const Dataset& gt, std::span<const Detection> dets) {
    std::vector<Id> image_ids;
    image_ids.reserve(gt.images.size());
    for (const auto& im : gt.images) image_ids.push_back(im.id);
    std::sort(image_ids.begin(), image_ids.end());
    for (const auto& c : gt.categories) category_ids_.push_back(c.id);
    std::sort(category_ids_.begin(), category_ids_.end());

    std::unordered_map<Id, std::size_t> image_index;
    for (std::size_t i = 0; i < image_ids.size(); ++i) image_index[image_ids[i]] = i;
    std::unordered_map<Id, std::size_t> category_index;
    for (std::size_t k = 0; k < category_ids_.size(); ++k) category_index[category_ids_[k]] = k;

    const std::size_t n_images = image_ids.size();
    std::vector<Cell> grid(category_ids_.size() * n_images);
    for (const auto& a : gt.annotations) {
      auto ii = image_index.find(a.image_id);
      auto kk = category_index.find(a.category_id);
      if (ii == image_index.end() || kk == category_index.end())
        throw ValidationError("annotations", a.id, "dangling reference");
      grid[kk->second * n_images + ii->second].gts.push_back(&a);
    }
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& d = dets[i];
      auto ii = image_index.find(d.image_id);
      if (ii == image_index.end())
        throw ValidationError("detections", static_cast<Id>(i),
                              "dangling image_id " + std::to_string(d.image_id));
      auto kk = category_index.find(d.category_id);
      if (kk == category_index.end()) continue;  // category absent from ground truth
      grid[kk->second * n_images + ii->second].dets.push_back(&d);
    }

    for (std::size_t k = 0; k < category_ids_.size(); ++k) {
      for (std::size_t i = 0; i < n_images; ++i) {
        Cell& c = grid[k * n_images + i];
        if (c.gts.empty() && c.dets.empty()) continue;
        c.category = k;
        std::sort(c.gts.begin(), c.gts.end(),
                  [](const AnnotationRecord* a, const AnnotationRecord* b) { return a->id < b->id; });
        std::stable_sort(c.dets.begin(), c.dets.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });
        if (c.dets.size() > options_.max_dets) c.dets.resize(options_.max_dets);
        cells_.push_back(std::move(c));
      }
    }

    run_matching();
    summarize();
  }

  void match_cell(Cell& c) const {
    const std::size_t nd = c.dets.size();
    const std::size_t ng = c.gts.size();
    std::vector<double> ious(nd * ng);
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t g = 0; g < ng; ++g) ious[d * ng + g] = iou(c.dets[d]->bbox, c.gts[g]->bbox);

    std::vector<std::size_t> det_order(nd);
    for (std::size_t d = 0; d < nd; ++d) det_order[d] = d;
    std::vector<std::ptrdiff_t> match(nd);
    const auto& thr = options_.thresholds.values();

    for (std::size_t s = 0; s < kStrata; ++s) {
      std::vector<bool> ignore(ng);
      long eligible = 0;
      for (std::size_t g = 0; g < ng; ++g) {
        ignore[g] = c.gts[g]->ignore || !in_stratum(s, c.gts[g]->area());
        eligible += ignore[g] ? 0 : 1;
      }
      c.eligible[s] = eligible;
      std::vector<std::size_t> gt_order(ng);
      for (std::size_t g = 0; g < ng; ++g) gt_order[g] = g;
      std::stable_sort(gt_order.begin(), gt_order.end(),
                       [&](std::size_t a, std::size_t b) { return !ignore[a] && ignore[b]; });

      c.state[s].assign(thr.size(), std::vector<std::uint8_t>(nd, kFalsePositive));
      for (std::size_t t = 0; t < thr.size(); ++t) {
        std::fill(match.begin(), match.end(), detail::kNoMatch);
        detail::greedy_match(det_order, gt_order, ignore, thr[t],
                             [&](std::size_t d, std::size_t g) { return ious[d * ng + g]; }, match);
        auto& st = c.state[s][t];
        for (std::size_t d = 0; d < nd; ++d) {
          if (match[d] != detail::kNoMatch) {
            st[d] = ignore[static_cast<std::size_t>(match[d])] ? kIgnored : kTruePositive;
          } else if (!in_stratum(s, c.dets[d]->bbox.area())) {
            st[d] = kIgnored;  // unmatched and outside the size stratum
          }
        }
      }
    }
  }

  void run_matching() {
    const unsigned workers = std::max(1u, std::min<unsigned>(options_.threads, 64));
    if (workers == 1 || cells_.size() < 2) {
      for (auto& c : cells_) match_cell(c);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells_.size(); i = next++) match_cell(cells_[i]);
      });
    }
  }

  void summarize() {
    const std::size_t nk = category_ids_.size();
    const std::size_t nt = options_.thresholds.size();
    summary_.ap.assign(nk * kStrata * nt, kUndefinedMetric);
    summary_.rec.assign(nk * kStrata * nt, kUndefinedMetric);
    const std::vector<double> rec_thr = linspace(0.0, 1.0, 101);

    for (std::size_t k = 0; k < nk; ++k) {
      // Pool this category's detections: cells are in ascending image order,
      // each already score-ranked, so a stable sort reproduces the
      // reference ordering of ties.
      struct Ref {
        double score;
        std::size_t cell;
        std::size_t det;
      };
      std::vector<Ref> pooled;
      std::vector<std::size_t> cells;
      for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
        if (cells_[ci].category != k) continue;
        cells.push_back(ci);
        for (std::size_t d = 0; d < cells_[ci].dets.size(); ++d)
          pooled.push_back({cells_[ci].dets[d]->score, ci, d});
      }
      std::stable_sort(pooled.begin(), pooled.end(),
                       [](const Ref& a, const Ref& b) { return a.score > b.score; });

      for (std::size_t s = 0; s < kStrata; ++s) {
        long eligible = 0;
        for (std::size_t ci : cells) eligible += cells_[ci].eligible[s];
        if (eligible == 0) continue;
        for (std::size_t t = 0; t < nt; ++t) {
          std::vector<double> rc;
          std::vector<double> pr;
          rc.reserve(pooled.size());
          pr.reserve(pooled.size());
          long tp = 0;
          long fp = 0;
          for (const Ref& r : pooled) {
            const std::uint8_t st = cells_[r.cell].state[s][t][r.det];
            if (st == kTruePositive) ++tp;
            if (st == kFalsePositive) ++fp;
            rc.push_back(static_cast<double>(tp) / static_cast<double>(eligible));
            pr.push_back(tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                     : 0.0);
          }
          for (std::size_t i = pr.size(); i > 1; --i) pr[i - 2] = std::max(pr[i - 2], pr[i - 1]);
          double sum = 0.0;
          for (double r : rec_thr) {
            const auto it = std::lower_bound(rc.begin(), rc.end(), r);
            if (it == rc.end()) break;  // unreachable recall levels contribute 0
            sum += pr[static_cast<std::size_t>(it - rc.begin())];
          }
          const std::size_t idx = (k * kStrata + s) * nt + t;
          summary_.ap[idx] = sum / static_cast<double>(rec_thr.size());
          summary_.rec[idx] = rc.empty() ? 0.0 : rc.back();
        }
      }
    }
  }

  double value(std::size_t k, std::size_t s, std::size_t t, bool ap) const {
    const std::size_t idx = (k * kStrata + s) * options_.thresholds.size() + t;
    return ap ? summary_.ap[idx] : summary_.rec[idx];
  }

  double mean_over_categories(std::size_t t, std::size_t s, bool ap) const {
    if (t >= options_.thresholds.size()) throw std::out_of_range("threshold index");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < category_ids_.size(); ++k) {
      const double v = value(k, s, t, ap);
      if (is_defined(v)) {
        sum += v;
        ++n;
      }
    }
    return n ? sum / static_cast<double>(n) : kUndefinedMetric;
  }

  double mean_over_thresholds(std::size_t s, bool ap) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < category_ids_.size(); ++k) {
      for (std::size_t t = 0; t < options_.thresholds.size(); ++t) {
        const double v = value(k, s, t, ap);
        if (is_defined(v)) {
          sum += v;
          ++n;
        }
      }
    }
    return n ? sum / static_cast<double>(n) : kUndefinedMetric;
  }

  double at_threshold(std::optional<std::size_t> t, std::size_t s, bool ap) const {
    return t ? mean_over_categories(*t, s, ap) : kUndefinedMetric;
  }

  EvalOptions options_;
  std::vector<Id> category_ids_;
  std::vector<Cell> cells_;
  Summary summary_;
};

/// 101-point interpolated AP at a single IoU threshold, optionally
/// restricted to one size class.
inline double average_precision(const Dataset& gt, std::span<const Detection> dets, double iou_thr,
                                std::optional<SizeClass> size = {}, std::size_t max_dets = 100) {
  EvalOptions opt{IoUThresholds({iou_thr}), max_dets, 1};
  return Evaluator(gt, dets, std::move(opt)).average_precision(0, size);
}

inline MetricReport evaluate(const Dataset& gt, std::span<const Detection> dets,
                             const EvalOptions& options = {}) {
  return Evaluator(gt, dets, options).report();
}

}  // namespace puddle_eval
