#pragma once

// Hyperparameter grid and the modified nested cross-validation split plan:
// every (outer, inner) fold pair becomes one run that is tested directly on
// the outer test fold, so each hyperparameter combination yields
// k_outer * k_inner results and nothing is retrained.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "puddle_eval/errors.hpp"
#include "puddle_eval/rng.hpp"

namespace puddle_eval {

enum class LossWeighting { Original, Reduced100x };
enum class TrainingStatus { Pretrained, Untrained };

struct Hpc {
  int batch_size = 16;
  LossWeighting loss = LossWeighting::Original;
  TrainingStatus training = TrainingStatus::Pretrained;

  /// "<batch>_<L|l>_<p|u>", e.g. "4_L_p".
  std::string name() const {
    return std::to_string(batch_size) + (loss == LossWeighting::Original ? "_L_" : "_l_") +
           (training == TrainingStatus::Pretrained ? "p" : "u");
  }

  static Hpc parse(std::string_view token) {
    const auto bad = [&] { return std::invalid_argument("invalid HPC name '" + std::string(token) + "'"); };
    const auto first = token.find('_');
    if (first == std::string_view::npos || token.size() != first + 4 || token[first + 2] != '_') throw bad();
    Hpc h;
    const std::string_view batch = token.substr(0, first);
    if (batch == "4") {
      h.batch_size = 4;
    } else if (batch == "16") {
      h.batch_size = 16;
    } else {
      throw bad();
    }
    const char loss = token[first + 1];
    const char status = token[first + 3];
    if (loss != 'L' && loss != 'l') throw bad();
    if (status != 'p' && status != 'u') throw bad();
    h.loss = loss == 'L' ? LossWeighting::Original : LossWeighting::Reduced100x;
    h.training = status == 'p' ? TrainingStatus::Pretrained : TrainingStatus::Untrained;
    return h;
  }

  friend bool operator==(const Hpc&, const Hpc&) = default;
};

/// The eight combinations in grid order: training status outermost, then
/// batch size 16 before 4, then original before reduced loss weighting.
inline std::vector<Hpc> hpc_grid() {
  std::vector<Hpc> out;
  for (auto status : {TrainingStatus::Pretrained, TrainingStatus::Untrained})
    for (int batch : {16, 4})
      for (auto loss : {LossWeighting::Original, LossWeighting::Reduced100x})
        out.push_back({batch, loss, status});
  return out;
}

/// Column order of the per-model result tables (batch 4 first).
inline std::vector<Hpc> hpc_table_order() {
  std::vector<Hpc> out;
  for (int batch : {4, 16})
    for (auto loss : {LossWeighting::Original, LossWeighting::Reduced100x})
      for (auto status : {TrainingStatus::Pretrained, TrainingStatus::Untrained})
        out.push_back({batch, loss, status});
  return out;
}

struct RunSplit {
  int outer_fold = 0;
  int inner_fold = 0;
  std::vector<Id> train_ids;
  std::vector<Id> val_ids;
  std::vector<Id> test_ids;

  friend bool operator==(const RunSplit&, const RunSplit&) = default;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  int k_outer = 5;
  int k_inner = 5;
  std::vector<RunSplit> runs;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

namespace detail {

// Contiguous near-equal chunks; the first (n % k) chunks take one extra.
template <class T>
std::vector<std::vector<T>> chunk(const std::vector<T>& items, int k) {
  std::vector<std::vector<T>> out(static_cast<std::size_t>(k));
  const std::size_t base = items.size() / static_cast<std::size_t>(k);
  const std::size_t extra = items.size() % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < out.size(); ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    out[f].assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                  items.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

inline std::vector<Id> sorted(std::vector<Id> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Seeded shuffle of the (sorted) id set, outer folds as test sets, inner
/// folds of each outer training portion as validation sets. Output id lists
/// are sorted ascending.
inline SplitPlan plan_splits(std::span<const Id> image_ids, int k_outer = 5, int k_inner = 5,
                             std::uint64_t seed = 0) {
  if (k_outer < 2 || k_inner < 2) throw std::invalid_argument("plan_splits: k must be at least 2");
  if (image_ids.size() < static_cast<std::size_t>(k_outer) * static_cast<std::size_t>(k_inner))
    throw std::invalid_argument("plan_splits: need at least k_outer*k_inner images, got " +
                                std::to_string(image_ids.size()));
  std::vector<Id> ids = detail::sorted({image_ids.begin(), image_ids.end()});
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("plan_splits: duplicate image id");

  Rng rng(seed);
  rng.shuffle(ids);
  const auto outer = detail::chunk(ids, k_outer);

  SplitPlan plan{seed, k_outer, k_inner, {}};
  for (int o = 0; o < k_outer; ++o) {
    std::vector<Id> pool;
    for (int f = 0; f < k_outer; ++f)
      if (f != o) pool.insert(pool.end(), outer[f].begin(), outer[f].end());
    const auto inner = detail::chunk(pool, k_inner);
    for (int i = 0; i < k_inner; ++i) {
      RunSplit run;
      run.outer_fold = o;
      run.inner_fold = i;
      run.test_ids = detail::sorted(outer[o]);
      run.val_ids = detail::sorted(inner[i]);
      for (int f = 0; f < k_inner; ++f)
        if (f != i) run.train_ids.insert(run.train_ids.end(), inner[f].begin(), inner[f].end());
      run.train_ids = detail::sorted(std::move(run.train_ids));
      plan.runs.push_back(std::move(run));
    }
  }
  return plan;
}

inline constexpr std::string_view kPlanPrng = "mt19937_64+fisher-yates";

inline std::string write_plan(const SplitPlan& plan) {
  nlohmann::ordered_json doc;
  doc["seed"] = plan.seed;
  doc["prng"] = kPlanPrng;
  doc["k_outer"] = plan.k_outer;
  doc["k_inner"] = plan.k_inner;
  doc["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : plan.runs) {
    doc["runs"].push_back({{"outer_fold", r.outer_fold},
                           {"inner_fold", r.inner_fold},
                           {"train", r.train_ids},
                           {"val", r.val_ids},
                           {"test", r.test_ids}});
  }
  return doc.dump(1) + "\n";
}

inline SplitPlan parse_plan(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text.begin(), text.end());
    SplitPlan plan;
    plan.seed = doc.at("seed").get<std::uint64_t>();
    plan.k_outer = doc.at("k_outer").get<int>();
    plan.k_inner = doc.at("k_inner").get<int>();
    for (const auto& r : doc.at("runs")) {
      plan.runs.push_back({r.at("outer_fold").get<int>(), r.at("inner_fold").get<int>(),
                           r.at("train").get<std::vector<Id>>(), r.at("val").get<std::vector<Id>>(),
                           r.at("test").get<std::vector<Id>>()});
    }
    if (plan.runs.size() != static_cast<std::size_t>(plan.k_outer) * plan.k_inner)
      throw DataError("split plan: run count does not equal k_outer*k_inner");
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split plan: ") + e.what());
  }
}

/// 1-based epoch with the highest validation AP; the earliest wins ties.
inline std::size_t select_best_epoch(std::span<const double> validation_ap) {
  if (validation_ap.empty()) throw std::invalid_argument("select_best_epoch: empty log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < validation_ap.size(); ++i)
    if (validation_ap[i] > validation_ap[best]) best = i;
  return best + 1;
}

}  // namespace puddle_eval
