#pragma once

// Per-run metric records, mean/std aggregation into model x HPC x metric
// tables, best-HPC selection and text renderers (markdown, CSV, figure data).

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "puddle_eval/errors.hpp"
#include "puddle_eval/metrics.hpp"
#include "puddle_eval/plan.hpp"
#include "puddle_eval/stats.hpp"

namespace puddle_eval {

inline constexpr std::string_view kPrimaryTest = "primary-test";
inline constexpr std::string_view kRobustnessTest = "robustness-test";

struct RunResult {
  int run = 1;
  std::string model;
  std::string hpc;
  std::string dataset{kPrimaryTest};
  MetricReport metrics;

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct AggregateCell {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

enum class TableStyle { Markdown, Csv };
enum class DecimalMark { Period, Comma };

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw DataError(std::string(what) + ": not a number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> csv_split(std::string_view line, char sep) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == sep) {
      out.emplace_back();
    } else if (c != '\r') {
      out.back().push_back(c);
    }
  }
  if (quoted) throw DataError("csv: unterminated quote");
  return out;
}

inline std::string csv_field(std::string_view s, char sep) {
  if (s.find_first_of(std::string{sep, '"', '\n', '\r'}) == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    pos = end + 1;
  }
  return lines;
}

// Known HPC names in table order, anything else afterwards by name.
inline std::pair<int, std::string> hpc_sort_key(const std::string& name) {
  const auto order = hpc_table_order();
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i].name() == name) return {static_cast<int>(i), {}};
  return {static_cast<int>(order.size()), name};
}

// Percent with one decimal, half-up; returns tenths of a percent.
inline long long tenths_of_percent(double fraction) {
  return static_cast<long long>(std::floor(fraction * 1000.0 + 0.5 + 1e-9));
}

inline std::string format_percent(double fraction, DecimalMark mark) {
  const long long t = tenths_of_percent(fraction);
  const long long whole = (t < 0 ? -t : t) / 10;
  const long long frac = (t < 0 ? -t : t) % 10;
  return std::string(t < 0 ? "-" : "") + std::to_string(whole) + (mark == DecimalMark::Comma ? "," : ".") +
         std::to_string(frac);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// --- metric documents -------------------------------------------------------

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json doc;
  for (Metric m : kAllMetrics) doc[std::string(metric_name(m))] = r[m];
  return doc;
}

inline MetricReport metric_report_from_json(const nlohmann::json& doc) {
  MetricReport r;
  try {
    for (Metric m : kAllMetrics) r[m] = doc.at(std::string(metric_name(m))).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metric report: ") + e.what());
  }
  return r;
}

// --- run-result CSV ---------------------------------------------------------

inline std::string run_results_header() {
  std::string h = "run_id,model,hpc,dataset";
  for (Metric m : kAllMetrics) h += "," + std::string(metric_name(m));
  return h;
}

inline std::string write_run_results(std::span<const RunResult> results) {
  std::string out = run_results_header() + "\n";
  for (const auto& r : results) {
    out += std::to_string(r.run) + "," + detail::csv_field(r.model, ',') + "," + detail::csv_field(r.hpc, ',') +
           "," + detail::csv_field(r.dataset, ',');
    for (Metric m : kAllMetrics) out += "," + detail::format_double(r.metrics[m]);
    out += "\n";
  }
  return out;
}

/// Columns are located by header name; "dataset" may be absent, in which
/// case every row belongs to the primary test set.
inline std::vector<RunResult> parse_run_results(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw DataError("run results: missing header");
  const auto header = detail::csv_split(lines[0], ',');
  const auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  const auto required = [&](std::string_view name) {
    auto c = column(name);
    if (!c) throw DataError("run results: missing column '" + std::string(name) + "'");
    return *c;
  };
  const std::size_t c_run = required("run_id"), c_model = required("model"), c_hpc = required("hpc");
  const auto c_dataset = column("dataset");
  std::array<std::size_t, 8> c_metric{};
  for (Metric m : kAllMetrics) c_metric[static_cast<std::size_t>(m)] = required(metric_name(m));

  std::vector<RunResult> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = detail::csv_split(lines[li], ',');
    const std::string where = "run results line " + std::to_string(li + 1);
    if (f.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
    RunResult r;
    const double run = detail::parse_double(f[c_run], where);
    if (run != std::floor(run)) throw DataError(where + ": run_id must be an integer");
    r.run = static_cast<int>(run);
    r.model = f[c_model];
    r.hpc = f[c_hpc];
    if (c_dataset) r.dataset = f[*c_dataset];
    for (Metric m : kAllMetrics) {
      const double v = detail::parse_double(f[c_metric[static_cast<std::size_t>(m)]], where);
      if (is_defined(v) && (v < 0.0 || v > 1.0))
        throw DataError(where + ": " + std::string(metric_name(m)) + " outside [0,1]");
      r.metrics[m] = is_defined(v) ? v : kUndefinedMetric;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// --- aggregation --------------------------------------------------------------

/// model -> hpc -> metric -> cell. A cell is empty when no run produced a
/// defined value for it (e.g. a size stratum absent from the test set).
class ResultTable {
 public:
  using Row = std::array<std::optional<AggregateCell>, 8>;

  std::string dataset;

  std::optional<AggregateCell>& cell(const std::string& model, const std::string& hpc, Metric m) {
    return cells_[model][hpc][static_cast<std::size_t>(m)];
  }

  std::optional<AggregateCell> cell(const std::string& model, const std::string& hpc, Metric m) const {
    auto mi = cells_.find(model);
    if (mi == cells_.end()) return std::nullopt;
    auto hi = mi->second.find(hpc);
    if (hi == mi->second.end()) return std::nullopt;
    return hi->second[static_cast<std::size_t>(m)];
  }

  bool empty() const noexcept { return cells_.empty(); }

  std::vector<std::string> models() const {
    std::vector<std::string> out;
    for (const auto& [m, _] : cells_) out.push_back(m);
    return out;
  }

  /// HPCs present for a model, in result-table column order.
  std::vector<std::string> hpcs(const std::string& model) const {
    std::vector<std::string> out;
    auto mi = cells_.find(model);
    if (mi == cells_.end()) return out;
    for (const auto& [h, _] : mi->second) out.push_back(h);
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return detail::hpc_sort_key(a) < detail::hpc_sort_key(b);
    });
    return out;
  }

 private:
  std::map<std::string, std::map<std::string, Row>> cells_;
};

/// Mean and sample standard deviation (n - 1) per cell; a single run
/// reports std 0. Undefined metric values are skipped.
inline ResultTable aggregate(std::span<const RunResult> results) {
  ResultTable table;
  std::set<std::tuple<std::string, std::string, int>> seen;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> values;
  for (const auto& r : results) {
    if (table.dataset.empty()) table.dataset = r.dataset;
    if (r.dataset != table.dataset)
      throw DataError("aggregate: mixed dataset tags '" + table.dataset + "' and '" + r.dataset + "'");
    if (!seen.emplace(r.model, r.hpc, r.run).second)
      throw DataError("aggregate: duplicate run " + std::to_string(r.run) + " for " + r.model + "/" + r.hpc);
    for (Metric m : kAllMetrics) {
      auto& v = values[{r.model, r.hpc, static_cast<std::size_t>(m)}];
      if (is_defined(r.metrics[m])) v.push_back(r.metrics[m]);
    }
    for (Metric m : kAllMetrics) (void)table.cell(r.model, r.hpc, m);
  }
  for (auto& [key, v] : values) {
    if (v.empty()) continue;
    // Sorting makes the floating-point sums independent of run order.
    std::sort(v.begin(), v.end());
    AggregateCell c;
    c.n = v.size();
    c.mean = detail::mean_of(v);
    if (c.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - c.mean) * (x - c.mean);
      c.std = std::sqrt(ss / static_cast<double>(c.n - 1));
    }
    table.cell(std::get<0>(key), std::get<1>(key), static_cast<Metric>(std::get<2>(key))) = c;
  }
  return table;
}

/// Every HPC whose mean equals the maximum exactly, in table order. Empty
/// only when the model has no defined cell for the metric.
inline std::vector<std::string> best_hpc(const ResultTable& table, const std::string& model, Metric metric) {
  std::vector<std::string> best;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& h : table.hpcs(model)) {
    const auto c = table.cell(model, h, metric);
    if (!c) continue;
    if (c->mean > top) {
      top = c->mean;
      best = {h};
    } else if (c->mean == top) {
      best.push_back(h);
    }
  }
  return best;
}

// --- rendering ------------------------------------------------------------------

inline std::string format_cell(const std::optional<AggregateCell>& c, DecimalMark mark) {
  if (!c) return "n/a";
  return detail::format_percent(c->mean, mark) + "±" + detail::format_percent(c->std, mark);
}

/// One model's table: a row per metric, a column per HPC, cells as
/// "mean±std" in percent with one decimal. Best cells are bold in markdown.
/// CSV uses ',' as separator, or ';' with comma decimals.
inline std::string emit_table(const ResultTable& table, const std::string& model, TableStyle style,
                              DecimalMark mark = DecimalMark::Period) {
  std::vector<std::string> hpcs = table.hpcs(model);
  if (hpcs.empty())
    for (const auto& h : hpc_table_order()) hpcs.push_back(h.name());
  const std::string label = model.empty() ? "model" : model;
  std::ostringstream out;
  if (style == TableStyle::Markdown) {
    out << "| " << label;
    for (const auto& h : hpcs) out << " | " << h;
    out << " |\n|---";
    for (std::size_t i = 0; i < hpcs.size(); ++i) out << "|---";
    out << "|\n";
  } else {
    const char sep = mark == DecimalMark::Comma ? ';' : ',';
    out << "metric";
    for (const auto& h : hpcs) out << sep << detail::csv_field(h, sep);
    out << "\n";
  }
  if (table.hpcs(model).empty()) return out.str();

  for (Metric m : kAllMetrics) {
    const auto best = best_hpc(table, model, m);
    if (style == TableStyle::Markdown) {
      out << "| " << metric_name(m);
      for (const auto& h : hpcs) {
        const std::string cell = format_cell(table.cell(model, h, m), mark);
        const bool bold = std::find(best.begin(), best.end(), h) != best.end();
        out << " | " << (bold ? "**" + cell + "**" : cell);
      }
      out << " |\n";
    } else {
      const char sep = mark == DecimalMark::Comma ? ';' : ',';
      out << metric_name(m);
      for (const auto& h : hpcs) out << sep << detail::csv_field(format_cell(table.cell(model, h, m), mark), sep);
      out << "\n";
    }
  }
  return out.str();
}

/// All models, one block each, separated by a blank line.
inline std::string emit_tables(const ResultTable& table, TableStyle style, DecimalMark mark = DecimalMark::Period) {
  const auto models = table.models();
  if (models.empty()) return emit_table(table, "", style, mark);
  std::string out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (i) out += "\n";
    out += emit_table(table, models[i], style, mark);
  }
  return out;
}

/// Rounded (mean, std) pairs in percent read back from a CSV table.
struct ParsedCell {
  double mean_percent = 0.0;
  double std_percent = 0.0;
};
using ParsedTable = std::map<std::string, std::map<std::string, std::optional<ParsedCell>>>;

inline ParsedTable parse_table_csv(std::string_view text, DecimalMark mark = DecimalMark::Period) {
  const char sep = mark == DecimalMark::Comma ? ';' : ',';
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw DataError("table csv: missing header");
  const auto header = detail::csv_split(lines[0], sep);
  const auto number = [&](std::string s) {
    if (mark == DecimalMark::Comma) std::replace(s.begin(), s.end(), ',', '.');
    return detail::parse_double(s, "table csv");
  };
  ParsedTable out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = detail::csv_split(lines[li], sep);
    if (f.size() != header.size()) throw DataError("table csv: ragged row " + std::to_string(li + 1));
    for (std::size_t c = 1; c < f.size(); ++c) {
      auto& slot = out[f[0]][header[c]];
      if (f[c] == "n/a") continue;
      const auto pm = f[c].find("±");
      if (pm == std::string::npos) throw DataError("table csv: cell without '±'");
      slot = ParsedCell{number(f[c].substr(0, pm)), number(f[c].substr(pm + std::string_view("±").size()))};
    }
  }
  return out;
}

// --- statistics over best HPCs --------------------------------------------------

/// For every model, the per-run values of its best HPC for `metric` (first
/// in table order on ties), ordered by run index. Returns the chosen HPCs
/// alongside the samples.
struct BestSamples {
  std::vector<SampleSet> groups;
  std::vector<std::string> hpcs;
};

inline BestSamples best_hpc_samples(std::span<const RunResult> results, Metric metric) {
  const ResultTable table = aggregate(results);
  BestSamples out;
  for (const auto& model : table.models()) {
    const auto best = best_hpc(table, model, metric);
    if (best.empty()) continue;
    std::vector<std::pair<int, double>> runs;
    for (const auto& r : results)
      if (r.model == model && r.hpc == best.front() && is_defined(r.metrics[metric]))
        runs.emplace_back(r.run, r.metrics[metric]);
    std::sort(runs.begin(), runs.end());
    SampleSet s{model, {}};
    for (const auto& [_, v] : runs) s.values.push_back(v);
    out.groups.push_back(std::move(s));
    out.hpcs.push_back(best.front());
  }
  return out;
}

struct MetricStats {
  Metric metric = Metric::AP;
  std::vector<std::string> hpcs;  // best HPC per group, aligned with report.groups
  StatReport report;
};

/// Runs the battery per metric on best-HPC samples. Metrics whose samples
/// are degenerate (too few runs, constant values) are listed in `skipped`
/// with the reason.
struct StatsRun {
  std::vector<MetricStats> metrics;
  std::vector<std::pair<Metric, std::string>> skipped;
};

inline StatsRun run_stats(std::span<const RunResult> results, const BatteryOptions& opt = {}) {
  StatsRun out;
  for (Metric m : kAllMetrics) {
    BestSamples s = best_hpc_samples(results, m);
    try {
      if (s.groups.size() < 2) throw std::invalid_argument("fewer than two models with defined values");
      out.metrics.push_back({m, s.hpcs, run_battery(s.groups, opt)});
    } catch (const std::exception& e) {
      out.skipped.emplace_back(m, e.what());
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const StatsRun& run) {
  nlohmann::ordered_json doc;
  doc["metrics"] = nlohmann::ordered_json::array();
  for (const auto& ms : run.metrics) {
    nlohmann::ordered_json entry;
    entry["metric"] = metric_name(ms.metric);
    entry["best_hpc"] = ms.hpcs;
    entry["report"] = to_json(ms.report);
    doc["metrics"].push_back(std::move(entry));
  }
  doc["skipped"] = nlohmann::ordered_json::array();
  for (const auto& [m, why] : run.skipped) doc["skipped"].push_back({{"metric", metric_name(m)}, {"reason", why}});
  return doc;
}

inline StatsRun stats_run_from_json(const nlohmann::json& doc) {
  StatsRun run;
  for (const auto& e : doc.at("metrics"))
    run.metrics.push_back({parse_metric(e.at("metric").get<std::string>()),
                           e.at("best_hpc").get<std::vector<std::string>>(), stat_report_from_json(e.at("report"))});
  for (const auto& s : doc.at("skipped"))
    run.skipped.emplace_back(parse_metric(s.at("metric").get<std::string>()), s.at("reason").get<std::string>());
  return run;
}

/// Flat CSV of every pairwise comparison.
inline std::string write_pairwise_csv(const StatsRun& run) {
  std::string out = "metric,a,b,method,statistic,p,alpha_corrected,significant\n";
  for (const auto& ms : run.metrics) {
    const auto& r = ms.report;
    for (const auto& p : r.pairs) {
      out += std::string(metric_name(ms.metric)) + "," + detail::csv_field(r.groups[p.first], ',') + "," +
             detail::csv_field(r.groups[p.second], ',') + "," + std::string(to_string(p.method)) + "," +
             detail::format_double(p.statistic) + "," + detail::format_double(p.p) + "," +
             detail::format_double(r.alpha_corrected) + "," + (p.significant ? "1" : "0") + "\n";
    }
  }
  return out;
}

/// Plot-ready rows: metric, model, best HPC, mean and std in percent, letters.
inline std::string emit_significance_figure_data(const StatsRun& run, const ResultTable& table,
                                                 DecimalMark mark = DecimalMark::Period) {
  const char sep = mark == DecimalMark::Comma ? ';' : ',';
  std::string out;
  for (const char* h : {"metric", "model", "hpc", "mean", "std", "letters"}) {
    if (!out.empty()) out += sep;
    out += h;
  }
  out += "\n";
  for (const auto& ms : run.metrics) {
    const auto& r = ms.report;
    if (r.letters.size() != r.groups.size()) throw DataError("figure data: missing letters for " + std::string(metric_name(ms.metric)));
    for (std::size_t g = 0; g < r.groups.size(); ++g) {
      if (r.letters[g].empty())
        throw DataError("figure data: group '" + r.groups[g] + "' has no letter");
      const std::string& hpc = g < ms.hpcs.size() ? ms.hpcs[g] : best_hpc(table, r.groups[g], ms.metric).front();
      const auto cell = table.cell(r.groups[g], hpc, ms.metric);
      if (!cell) throw DataError("figure data: no table cell for " + r.groups[g] + "/" + hpc);
      out += std::string(metric_name(ms.metric)) + sep + detail::csv_field(r.groups[g], sep) + sep +
             detail::csv_field(hpc, sep) + sep + detail::format_percent(cell->mean, mark) + sep +
             detail::format_percent(cell->std, mark) + sep + r.letters[g] + "\n";
    }
  }
  return out;
}

/// Markdown table of letters: one row per metric, one column per model.
inline std::string emit_letter_table(const StatsRun& run) {
  std::set<std::string> models;
  for (const auto& ms : run.metrics) models.insert(ms.report.groups.begin(), ms.report.groups.end());
  std::ostringstream out;
  out << "| metric";
  for (const auto& m : models) out << " | " << m;
  out << " |\n|---";
  for (std::size_t i = 0; i < models.size(); ++i) out << "|---";
  out << "|\n";
  for (const auto& ms : run.metrics) {
    out << "| " << metric_name(ms.metric);
    for (const auto& m : models) {
      const auto g = ms.report.find(m);
      out << " | " << (g ? ms.report.letters[*g] : "");
    }
    out << " |\n";
  }
  return out.str();
}

}  // namespace puddle_eval
