#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "test_util.hpp"

namespace pe = puddle_eval;

namespace {

const std::vector<std::string> kModels = {"faster_rcnn", "yolov8", "detr", "dab_detr"};

std::set<std::string> bold_in_source(const std::string& model, const std::string& dataset, const std::string& metric) {
  std::set<std::string> out;
  for (const auto& r : test_util::published_rows())
    if (r.model == model && r.dataset == dataset && r.metric == metric && r.bold) out.insert(r.hpc);
  return out;
}

// 25 runs per (model, hpc) scattered around the published primary-test means.
std::vector<pe::RunResult> synthetic_runs(std::uint64_t seed, int runs = 25) {
  pe::Rng rng(seed);
  std::vector<pe::RunResult> out;
  const auto table = test_util::published_table(std::string(pe::kPrimaryTest));
  for (const auto& model : kModels)
    for (const auto& hpc : table.hpcs(model))
      for (int run = 1; run <= runs; ++run) {
        pe::RunResult r{run, model, hpc, std::string(pe::kPrimaryTest), {}};
        for (pe::Metric m : pe::kAllMetrics) {
          const auto c = *table.cell(model, hpc, m);
          r.metrics[m] = std::clamp(c.mean + c.std * rng.normal(), 0.0, 1.0);
        }
        out.push_back(r);
      }
  return out;
}

}  // namespace

TEST(BestHpc, PublishedExamples) {
  const auto t = test_util::published_table("primary-test");
  EXPECT_EQ(pe::best_hpc(t, "faster_rcnn", pe::Metric::AP), (std::vector<std::string>{"4_L_p"}));
  EXPECT_EQ(pe::best_hpc(t, "yolov8", pe::Metric::AP50), (std::vector<std::string>{"4_L_p", "16_L_p"}));
}

TEST(BestHpc, AgreesWithPublishedBoldface) {
  // Two typeset rows bold a runner-up next to the maximum; everywhere else
  // the bold cells are exactly the maxima.
  int agree = 0;
  for (const std::string dataset : {"primary-test", "robustness-test"}) {
    const auto t = test_util::published_table(dataset);
    for (const auto& model : kModels)
      for (pe::Metric m : pe::kAllMetrics) {
        const auto best = pe::best_hpc(t, model, m);
        const std::set<std::string> got(best.begin(), best.end());
        const auto bold = bold_in_source(model, dataset, std::string(pe::metric_name(m)));
        if (dataset == "primary-test" && model == "faster_rcnn" && (m == pe::Metric::AR || m == pe::Metric::ARs)) {
          EXPECT_EQ(got, (std::set<std::string>{"4_l_p"}));
          EXPECT_EQ(bold, (std::set<std::string>{"4_L_p", "4_l_p"}));
          continue;
        }
        EXPECT_EQ(got, bold) << model << " " << dataset << " " << pe::metric_name(m);
        agree += got == bold;
      }
  }
  EXPECT_EQ(agree, 62);
}

TEST(Render, CommaDecimalFirstCell) {
  const auto t = test_util::published_table("primary-test");
  const auto md = pe::emit_table(t, "faster_rcnn", pe::TableStyle::Markdown, pe::DecimalMark::Comma);
  const auto lines = pe::detail::split_lines(md);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "| faster_rcnn | 4_L_p | 4_L_u | 4_l_p | 4_l_u | 16_L_p | 16_L_u | 16_l_p | 16_l_u |");
  EXPECT_EQ(lines[2].rfind("| AP | **58,1±2,3** | 54,8±1,7 |", 0), 0u) << lines[2];
  EXPECT_EQ(pe::format_cell(*t.cell("faster_rcnn", "4_L_p", pe::Metric::AP), pe::DecimalMark::Period), "58.1±2.3");
}

TEST(Render, CsvParsesBackToPublishedValues) {
  for (const auto mark : {pe::DecimalMark::Period, pe::DecimalMark::Comma}) {
    for (const std::string dataset : {"primary-test", "robustness-test"}) {
      const auto t = test_util::published_table(dataset);
      for (const auto& model : kModels) {
        const auto parsed = pe::parse_table_csv(pe::emit_table(t, model, pe::TableStyle::Csv, mark), mark);
        for (const auto& r : test_util::published_rows()) {
          if (r.model != model || r.dataset != dataset) continue;
          const auto& cell = parsed.at(r.metric).at(r.hpc);
          ASSERT_TRUE(cell.has_value());
          // A few tiny cells are printed with extra digits in the source
          // table; the renderer always uses one decimal.
          EXPECT_NEAR(cell->mean_percent, std::round(r.mean * 10.0) / 10.0, 1e-9);
          EXPECT_NEAR(cell->std_percent, std::round(r.std * 10.0) / 10.0, 1e-9);
        }
      }
    }
  }
}

TEST(Render, HalfUpRounding) {
  EXPECT_EQ(pe::detail::format_percent(0.58149, pe::DecimalMark::Period), "58.1");
  EXPECT_EQ(pe::detail::format_percent(0.5815, pe::DecimalMark::Period), "58.2");
  EXPECT_EQ(pe::detail::format_percent(1.0, pe::DecimalMark::Period), "100.0");
  EXPECT_EQ(pe::detail::format_percent(0.0, pe::DecimalMark::Comma), "0,0");
}

TEST(Render, EmptyTableIsHeaderOnly) {
  const pe::ResultTable t;
  const auto md = pe::emit_tables(t, pe::TableStyle::Markdown);
  EXPECT_EQ(pe::detail::split_lines(md).size(), 2u);
  EXPECT_EQ(pe::detail::split_lines(pe::emit_tables(t, pe::TableStyle::Csv)).size(), 1u);
}

TEST(Aggregate, MatchesDirectComputation) {
  const auto runs = synthetic_runs(4);
  const auto t = pe::aggregate(runs);
  EXPECT_EQ(t.dataset, "primary-test");
  for (const auto& model : kModels)
    for (const auto& hpc : t.hpcs(model))
      for (pe::Metric m : pe::kAllMetrics) {
        long double s = 0, ss = 0;
        int n = 0;
        for (const auto& r : runs)
          if (r.model == model && r.hpc == hpc) {
            s += r.metrics[m];
            ++n;
          }
        const long double mean = s / n;
        for (const auto& r : runs)
          if (r.model == model && r.hpc == hpc) ss += (r.metrics[m] - mean) * (r.metrics[m] - mean);
        const auto c = *t.cell(model, hpc, m);
        ASSERT_EQ(c.n, 25u);
        ASSERT_NEAR(c.mean, static_cast<double>(mean), 1e-9);
        ASSERT_NEAR(c.std, static_cast<double>(std::sqrt(ss / (n - 1))), 1e-9);
      }
}

TEST(Aggregate, KnownValues) {
  std::vector<pe::RunResult> runs;
  for (int i = 1; i <= 4; ++i) {
    pe::RunResult r{i, "m", "4_L_p", "primary-test", {}};
    for (pe::Metric m : pe::kAllMetrics) r.metrics[m] = 0.1 * i;
    runs.push_back(r);
  }
  const auto c = *pe::aggregate(runs).cell("m", "4_L_p", pe::Metric::AP);
  EXPECT_NEAR(c.mean, 0.25, 1e-15);
  EXPECT_NEAR(c.std, std::sqrt(0.05 / 3.0), 1e-15);
}

TEST(Aggregate, SingleRunHasZeroStd) {
  std::vector<pe::RunResult> runs = {{1, "m", "4_L_p", "primary-test", {}}};
  runs[0].metrics[pe::Metric::AP] = 0.4;
  const auto c = *pe::aggregate(runs).cell("m", "4_L_p", pe::Metric::AP);
  EXPECT_EQ(c.std, 0.0);
  EXPECT_EQ(c.mean, 0.4);
}

TEST(Aggregate, PermutationInvariant) {
  auto runs = synthetic_runs(5);
  const auto a = pe::emit_tables(pe::aggregate(runs), pe::TableStyle::Markdown);
  pe::Rng rng(1);
  rng.shuffle(runs);
  EXPECT_EQ(pe::emit_tables(pe::aggregate(runs), pe::TableStyle::Markdown), a);
  const auto t1 = pe::aggregate(runs);
  std::reverse(runs.begin(), runs.end());
  const auto t2 = pe::aggregate(runs);
  for (pe::Metric m : pe::kAllMetrics) {
    EXPECT_EQ(t1.cell("detr", "4_L_p", m)->mean, t2.cell("detr", "4_L_p", m)->mean);
    EXPECT_EQ(t1.cell("detr", "4_L_p", m)->std, t2.cell("detr", "4_L_p", m)->std);
  }
}

TEST(Aggregate, RejectsMixedDatasetsAndDuplicates) {
  std::vector<pe::RunResult> runs = {{1, "m", "4_L_p", "primary-test", {}}, {2, "m", "4_L_p", "robustness-test", {}}};
  EXPECT_THROW(pe::aggregate(runs), pe::DataError);
  runs[1].dataset = "primary-test";
  runs[1].run = 1;
  EXPECT_THROW(pe::aggregate(runs), pe::DataError);
}

TEST(Aggregate, UndefinedValuesAreSkipped) {
  std::vector<pe::RunResult> runs = {{1, "m", "4_L_p", "primary-test", {}}, {2, "m", "4_L_p", "primary-test", {}}};
  runs[0].metrics[pe::Metric::APm] = pe::kUndefinedMetric;
  runs[1].metrics[pe::Metric::APm] = 0.3;
  runs[0].metrics[pe::Metric::ARm] = runs[1].metrics[pe::Metric::ARm] = pe::kUndefinedMetric;
  const auto t = pe::aggregate(runs);
  EXPECT_EQ(t.cell("m", "4_L_p", pe::Metric::APm)->n, 1u);
  EXPECT_FALSE(t.cell("m", "4_L_p", pe::Metric::ARm).has_value());
  EXPECT_NE(pe::emit_tables(t, pe::TableStyle::Markdown).find("n/a"), std::string::npos);
}

TEST(RunResults, CsvRoundTrip) {
  auto runs = synthetic_runs(6, 3);
  runs[0].metrics[pe::Metric::APm] = pe::kUndefinedMetric;
  runs[1].model = "odd, name";
  EXPECT_EQ(pe::parse_run_results(pe::write_run_results(runs)), runs);
  EXPECT_EQ(pe::detail::split_lines(pe::write_run_results(runs))[0], "run_id,model,hpc,dataset,AP,AP50,AP75,APs,APm,AR,ARs,ARm");
}

TEST(RunResults, DatasetColumnIsOptionalAndValuesChecked) {
  const std::string text = "model,hpc,run_id,AP,AP50,AP75,APs,APm,AR,ARs,ARm\nm,4_L_p,3,0.5,0.6,0.4,0.3,-1,0.6,0.5,-1\n";
  const auto r = pe::parse_run_results(text);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].run, 3);
  EXPECT_EQ(r[0].dataset, "primary-test");
  EXPECT_EQ(r[0].metrics[pe::Metric::APm], pe::kUndefinedMetric);
  EXPECT_THROW(pe::parse_run_results("model,hpc,run_id,AP,AP50,AP75,APs,APm,AR,ARs,ARm\nm,4_L_p,1,1.5,0,0,0,0,0,0,0\n"),
               pe::DataError);
  EXPECT_THROW(pe::parse_run_results("model,hpc,AP\n"), pe::DataError);
}

TEST(Significance, FigureDataHasRowPerMetricAndModel) {
  std::vector<pe::RunResult> runs;
  for (const auto& r : synthetic_runs(8))
    if (r.hpc == "4_L_p") runs.push_back(r);
  const auto stats = pe::run_stats(runs);
  EXPECT_TRUE(stats.skipped.empty());
  ASSERT_EQ(stats.metrics.size(), 8u);
  const auto table = pe::aggregate(runs);
  const auto lines = pe::detail::split_lines(pe::emit_significance_figure_data(stats, table));
  ASSERT_EQ(lines.size(), 33u);
  EXPECT_EQ(lines[0], "metric,model,hpc,mean,std,letters");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = pe::detail::csv_split(lines[i], ',');
    ASSERT_EQ(f.size(), 6u);
    EXPECT_FALSE(f[5].empty());
  }
  const auto back = pe::stats_run_from_json(nlohmann::json::parse(pe::to_json(stats).dump()));
  EXPECT_EQ(pe::emit_significance_figure_data(back, table), pe::emit_significance_figure_data(stats, table));
  EXPECT_EQ(pe::emit_letter_table(back), pe::emit_letter_table(stats));
}

TEST(Significance, UsesBestHpcPerModel) {
  const auto runs = synthetic_runs(9);
  const auto best = pe::best_hpc_samples(runs, pe::Metric::AP);
  const auto table = pe::aggregate(runs);
  ASSERT_EQ(best.groups.size(), 4u);
  for (std::size_t g = 0; g < best.groups.size(); ++g) {
    EXPECT_EQ(best.hpcs[g], pe::best_hpc(table, best.groups[g].label, pe::Metric::AP).front());
    EXPECT_EQ(best.groups[g].values.size(), 25u);
  }
}

TEST(Significance, DegenerateMetricIsSkipped) {
  std::vector<pe::RunResult> runs;
  for (const auto& model : kModels)
    for (int run = 1; run <= 5; ++run) {
      pe::RunResult r{run, model, "4_L_p", "primary-test", {}};
      for (pe::Metric m : pe::kAllMetrics) r.metrics[m] = 0.1 * run + (model == "detr" ? 0.05 : 0.0);
      r.metrics[pe::Metric::APm] = 0.5;  // constant everywhere
      runs.push_back(r);
    }
  const auto stats = pe::run_stats(runs);
  ASSERT_EQ(stats.skipped.size(), 1u);
  EXPECT_EQ(stats.skipped[0].first, pe::Metric::APm);
  const auto csv = pe::write_pairwise_csv(stats);
  EXPECT_EQ(pe::detail::split_lines(csv)[0], "metric,a,b,method,statistic,p,alpha_corrected,significant");
}
