#pragma once

// Significance battery: Shapiro-Wilk normality gating, ANOVA or
// Kruskal-Wallis omnibus, pairwise Welch t or Dunn tests under a Bonferroni
// corrected level, and letters for the resulting nonsignificance graph.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "puddle_eval/letters.hpp"

namespace puddle_eval {

class StatsError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct SampleSet {
  std::string label;
  std::vector<double> values;
};

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
};

namespace detail {

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

inline double normal_sf(double z) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), z));
}

// Horner evaluation with coefficients in ascending order.
template <std::size_t N>
double poly(const double (&c)[N], double x) {
  double r = 0.0;
  for (std::size_t i = N; i-- > 0;) r = r * x + c[i];
  return r;
}

// Average ranks over the pooled sample (1-based) and the tie term sum(t^3 - t).
struct PooledRanks {
  std::vector<double> rank;
  double tie_sum = 0.0;
};

inline PooledRanks pooled_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  PooledRanks r;
  r.rank.resize(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t q = i; q <= j; ++q) r.rank[order[q]] = avg;
    const double t = static_cast<double>(j - i + 1);
    r.tie_sum += t * t * t - t;
    i = j + 1;
  }
  return r;
}

struct GroupRanks {
  std::vector<double> mean_rank;
  std::vector<std::size_t> size;
  std::size_t total = 0;
  double tie_sum = 0.0;
};

inline GroupRanks rank_groups(std::span<const SampleSet> groups) {
  std::vector<double> all;
  GroupRanks g;
  for (const auto& s : groups) {
    all.insert(all.end(), s.values.begin(), s.values.end());
    g.size.push_back(s.values.size());
  }
  const PooledRanks pr = pooled_ranks(all);
  g.total = all.size();
  g.tie_sum = pr.tie_sum;
  std::size_t pos = 0;
  for (std::size_t s : g.size) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s; ++i) sum += pr.rank[pos + i];
    g.mean_rank.push_back(s ? sum / static_cast<double>(s) : 0.0);
    pos += s;
  }
  return g;
}

inline void check_rank_input(std::span<const SampleSet> groups, const char* who) {
  if (groups.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least two groups");
  std::size_t total = 0;
  std::optional<double> first;
  bool varied = false;
  for (const auto& s : groups) {
    if (s.values.empty()) throw std::invalid_argument(std::string(who) + ": empty group '" + s.label + "'");
    total += s.values.size();
    for (double v : s.values) {
      if (!first) first = v;
      varied = varied || v != *first;
    }
  }
  if (total < 5) throw std::invalid_argument(std::string(who) + ": need at least 5 observations in total");
  if (!varied) throw StatsError(std::string(who) + ": all values are identical");
}

}  // namespace detail

/// Royston's approximation (AS R94) of the Shapiro-Wilk W test.
inline TestResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) throw std::invalid_argument("shapiro_wilk: sample size must lie in [3, 5000]");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() < 1e-19 * std::max(1.0, std::abs(x.front())))
    throw StatsError("shapiro_wilk: sample has zero range");

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};

  const auto an = static_cast<double>(n);
  const std::size_t half = n / 2;
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    const boost::math::normal_distribution<> stdnorm;
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = boost::math::quantile(stdnorm, (static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = detail::poly(c1, rsn) - m[0] / ssumm2;
    std::size_t first_scaled;
    double fac;
    if (n > 5) {
      first_scaled = 2;
      const double a2 = -m[1] / ssumm2 + detail::poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      first_scaled = 1;
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first_scaled; i < half; ++i) a[i] = -m[i] / fac;
  }

  // W as the squared correlation between the ordered sample and the
  // antisymmetric coefficient vector; 1 - W is kept separately for accuracy.
  const double range = x.back() - x.front();
  const double xbar = detail::mean(x) / range;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;
    double ai = 0.0;
    if (i < j) ai = -a[i];
    if (i > j) ai = a[j];
    const double xi = x[i] / range - xbar;
    ssa += ai * ai;
    ssx += xi * xi;
    sax += ai * xi;
  }
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  const double w = 1.0 - w1;

  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;   // 6 / pi
    constexpr double stqr = 1.04719755119660;  // asin(sqrt(3/4))
    return {w, detail::clamp_p(pi6 * (std::asin(std::sqrt(w)) - stqr))};
  }
  double y = std::log(w1);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = detail::poly(g, an);
    if (y >= gamma) return {w, 1e-99};
    y = -std::log(gamma - y);
    mu = detail::poly(c3, an);
    sigma = std::exp(detail::poly(c4, an));
  } else {
    const double xx = std::log(an);
    mu = detail::poly(c5, xx);
    sigma = std::exp(detail::poly(c6, xx));
  }
  return {w, detail::clamp_p(detail::normal_sf((y - mu) / sigma))};
}

/// Classic one-way ANOVA F test with (k - 1, N - k) degrees of freedom.
inline TestResult one_way_anova(std::span<const SampleSet> groups) {
  if (groups.size() < 2) throw std::invalid_argument("anova: need at least two groups");
  std::size_t total = 0;
  double grand = 0.0;
  for (const auto& s : groups) {
    if (s.values.size() < 2) throw std::invalid_argument("anova: every group needs n >= 2");
    total += s.values.size();
    grand += std::accumulate(s.values.begin(), s.values.end(), 0.0);
  }
  grand /= static_cast<double>(total);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& s : groups) {
    const double m = detail::mean(s.values);
    ssb += static_cast<double>(s.values.size()) * (m - grand) * (m - grand);
    for (double v : s.values) ssw += (v - m) * (v - m);
  }
  const double dfb = static_cast<double>(groups.size() - 1);
  const double dfw = static_cast<double>(total - groups.size());
  if (ssw == 0.0) {
    if (ssb == 0.0) throw StatsError("anova: no variance within or between groups");
    return {std::numeric_limits<double>::infinity(), 0.0};
  }
  const double f = (ssb / dfb) / (ssw / dfw);
  const boost::math::fisher_f_distribution<> dist(dfb, dfw);
  return {f, detail::clamp_p(boost::math::cdf(boost::math::complement(dist, f)))};
}

/// Kruskal-Wallis H with tie correction; chi-square p with k - 1 df.
inline TestResult kruskal_wallis(std::span<const SampleSet> groups) {
  detail::check_rank_input(groups, "kruskal_wallis");
  const auto r = detail::rank_groups(groups);
  const auto n = static_cast<double>(r.total);
  double h = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double rank_sum = r.mean_rank[i] * static_cast<double>(r.size[i]);
    h += rank_sum * rank_sum / static_cast<double>(r.size[i]);
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
  h /= 1.0 - r.tie_sum / (n * n * n - n);
  const boost::math::chi_squared_distribution<> dist(static_cast<double>(groups.size() - 1));
  return {h, detail::clamp_p(boost::math::cdf(boost::math::complement(dist, std::max(h, 0.0))))};
}

enum class TTestKind { Welch, Student, Paired };

/// Two-sided t test; Welch's unequal-variance form unless requested
/// otherwise. Paired mode requires equal sample sizes.
inline TestResult t_test(std::span<const double> a, std::span<const double> b,
                         TTestKind kind = TTestKind::Welch) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t_test: each sample needs n >= 2");
  double diff, se2, df;
  if (kind == TTestKind::Paired) {
    if (a.size() != b.size()) throw std::invalid_argument("t_test: paired samples differ in size");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    diff = detail::mean(d);
    se2 = detail::sample_variance(d) / static_cast<double>(d.size());
    df = static_cast<double>(d.size() - 1);
  } else {
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const double va = detail::sample_variance(a);
    const double vb = detail::sample_variance(b);
    diff = detail::mean(a) - detail::mean(b);
    if (kind == TTestKind::Welch) {
      se2 = va / na + vb / nb;
      const double qa = va / na;
      const double qb = vb / nb;
      df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    } else {
      const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
      se2 = pooled * (1.0 / na + 1.0 / nb);
      df = na + nb - 2.0;
    }
  }
  if (se2 == 0.0) {
    if (diff == 0.0) throw StatsError("t_test: zero variance and equal means");
    return {diff > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity(),
            0.0};
  }
  const double t = diff / std::sqrt(se2);
  const boost::math::students_t_distribution<> dist(df);
  return {t, detail::clamp_p(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))))};
}

inline TestResult t_test_welch(std::span<const double> a, std::span<const double> b) {
  return t_test(a, b, TTestKind::Welch);
}

/// Square matrices of Dunn z statistics and unadjusted two-sided p values.
struct DunnResult {
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> p;
};

inline DunnResult dunn_test(std::span<const SampleSet> groups) {
  detail::check_rank_input(groups, "dunn_test");
  const auto r = detail::rank_groups(groups);
  const auto n = static_cast<double>(r.total);
  const double spread = n * (n + 1.0) / 12.0 - r.tie_sum / (12.0 * (n - 1.0));
  const std::size_t k = groups.size();
  DunnResult out{std::vector<std::vector<double>>(k, std::vector<double>(k, 0.0)),
                 std::vector<std::vector<double>>(k, std::vector<double>(k, 1.0))};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double scale = std::sqrt(
          spread * (1.0 / static_cast<double>(r.size[i]) + 1.0 / static_cast<double>(r.size[j])));
      const double z = std::abs(r.mean_rank[i] - r.mean_rank[j]) / scale;
      const double p = detail::clamp_p(2.0 * detail::normal_sf(z));
      out.z[i][j] = out.z[j][i] = z;
      out.p[i][j] = out.p[j][i] = p;
    }
  }
  return out;
}

inline double bonferroni(double alpha, int comparisons) {
  if (comparisons < 1) throw std::invalid_argument("bonferroni: need at least one comparison");
  return alpha / static_cast<double>(comparisons);
}

// --- battery ------------------------------------------------------------

enum class OmnibusMethod { Anova, KruskalWallis };
enum class PairMethod { TTest, Dunn };

inline std::string_view to_string(OmnibusMethod m) {
  return m == OmnibusMethod::Anova ? "anova" : "kruskal_wallis";
}
inline std::string_view to_string(PairMethod m) { return m == PairMethod::TTest ? "t_test" : "dunn"; }

struct PairwiseResult {
  std::size_t first = 0;
  std::size_t second = 0;
  PairMethod method = PairMethod::TTest;
  double statistic = 0.0;
  double p = 1.0;
  bool significant = false;
};

struct StatReport {
  std::vector<std::string> groups;
  std::vector<double> means;
  std::vector<double> normality_w;
  std::vector<double> normality_p;
  bool all_normal = true;
  OmnibusMethod omnibus = OmnibusMethod::Anova;
  double omnibus_statistic = 0.0;
  double omnibus_p = 1.0;
  // Both omnibus tests are reported whenever some group is non-normal.
  std::optional<TestResult> anova;
  std::optional<TestResult> kruskal;
  bool pairwise_run = false;
  std::vector<PairwiseResult> pairs;
  double alpha_raw = 0.05;
  double alpha_corrected = 0.05;
  std::vector<std::string> letters;  // indexed like groups

  std::optional<std::size_t> find(std::string_view group) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == group) return i;
    return std::nullopt;
  }
};

struct BatteryOptions {
  double alpha = 0.05;
  TTestKind t_test = TTestKind::Welch;
};

/// Normality decides the branch: all groups normal gives ANOVA with t tests,
/// otherwise Kruskal-Wallis decides and each pair is tested with Dunn when
/// either member is non-normal. Pairwise tests run only after a significant
/// omnibus result. Letters are assigned with groups ordered by descending
/// mean (ties by label), so the best group leads with "a".
inline StatReport run_battery(std::span<const SampleSet> groups, const BatteryOptions& opt = {}) {
  if (groups.size() < 2) throw std::invalid_argument("run_battery: need at least two groups");
  const std::size_t k = groups.size();
  StatReport rep;
  rep.alpha_raw = opt.alpha;
  const int comparisons = static_cast<int>(k * (k - 1) / 2);
  rep.alpha_corrected = bonferroni(opt.alpha, comparisons);

  std::vector<bool> normal(k);
  for (const auto& s : groups) {
    rep.groups.push_back(s.label);
    rep.means.push_back(detail::mean(s.values));
    const TestResult sw = shapiro_wilk(s.values);
    rep.normality_w.push_back(sw.statistic);
    rep.normality_p.push_back(sw.p);
    normal[rep.groups.size() - 1] = sw.p >= opt.alpha;
    rep.all_normal = rep.all_normal && sw.p >= opt.alpha;
  }

  rep.anova = one_way_anova(groups);
  if (rep.all_normal) {
    rep.omnibus = OmnibusMethod::Anova;
    rep.omnibus_statistic = rep.anova->statistic;
    rep.omnibus_p = rep.anova->p;
  } else {
    rep.kruskal = kruskal_wallis(groups);
    rep.omnibus = OmnibusMethod::KruskalWallis;
    rep.omnibus_statistic = rep.kruskal->statistic;
    rep.omnibus_p = rep.kruskal->p;
  }

  NonsigGraph nonsig(k, std::vector<bool>(k, true));
  if (rep.omnibus_p < opt.alpha) {
    rep.pairwise_run = true;
    std::optional<DunnResult> dunn;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        PairwiseResult pr{i, j, PairMethod::TTest, 0.0, 1.0, false};
        if (normal[i] && normal[j]) {
          const TestResult t = t_test(groups[i].values, groups[j].values, opt.t_test);
          pr.statistic = t.statistic;
          pr.p = t.p;
        } else {
          if (!dunn) dunn = dunn_test(groups);
          pr.method = PairMethod::Dunn;
          pr.statistic = dunn->z[i][j];
          pr.p = dunn->p[i][j];
        }
        pr.significant = pr.p < rep.alpha_corrected;
        nonsig[i][j] = nonsig[j][i] = !pr.significant;
        rep.pairs.push_back(pr);
      }
    }
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rep.means[a] != rep.means[b]) return rep.means[a] > rep.means[b];
    return rep.groups[a] < rep.groups[b];
  });
  NonsigGraph ordered(k, std::vector<bool>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) ordered[i][j] = nonsig[order[i]][order[j]];
  const auto letters = compact_letters(ordered);
  rep.letters.resize(k);
  for (std::size_t i = 0; i < k; ++i) rep.letters[order[i]] = letters[i];
  return rep;
}

// --- serialization --------------------------------------------------------

inline nlohmann::ordered_json to_json(const StatReport& r) {
  using nlohmann::ordered_json;
  const auto finite = [](double v) -> ordered_json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
  };
  ordered_json doc;
  doc["groups"] = r.groups;
  doc["means"] = r.means;
  doc["normality"] = ordered_json::array();
  for (std::size_t i = 0; i < r.groups.size(); ++i)
    doc["normality"].push_back({{"group", r.groups[i]}, {"w", r.normality_w[i]}, {"p", r.normality_p[i]}});
  doc["all_normal"] = r.all_normal;
  doc["omnibus"] = {{"method", to_string(r.omnibus)},
                    {"statistic", finite(r.omnibus_statistic)},
                    {"p", r.omnibus_p}};
  if (r.anova) doc["anova"] = {{"statistic", finite(r.anova->statistic)}, {"p", r.anova->p}};
  if (r.kruskal) doc["kruskal_wallis"] = {{"statistic", finite(r.kruskal->statistic)}, {"p", r.kruskal->p}};
  doc["alpha_raw"] = r.alpha_raw;
  doc["alpha_corrected"] = r.alpha_corrected;
  doc["pairwise_run"] = r.pairwise_run;
  doc["pairs"] = ordered_json::array();
  for (const auto& p : r.pairs) {
    doc["pairs"].push_back({{"a", r.groups[p.first]},
                            {"b", r.groups[p.second]},
                            {"method", to_string(p.method)},
                            {"statistic", finite(p.statistic)},
                            {"p", p.p},
                            {"significant", p.significant}});
  }
  doc["letters"] = ordered_json::object();
  for (std::size_t i = 0; i < r.groups.size(); ++i) doc["letters"][r.groups[i]] = r.letters[i];
  return doc;
}

inline StatReport stat_report_from_json(const nlohmann::json& doc) {
  const auto number = [](const nlohmann::json& v) {
    if (v.is_string()) {
      return v.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                            : std::numeric_limits<double>::infinity();
    }
    return v.get<double>();
  };
  StatReport r;
  r.groups = doc.at("groups").get<std::vector<std::string>>();
  r.means = doc.at("means").get<std::vector<double>>();
  for (const auto& n : doc.at("normality")) {
    r.normality_w.push_back(n.at("w").get<double>());
    r.normality_p.push_back(n.at("p").get<double>());
  }
  r.all_normal = doc.at("all_normal").get<bool>();
  const auto& omni = doc.at("omnibus");
  r.omnibus = omni.at("method").get<std::string>() == "anova" ? OmnibusMethod::Anova
                                                              : OmnibusMethod::KruskalWallis;
  r.omnibus_statistic = number(omni.at("statistic"));
  r.omnibus_p = omni.at("p").get<double>();
  if (doc.contains("anova"))
    r.anova = TestResult{number(doc["anova"].at("statistic")), doc["anova"].at("p").get<double>()};
  if (doc.contains("kruskal_wallis"))
    r.kruskal = TestResult{number(doc["kruskal_wallis"].at("statistic")),
                           doc["kruskal_wallis"].at("p").get<double>()};
  r.alpha_raw = doc.at("alpha_raw").get<double>();
  r.alpha_corrected = doc.at("alpha_corrected").get<double>();
  r.pairwise_run = doc.at("pairwise_run").get<bool>();
  for (const auto& p : doc.at("pairs")) {
    PairwiseResult pr;
    pr.first = *r.find(p.at("a").get<std::string>());
    pr.second = *r.find(p.at("b").get<std::string>());
    pr.method = p.at("method").get<std::string>() == "dunn" ? PairMethod::Dunn : PairMethod::TTest;
    pr.statistic = number(p.at("statistic"));
    pr.p = p.at("p").get<double>();
    pr.significant = p.at("significant").get<bool>();
    r.pairs.push_back(pr);
  }
  for (const auto& g : r.groups) r.letters.push_back(doc.at("letters").at(g).get<std::string>());
  return r;
}

}  // namespace puddle_eval
