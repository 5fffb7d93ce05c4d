// puddle-eval: batch front end for the evaluation harness.
//
// Exit codes: 0 success, 1 data or I/O error, 2 usage error. Errors go to
// stderr as single lines: `error kind=<usage|data|io> command=<name> message="..."`.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "puddle_eval.hpp"

namespace fs = std::filesystem;
namespace pe = puddle_eval;

#ifndef PUDDLE_EVAL_VERSION
#define PUDDLE_EVAL_VERSION "dev"
#endif

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

void report_error(std::string_view kind, std::string_view command, std::string_view message) {
  std::cerr << "error kind=" << kind << " command=" << (command.empty() ? "-" : command)
            << " message=" << quote(message) << "\n";
}

void warn(std::string_view command, std::string_view message) {
  std::cerr << "warning command=" << command << " message=" << quote(message) << "\n";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::vector<double> parse_thresholds(const std::string& text) {
  if (text.empty()) return pe::IoUThresholds().values();
  const auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("--iou-thresholds: not a number '" + s + "'");
    }
  };
  const auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, sep);) parts.push_back(p);
    return parts;
  };
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw UsageError("--iou-thresholds: expected start:stop:step");
    const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || b < a) throw UsageError("--iou-thresholds: invalid range");
    const auto n = static_cast<std::size_t>(std::llround((b - a) / step)) + 1;
    return pe::linspace(a, b, n);
  }
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(number(p));
  return out;
}

// Shared flag storage; each subcommand binds the flags it understands.
struct Flags {
  std::string gt, dets, plan, out, spec, preset = "A", detector, distractors, in_dir, stats_file;
  std::vector<std::string> runs;
  std::optional<int> run;
  std::uint64_t seed = 0;
  std::optional<double> cal_lo, cal_hi;
  std::string iou_thresholds;
  std::size_t max_dets = 100;
  unsigned threads = 1;
  double alpha = 0.05;
  std::string style = "markdown", decimal = "period", ttest = "welch";
  double threshold = pe::kDefaultMinExtent;
  std::size_t n = 0;
  int k_outer = 5, k_inner = 5;
  bool no_frames = false, rgb = false, manifest = false;
  std::string model = "model", hpc = "4_L_p", dataset{pe::kPrimaryTest};
  int run_id = 1;
  std::optional<double> p_drop, p_fp, jitter, p_distractor_fp;
};

// Inputs and outputs recorded for --manifest.
struct Provenance {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::string> outputs;

  std::string read(const std::string& path) {
    std::string data = read_file(path);
    inputs.emplace_back(path, sha256_hex(data));
    return data;
  }

  void write(const fs::path& dir, const std::string& name, std::string_view content) {
    write_file(dir / name, content);
    outputs.push_back(name);
  }
};

void write_manifest(const Flags& f, const Provenance& prov, const fs::path& dir) {
  nlohmann::ordered_json doc;
  doc["tool"] = "puddle-eval";
  doc["version"] = PUDDLE_EVAL_VERSION;
  doc["command"] = prov.command;
  doc["seed"] = f.seed;
  doc["args"] = prov.args;
  doc["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [path, digest] : prov.inputs) doc["inputs"].push_back({{"path", path}, {"sha256", digest}});
  doc["outputs"] = prov.outputs;
  write_file(dir / "manifest.json", doc.dump(1) + "\n");
}

pe::Dataset load_gt(Provenance& prov, const std::string& path) {
  if (path.empty()) throw UsageError("--gt is required");
  return pe::parse_coco(prov.read(path));
}

// --- subcommands ---------------------------------------------------------------

int cmd_convert(const Flags& f, Provenance& prov) {
  if (f.in_dir.empty()) throw UsageError("--in is required");
  if (!f.cal_lo || !f.cal_hi) throw UsageError("--cal-lo and --cal-hi are required");
  const pe::CalibrationRange cal{*f.cal_lo, *f.cal_hi};
  if (!(cal.lo < cal.hi)) throw UsageError("--cal-lo must be below --cal-hi");
  const fs::path out = prepare_out(f.out);
  if (!fs::is_directory(f.in_dir)) throw IoError("input directory '" + f.in_dir + "' does not exist");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(f.in_dir))
    if (e.is_regular_file() && e.path().extension() == ".raw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) warn("convert", "no .raw files in '" + f.in_dir + "'");

  int failures = 0;
  for (const auto& p : files) {
    try {
      const pe::GrayFrame g = pe::normalize_frame(pe::read_raw_frame(prov.read(p.string())), cal);
      prov.write(out, p.stem().string() + ".pgm", pe::write_pgm(g));
      if (f.rgb) prov.write(out, p.stem().string() + ".ppm", pe::write_ppm(pe::triple_channels(g)));
    } catch (const std::exception& e) {
      report_error("data", "convert", p.filename().string() + ": " + e.what());
      ++failures;
    }
  }
  if (f.manifest) write_manifest(f, prov, out);
  return failures ? 1 : 0;
}

int cmd_filter(const Flags& f, Provenance& prov) {
  if (!(f.threshold >= 0.0)) throw UsageError("--threshold must be non-negative");
  const fs::path out = prepare_out(f.out);
  const pe::Dataset ds = pe::filter_small_objects(load_gt(prov, f.gt), f.threshold);
  prov.write(out, "gt.json", pe::write_coco(ds));
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

int cmd_split(const Flags& f, Provenance& prov) {
  if (f.gt.empty() == (f.n == 0)) throw UsageError("split needs exactly one of --gt or --n");
  if (f.k_outer < 2 || f.k_inner < 2) throw UsageError("--k-outer and --k-inner must be at least 2");
  if (f.n && f.n < static_cast<std::size_t>(f.k_outer * f.k_inner))
    throw UsageError("--n must be at least k_outer*k_inner");
  const fs::path out = prepare_out(f.out);
  std::vector<pe::Id> ids;
  if (f.n) {
    for (std::size_t i = 1; i <= f.n; ++i) ids.push_back(static_cast<pe::Id>(i));
  } else {
    for (const auto& im : load_gt(prov, f.gt).images) ids.push_back(im.id);
  }
  prov.write(out, "plan.json", pe::write_plan(pe::plan_splits(ids, f.k_outer, f.k_inner, f.seed)));
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

int cmd_synth(const Flags& f, Provenance& prov) {
  if (f.n == 0) throw UsageError("--n must be positive");
  pe::SceneSpec spec;
  try {
    spec = pe::scene_preset(f.preset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!f.spec.empty()) spec = pe::scene_spec_from_json(nlohmann::json::parse(prov.read(f.spec)), spec);
  try {
    spec.check();
  } catch (const std::invalid_argument& e) {
    throw pe::DataError(e.what());
  }
  const fs::path out = prepare_out(f.out);
  const pe::Corpus corpus = pe::generate_corpus(spec, f.n, f.seed, !f.no_frames);
  prov.write(out, "gt.json", pe::write_coco(corpus.dataset));
  nlohmann::ordered_json dis = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < corpus.dataset.images.size(); ++i) {
    for (const auto& d : corpus.distractors[i]) {
      dis.push_back({{"image_id", corpus.dataset.images[i].id},
                     {"kind", pe::to_string(d.kind)},
                     {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}}});
    }
  }
  prov.write(out, "distractors.json", dis.dump(1) + "\n");
  prov.write(out, "scene_spec.json", pe::to_json(spec).dump(1) + "\n");
  if (!f.no_frames) {
    fs::create_directories(out / "frames");
    for (std::size_t i = 0; i < corpus.frames.size(); ++i) {
      const auto& im = corpus.dataset.images[i];
      prov.write(out, "frames/" + im.file_name, pe::write_raw_frame(corpus.frames[i]));
    }
  }
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

std::vector<std::vector<pe::Distractor>> load_distractors(Provenance& prov, const std::string& path,
                                                          const pe::Dataset& ds) {
  std::map<pe::Id, std::size_t> index;
  for (std::size_t i = 0; i < ds.images.size(); ++i) index[ds.images[i].id] = i;
  std::vector<std::vector<pe::Distractor>> out(ds.images.size());
  const auto doc = nlohmann::json::parse(prov.read(path));
  try {
    for (const auto& d : doc) {
      const auto it = index.find(d.at("image_id").get<pe::Id>());
      if (it == index.end()) continue;
      const std::string kind = d.at("kind").get<std::string>();
      const auto b = d.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) throw pe::DataError("distractors: bbox must have four numbers");
      pe::Distractor dis;
      dis.kind = kind == "pig" ? pe::DistractorKind::Pig
                 : kind == "stripe" ? pe::DistractorKind::Stripe
                                    : pe::DistractorKind::Bird;
      dis.bbox = {b[0], b[1], b[2], b[3]};
      out[it->second].push_back(dis);
    }
  } catch (const nlohmann::json::exception& e) {
    throw pe::DataError(std::string("distractors: ") + e.what());
  }
  return out;
}

int cmd_detect(const Flags& f, Provenance& prov) {
  pe::MockDetectorSpec spec;
  if (!f.detector.empty()) spec = pe::mock_spec_from_json(nlohmann::json::parse(prov.read(f.detector)));
  if (f.p_drop) spec.p_drop = *f.p_drop;
  if (f.p_fp) spec.p_fp = *f.p_fp;
  if (f.jitter) spec.jitter_sigma = *f.jitter;
  if (f.p_distractor_fp) spec.p_distractor_fp = *f.p_distractor_fp;
  try {
    spec.check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (f.gt.empty()) throw UsageError("--gt is required");
  const fs::path out = prepare_out(f.out);
  const pe::Dataset ds = load_gt(prov, f.gt);
  std::vector<std::vector<pe::Distractor>> dis;
  if (!f.distractors.empty()) dis = load_distractors(prov, f.distractors, ds);
  prov.write(out, "dets.json", pe::write_detections(pe::mock_detect(ds, spec, f.seed, dis)));
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

int cmd_evaluate(const Flags& f, Provenance& prov) {
  if (f.gt.empty() || f.dets.empty()) throw UsageError("--gt and --dets are required");
  if (f.max_dets == 0) throw UsageError("--max-dets must be positive");
  if (f.run && f.plan.empty()) throw UsageError("--run requires --plan");
  pe::EvalOptions opt;
  try {
    opt.thresholds = pe::IoUThresholds(parse_thresholds(f.iou_thresholds));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  opt.max_dets = f.max_dets;
  opt.threads = std::max(1u, f.threads);
  try {
    pe::Hpc::parse(f.hpc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path out = prepare_out(f.out);

  const pe::Dataset gt = load_gt(prov, f.gt);
  const auto dets = pe::parse_detections(prov.read(f.dets), &gt);

  std::vector<pe::RunResult> results;
  if (f.plan.empty()) {
    results.push_back({f.run_id, f.model, f.hpc, f.dataset, pe::evaluate(gt, dets, opt)});
  } else {
    const pe::SplitPlan plan = pe::parse_plan(prov.read(f.plan));
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
      const int idx = static_cast<int>(i) + 1;
      if (f.run && *f.run != idx) continue;
      const auto& ids = plan.runs[i].test_ids;
      const auto sub_gt = pe::subset_images(gt, ids);
      if (sub_gt.images.size() != ids.size())
        throw pe::DataError("plan run " + std::to_string(idx) + " references images absent from --gt");
      results.push_back({idx, f.model, f.hpc, f.dataset, pe::evaluate(sub_gt, pe::subset_detections(dets, ids), opt)});
    }
    if (results.empty()) throw UsageError("--run is outside the plan");
  }

  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : results)
    doc.push_back({{"run_id", r.run}, {"model", r.model}, {"hpc", r.hpc}, {"dataset", r.dataset},
                   {"metrics", pe::to_json(r.metrics)}});
  prov.write(out, "metrics.json", (results.size() == 1 ? doc[0] : doc).dump(1) + "\n");
  prov.write(out, "runs.csv", pe::write_run_results(results));
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

std::vector<pe::RunResult> load_runs(const Flags& f, Provenance& prov) {
  if (f.runs.empty()) throw UsageError("at least one --runs file is required");
  std::vector<pe::RunResult> all;
  for (const auto& path : f.runs) {
    auto part = pe::parse_run_results(prov.read(path));
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

pe::TTestKind parse_ttest(const std::string& s) {
  if (s == "welch") return pe::TTestKind::Welch;
  if (s == "student") return pe::TTestKind::Student;
  if (s == "paired") return pe::TTestKind::Paired;
  throw UsageError("--ttest must be welch, student or paired");
}

int cmd_stats(const Flags& f, Provenance& prov) {
  if (!(f.alpha > 0.0 && f.alpha < 1.0)) throw UsageError("--alpha must lie in (0,1)");
  const pe::BatteryOptions opt{f.alpha, parse_ttest(f.ttest)};
  const fs::path out = prepare_out(f.out);
  const auto runs = load_runs(f, prov);
  const pe::StatsRun stats = pe::run_stats(runs, opt);
  for (const auto& [m, why] : stats.skipped) warn("stats", std::string(pe::metric_name(m)) + " skipped: " + why);
  prov.write(out, "stats.json", pe::to_json(stats).dump(1) + "\n");
  prov.write(out, "pairwise.csv", pe::write_pairwise_csv(stats));
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

int cmd_report(const Flags& f, Provenance& prov) {
  pe::TableStyle style;
  if (f.style == "markdown") {
    style = pe::TableStyle::Markdown;
  } else if (f.style == "csv") {
    style = pe::TableStyle::Csv;
  } else {
    throw UsageError("--style must be markdown or csv");
  }
  pe::DecimalMark mark;
  if (f.decimal == "period") {
    mark = pe::DecimalMark::Period;
  } else if (f.decimal == "comma") {
    mark = pe::DecimalMark::Comma;
  } else {
    throw UsageError("--decimal must be period or comma");
  }
  const fs::path out = prepare_out(f.out);
  const auto runs = load_runs(f, prov);
  const pe::ResultTable table = pe::aggregate(runs);
  prov.write(out, style == pe::TableStyle::Markdown ? "tables.md" : "tables.csv", pe::emit_tables(table, style, mark));
  if (!f.stats_file.empty()) {
    pe::StatsRun stats;
    try {
      stats = pe::stats_run_from_json(nlohmann::json::parse(prov.read(f.stats_file)));
    } catch (const nlohmann::json::exception& e) {
      throw pe::DataError(std::string("stats document: ") + e.what());
    }
    prov.write(out, "figure_data.csv", pe::emit_significance_figure_data(stats, table, mark));
    prov.write(out, "letters.md", pe::emit_letter_table(stats));
  }
  if (f.manifest) write_manifest(f, prov, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation harness for thermal puddle detection experiments", "puddle-eval"};
  app.set_version_flag("--version", PUDDLE_EVAL_VERSION);
  app.require_subcommand(1);
  Flags f;

  const auto out_flag = [&](CLI::App* c) {
    c->add_option("--out", f.out, "Output directory")->required();
    c->add_flag("--manifest", f.manifest, "Write manifest.json with version, seed, arguments and input digests");
  };

  auto* convert = app.add_subcommand("convert", "Normalize raw 16-bit frames to 8-bit PGM");
  convert->add_option("--in", f.in_dir, "Directory of .raw frames")->required();
  convert->add_option("--cal-lo", f.cal_lo, "Raw value mapped to 0")->required();
  convert->add_option("--cal-hi", f.cal_hi, "Raw value mapped to 255")->required();
  convert->add_flag("--rgb", f.rgb, "Also write the three-channel PPM");
  out_flag(convert);

  auto* filter = app.add_subcommand("filter", "Demote small annotations to ignore regions");
  filter->add_option("--gt", f.gt, "COCO annotation file")->required();
  filter->add_option("--threshold", f.threshold, "Width/height limit in pixels (inclusive)");
  out_flag(filter);

  auto* split = app.add_subcommand("split", "Write the nested cross-validation split plan");
  split->add_option("--gt", f.gt, "COCO annotation file supplying the image ids");
  split->add_option("--n", f.n, "Use image ids 1..n instead of --gt");
  split->add_option("--k-outer", f.k_outer, "Outer folds");
  split->add_option("--k-inner", f.k_inner, "Inner folds");
  split->add_option("--seed", f.seed, "Shuffle seed");
  out_flag(split);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene corpus");
  synth->add_option("--n", f.n, "Number of images")->required();
  synth->add_option("--preset", f.preset, "Scene preset A or B");
  synth->add_option("--spec", f.spec, "Scene spec JSON overriding preset fields");
  synth->add_option("--seed", f.seed, "Generator seed");
  synth->add_flag("--no-frames", f.no_frames, "Write annotations only");
  out_flag(synth);

  auto* detect = app.add_subcommand("detect", "Run the mock detector over a ground-truth file");
  detect->add_option("--gt", f.gt, "COCO annotation file")->required();
  detect->add_option("--detector", f.detector, "Mock detector spec JSON");
  detect->add_option("--p-drop", f.p_drop, "Probability a ground truth is missed");
  detect->add_option("--p-fp", f.p_fp, "Expected false positives per image");
  detect->add_option("--jitter", f.jitter, "Box-corner noise sigma in pixels");
  detect->add_option("--p-distractor-fp", f.p_distractor_fp, "Probability a distractor is reported");
  detect->add_option("--distractors", f.distractors, "distractors.json written by synth");
  detect->add_option("--seed", f.seed, "Detector seed");
  out_flag(detect);

  auto* evaluate = app.add_subcommand("evaluate", "Compute the eight AP/AR metrics");
  evaluate->add_option("--gt", f.gt, "COCO annotation file")->required();
  evaluate->add_option("--dets", f.dets, "Detection results file")->required();
  evaluate->add_option("--plan", f.plan, "Split plan; evaluates each run's test set");
  evaluate->add_option("--run", f.run, "Only this 1-based run of the plan");
  evaluate->add_option("--iou-thresholds", f.iou_thresholds, "start:stop:step or a comma list");
  evaluate->add_option("--max-dets", f.max_dets, "Detections kept per image");
  evaluate->add_option("--threads", f.threads, "Worker threads");
  evaluate->add_option("--model", f.model, "Model label for the run records");
  evaluate->add_option("--hpc", f.hpc, "HPC label, e.g. 4_L_p");
  evaluate->add_option("--run-id", f.run_id, "Run index when no plan is given");
  evaluate->add_option("--dataset", f.dataset, "Dataset tag");
  evaluate->add_option("--seed", f.seed, "Recorded in the manifest");
  out_flag(evaluate);

  auto* stats = app.add_subcommand("stats", "Significance battery over best-HPC runs");
  stats->add_option("--runs", f.runs, "Run-result CSV (repeatable)")->required();
  stats->add_option("--alpha", f.alpha, "Significance level before correction");
  stats->add_option("--ttest", f.ttest, "welch, student or paired");
  out_flag(stats);

  auto* report = app.add_subcommand("report", "Result tables and figure data");
  report->add_option("--runs", f.runs, "Run-result CSV (repeatable)")->required();
  report->add_option("--stats", f.stats_file, "stats.json from the stats command");
  report->add_option("--style", f.style, "markdown or csv");
  report->add_option("--decimal", f.decimal, "period or comma");
  out_flag(report);

  std::string command;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    report_error("usage", command, e.what());
    return 2;
  }

  Provenance prov;
  command = app.get_subcommands().front()->get_name();
  prov.command = command;
  for (int i = 1; i < argc; ++i) prov.args.emplace_back(argv[i]);

  try {
    if (command == "convert") return cmd_convert(f, prov);
    if (command == "filter") return cmd_filter(f, prov);
    if (command == "split") return cmd_split(f, prov);
    if (command == "synth") return cmd_synth(f, prov);
    if (command == "detect") return cmd_detect(f, prov);
    if (command == "evaluate") return cmd_evaluate(f, prov);
    if (command == "stats") return cmd_stats(f, prov);
    if (command == "report") return cmd_report(f, prov);
  } catch (const UsageError& e) {
    report_error("usage", command, e.what());
    return 2;
  } catch (const IoError& e) {
    report_error("io", command, e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    report_error("data", command, e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("data", command, e.what());
    return 1;
  }
  return 2;
}
