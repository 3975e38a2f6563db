// knoweeg command-line front end.
//
// Exit codes: 0 success, 1 domain error, 2 usage error. Errors are written to
// stderr as {"error": kind, "message": text}.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "knoweeg/connectivity.hpp"
#include "knoweeg/core.hpp"
#include "knoweeg/errors.hpp"
#include "knoweeg/feature_matrix.hpp"
#include "knoweeg/features.hpp"
#include "knoweeg/forest.hpp"
#include "knoweeg/pipeline.hpp"
#include "knoweeg/rng.hpp"
#include "knoweeg/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace knoweeg;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void emit_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") std::cout << j.dump(2) << '\n';
  else write_json(path, j);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_samples;
};

int run_synth(const SynthArgs& a) {
  SyntheticSpec spec = a.spec.empty() ? SyntheticSpec::eyes_task() : synthetic_spec_from_json(read_json(a.spec));
  if (a.n_samples) spec.n_samples = *a.n_samples;
  const auto data = generate_synthetic(spec, a.seed);
  save_dataset(data, a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// extract / connectivity
// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string data;
  std::string out;
  std::vector<std::string> feature_ids;
  std::size_t threads = 0;
};

int run_extract(const ExtractArgs& a) {
  const auto data = load_dataset(a.data);
  auto registry = features::FeatureRegistry::default_registry();
  if (!a.feature_ids.empty()) registry = registry.select(a.feature_ids);
  write_feature_csv(features::extract_features(data, registry, a.threads), a.out);
  return 0;
}

struct ConnectivityArgs {
  std::string data;
  std::string out_dir;
  std::vector<std::string> metrics;
  std::optional<double> segment_duration;
  std::size_t threads = 0;
};

int run_connectivity(const ConnectivityArgs& a) {
  const auto data = load_dataset(a.data);
  std::vector<connectivity::Metric> metrics;
  if (a.metrics.empty()) {
    const auto& all = connectivity::all_metrics();
    metrics.assign(all.begin(), all.end());
  }
  for (const auto& name : a.metrics) {
    const auto m = connectivity::parse_metric(name);
    if (!m) throw ParamError("unknown connectivity metric '" + name + "'");
    metrics.push_back(*m);
  }
  const auto plan = a.segment_duration
                        ? spectral::make_plan(data.n_timesteps(), data.sample_rate(), *a.segment_duration)
                        : spectral::default_plan(data.n_timesteps(), data.sample_rate());
  fs::create_directories(a.out_dir);
  json summary = json::array();
  for (const auto& o : connectivity::try_compute_candidates(data, metrics, plan, a.threads)) {
    const std::string name(connectivity::metric_name(o.metric));
    if (!o.set) throw Error(o.error_kind, o.error_message);
    write_feature_csv(o.set->matrix, fs::path(a.out_dir) / (name + ".csv"));
    json low = json::array();
    for (std::size_t b = 0; b < o.set->low_resolution.size(); ++b)
      if (o.set->low_resolution[b]) low.push_back(canonical_bands()[b].name);
    summary.push_back({{"metric", name},
                       {"columns", o.set->matrix.n_features()},
                       {"low_resolution_bands", low},
                       {"flags", o.set->flags}});
  }
  write_json(fs::path(a.out_dir) / "connectivity_summary.json",
             {{"segmentation",
               {{"segment_duration", plan.segment_duration},
                {"n_segments", plan.n_segments},
                {"segment_len", plan.segment_len}}},
              {"metrics", summary}});
  return 0;
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string features;
  std::string data;
  double alpha = 0.05;
  std::string out;
  std::string report;
  std::size_t threads = 0;
};

int run_filter(const FilterArgs& a) {
  const auto data = load_dataset(a.data);
  const auto matrix = read_feature_csv(a.features, &data.montage());
  try {
    auto res = stats::filter_features(matrix, data.labels(), data.n_classes(), a.alpha, a.threads);
    write_feature_csv(res.kept, a.out);
    write_json(a.report, res.report.to_json());
  } catch (const stats::KeptNothingError& e) {
    write_json(a.report, e.report().to_json());
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// select-metric
// ---------------------------------------------------------------------------

struct SelectArgs {
  std::string train;
  std::string val;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

pipeline::PipelineConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  pipeline::PipelineConfig cfg;
  if (!path.empty()) {
    auto j = read_json(path);
    for (const char* key : {"data", "train", "val", "test", "synthetic"}) j.erase(key);
    cfg = pipeline::config_from_json(j, cfg);
  }
  if (seed) cfg.seed = *seed;
  return cfg;
}

int run_select(const SelectArgs& a) {
  const auto cfg = load_config(a.config, a.seed);
  const auto train = load_dataset(a.train);
  const auto val = load_dataset(a.val);
  const auto plan = cfg.segment_duration
                        ? spectral::make_plan(train.n_timesteps(), train.sample_rate(), *cfg.segment_duration)
                        : spectral::default_plan(train.n_timesteps(), train.sample_rate());
  const auto ct = connectivity::try_compute_candidates(train, cfg.candidate_metrics, plan, cfg.threads);
  const auto cv = connectivity::try_compute_candidates(val, cfg.candidate_metrics, plan, cfg.threads);
  const auto res = pipeline::select_connectivity_metric(ct, cv, train.labels(), val.labels(), train.n_classes(),
                                                        cfg.selection_forest_size, cfg.seed, cfg.threads);
  json scores = json::array();
  for (const auto& s : res.scores) {
    json e = {{"metric", connectivity::metric_name(s.metric)}};
    if (s.val_accuracy) e["val_accuracy"] = *s.val_accuracy;
    else e["error"] = {{"kind", s.error_kind}, {"message", s.error_message}};
    scores.push_back(e);
  }
  emit_json(a.out, {{"selected_connectivity_metric", connectivity::metric_name(res.chosen)}, {"scores", scores}});
  return 0;
}

// ---------------------------------------------------------------------------
// train / evaluate / explain
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string features_a;
  std::string features_b;
  std::string data;
  std::size_t trees = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t threads = 0;
};

int run_train(const TrainArgs& a) {
  const auto data = load_dataset(a.data);
  const auto fa = read_feature_csv(a.features_a, &data.montage());
  forest::FusionForestModel model;
  if (a.features_b.empty()) {
    model = forest::fit_standard_rf(fa, data.labels(), data.n_classes(), a.trees, a.seed, a.threads);
  } else {
    const auto fb = read_feature_csv(a.features_b, &data.montage());
    model = forest::fit(fa, fb, data.labels(), data.n_classes(), a.trees, a.seed, a.threads);
  }
  forest::save_model(model, a.out);
  return 0;
}

struct EvaluateArgs {
  std::string predictions;
  std::string model;
  std::string features_a;
  std::string features_b;
  std::string data;
  std::optional<int> n_classes;
  std::string out;
};

// CSV with header y_true[,y_pred],p_0,...,p_{k-1}.
int run_evaluate(const EvaluateArgs& a) {
  std::vector<int> y_true, y_pred;
  std::vector<std::vector<double>> proba;
  int n_classes = 0;
  if (!a.predictions.empty()) {
    std::ifstream in(a.predictions);
    if (!in) throw FormatError("cannot open " + a.predictions);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(a.predictions + ": empty file");
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.empty() || header[0] != "y_true") throw FormatError("predictions: first column must be y_true");
    const bool has_pred = header.size() > 1 && header[1] == "y_pred";
    const std::size_t first_p = has_pred ? 2 : 1;
    n_classes = static_cast<int>(header.size() - first_p);
    if (n_classes < 2) throw FormatError("predictions: need a probability column per class");
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() != header.size()) throw FormatError("predictions: ragged row");
      try {
        y_true.push_back(std::stoi(cells[0]));
        std::vector<double> p;
        for (std::size_t k = first_p; k < cells.size(); ++k) p.push_back(std::stod(cells[k]));
        if (has_pred) y_pred.push_back(std::stoi(cells[1]));
        proba.push_back(std::move(p));
      } catch (const std::logic_error&) {
        throw FormatError("predictions: bad number in '" + line + "'");
      }
    }
    if (!has_pred) y_pred = forest::argmax_rows(proba);
  } else {
    if (a.model.empty() || a.data.empty() || a.features_a.empty())
      throw ParamError("evaluate needs --predictions or --model with --features-a and --data");
    const auto model = forest::load_model(a.model);
    const auto data = load_dataset(a.data);
    const auto fa = read_feature_csv(a.features_a, &data.montage());
    if (model.is_standard()) {
      proba = forest::predict_proba(model, fa);
    } else {
      if (a.features_b.empty()) throw ParamError("model has two modes; --features-b is required");
      proba = forest::predict_proba(model, fa, read_feature_csv(a.features_b, &data.montage()));
    }
    y_true = data.labels();
    y_pred = forest::argmax_rows(proba);
    n_classes = model.n_classes;
  }
  if (a.n_classes) n_classes = *a.n_classes;
  emit_json(a.out, pipeline::evaluate(y_true, y_pred, proba, n_classes));
  return 0;
}

struct ExplainArgs {
  std::string model;
  std::string features_a;
  std::string features_b;
  std::string data;
  std::string metric = "fpc";
  std::string config;
  std::string out;
};

int run_explain(const ExplainArgs& a) {
  const auto cfg = load_config(a.config, std::nullopt);
  const auto model = forest::load_model(a.model);
  const auto data = load_dataset(a.data);
  const auto fa = read_feature_csv(a.features_a, &data.montage());
  FeatureMatrix fb;
  fb.n_samples = fa.n_samples;
  if (!a.features_b.empty()) fb = read_feature_csv(a.features_b, &data.montage());
  const auto metric = connectivity::parse_metric(a.metric);
  if (!metric) throw ParamError("unknown connectivity metric '" + a.metric + "'");
  emit_json(a.out, pipeline::explain(model, fa, fb, data.labels(), data, *metric, cfg.explain));
  return 0;
}

// ---------------------------------------------------------------------------
// run-all
// ---------------------------------------------------------------------------

struct RunAllArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string train;
  std::string val;
  std::string test;
  std::string out = "knoweeg_out";
  std::optional<std::size_t> threads;
  bool no_retrain = false;
};

std::string resolve(const json& cfg, const char* key, const std::string& flag, const fs::path& base) {
  if (!flag.empty()) return flag;
  if (cfg.contains(key)) {
    fs::path p = cfg[key].get<std::string>();
    return (p.is_relative() ? base / p : p).string();
  }
  return {};
}

void write_predictions(const fs::path& path, std::span<const int> y_true, const std::vector<std::vector<double>>& proba) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const auto pred = forest::argmax_rows(proba);
  out << "y_true,y_pred";
  for (std::size_t c = 0; c < (proba.empty() ? 0 : proba[0].size()); ++c) out << ",p_" << c;
  out << '\n';
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    out << y_true[i] << ',' << pred[i];
    for (double p : proba[i]) out << ',' << format_double(p);
    out << '\n';
  }
}

int run_all(const RunAllArgs& a) {
  json raw = a.config.empty() ? json::object() : read_json(a.config);
  const fs::path base = a.config.empty() ? fs::current_path() : fs::path(a.config).parent_path();
  auto cfg = load_config(a.config, a.seed);
  if (a.threads) cfg.threads = *a.threads;
  if (a.no_retrain) cfg.retrain_on_train_val = false;

  const auto data_path = resolve(raw, "data", a.data, base);
  const auto train_path = resolve(raw, "train", a.train, base);
  const auto val_path = resolve(raw, "val", a.val, base);
  const auto test_path = resolve(raw, "test", a.test, base);

  // Splits use their own streams so a pipeline seed change reshuffles them too.
  const std::uint64_t split_seed = derive_seed(cfg.seed, 7);
  auto split3 = [&](const EegDataset& all) {
    const auto [rest_idx, test_idx] = stratified_partition(all.labels(), all.n_classes(), cfg.test_fraction, split_seed);
    const auto rest = all.subset(rest_idx, SplitTag::unsplit);
    auto [tr, va] = split_train_val(rest, cfg.val_fraction, derive_seed(split_seed, 1));
    return std::tuple{std::move(tr), std::move(va), all.subset(test_idx, SplitTag::test)};
  };

  EegDataset train, val, test;
  if (!train_path.empty()) {
    if (test_path.empty()) throw ParamError("--train needs --test");
    train = load_dataset(train_path);
    test = load_dataset(test_path);
    if (val_path.empty()) std::tie(train, val) = split_train_val(train, cfg.val_fraction, split_seed);
    else val = load_dataset(val_path);
  } else if (!data_path.empty()) {
    std::tie(train, val, test) = split3(load_dataset(data_path));
  } else if (raw.contains("synthetic")) {
    const auto spec = synthetic_spec_from_json(raw["synthetic"]);
    std::tie(train, val, test) = split3(generate_synthetic(spec, derive_seed(cfg.seed, 11)));
  } else {
    throw ParamError("no input: give --data, --train/--test, or a \"synthetic\" config section");
  }

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  try {
    const auto res = pipeline::run_pipeline(train, val, test, cfg);
    write_json(out_dir / "eval_report.json", res.eval.to_json());
    write_json(out_dir / "filter_report.json", res.filter.to_json());
    forest::save_model(res.model, out_dir / "model.json");
    write_json(out_dir / "explain_report.json",
               pipeline::explain(res.model, res.final_a, res.final_b, res.final_labels, res.final_data,
                                 res.eval.selected_connectivity_metric, cfg.explain));
    write_json(out_dir / "config_resolved.json", pipeline::config_to_json(cfg));
    write_feature_csv(res.final_a, out_dir / "features_per_electrode.csv");
    write_feature_csv(res.final_b, out_dir / "features_connectivity.csv");
    write_feature_csv(res.test_a, out_dir / "test_per_electrode.csv");
    write_feature_csv(res.test_b, out_dir / "test_connectivity.csv");
    write_predictions(out_dir / "test_predictions.csv", res.test_labels, res.test_proba);
    std::cout << res.eval.to_json()["metric_scores"].dump() << '\n';
  } catch (const stats::KeptNothingError& e) {
    write_json(out_dir / "filter_report.json", e.report().to_json());
    throw;
  }
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knoweeg: EEG classification with per-electrode and connectivity feature fusion"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled EEG dataset");
  c_synth->add_option("--spec", synth.spec, "Synthetic spec JSON (default: eyes task)")->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out, "Output .eegds path")->required();
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--n-samples", synth.n_samples, "Override the sample count");

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Per-electrode feature extraction to CSV");
  c_extract->add_option("--data", extract.data, "Dataset (.eegds or manifest .json)")->required();
  c_extract->add_option("--out", extract.out, "Output CSV")->required();
  c_extract->add_option("--features", extract.feature_ids, "Feature ids to keep (default: all)")->delimiter(',');
  c_extract->add_option("--threads", extract.threads, "Worker threads (0: default)");

  ConnectivityArgs conn;
  auto* c_conn = app.add_subcommand("connectivity", "Connectivity feature sets to CSV, one file per metric");
  c_conn->add_option("--data", conn.data, "Dataset")->required();
  c_conn->add_option("--out-dir", conn.out_dir, "Output directory")->required();
  c_conn->add_option("--metric", conn.metrics, "Metrics (default: all nine)")->delimiter(',');
  c_conn->add_option("--segment-duration", conn.segment_duration, "Segment length in seconds (default: auto)");
  c_conn->add_option("--threads", conn.threads, "Worker threads (0: default)");

  FilterArgs filter;
  auto* c_filter = app.add_subcommand("filter", "Nonparametric tests with BY correction on a feature CSV");
  c_filter->add_option("--features", filter.features, "Per-electrode feature CSV")->required();
  c_filter->add_option("--data", filter.data, "Dataset supplying the labels")->required();
  c_filter->add_option("--alpha", filter.alpha, "FDR level");
  c_filter->add_option("--out", filter.out, "Kept-column CSV")->required();
  c_filter->add_option("--report", filter.report, "Filter report JSON")->required();
  c_filter->add_option("--threads", filter.threads, "Worker threads (0: default)");

  SelectArgs select;
  auto* c_select = app.add_subcommand("select-metric", "Choose the connectivity metric on a validation set");
  c_select->add_option("--train", select.train, "Training dataset")->required();
  c_select->add_option("--val", select.val, "Validation dataset")->required();
  c_select->add_option("--config", select.config, "Pipeline config JSON");
  c_select->add_option("--seed", select.seed, "Seed (overrides config)");
  c_select->add_option("--out", select.out, "Output JSON (default: stdout)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit a Fusion Forest (or a standard forest without --features-b)");
  c_train->add_option("--features-a", train.features_a, "Mode-A feature CSV")->required();
  c_train->add_option("--features-b", train.features_b, "Mode-B feature CSV");
  c_train->add_option("--data", train.data, "Dataset supplying the labels")->required();
  c_train->add_option("--trees", train.trees, "Number of trees");
  c_train->add_option("--seed", train.seed, "Seed");
  c_train->add_option("--out", train.out, "Model JSON")->required();
  c_train->add_option("--threads", train.threads, "Worker threads (0: default)");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions or a saved model");
  c_eval->add_option("--predictions", evaluate.predictions, "CSV: y_true[,y_pred],p_0..p_k");
  c_eval->add_option("--model", evaluate.model, "Model JSON");
  c_eval->add_option("--features-a", evaluate.features_a, "Mode-A feature CSV");
  c_eval->add_option("--features-b", evaluate.features_b, "Mode-B feature CSV");
  c_eval->add_option("--data", evaluate.data, "Dataset supplying the labels");
  c_eval->add_option("--n-classes", evaluate.n_classes, "Class count override");
  c_eval->add_option("--out", evaluate.out, "Output JSON (default: stdout)");

  ExplainArgs explain;
  auto* c_explain = app.add_subcommand("explain", "Importance, band-rank, region and KS report for a model");
  c_explain->add_option("--model", explain.model, "Model JSON")->required();
  c_explain->add_option("--features-a", explain.features_a, "Mode-A feature CSV")->required();
  c_explain->add_option("--features-b", explain.features_b, "Mode-B feature CSV");
  c_explain->add_option("--data", explain.data, "Dataset the features came from")->required();
  c_explain->add_option("--metric", explain.metric, "Connectivity metric of mode B");
  c_explain->add_option("--config", explain.config, "Pipeline config JSON (explain section)");
  c_explain->add_option("--out", explain.out, "Output JSON (default: stdout)");

  RunAllArgs all;
  auto* c_all = app.add_subcommand("run-all", "Full pipeline: features, filter, metric selection, sweep, test, explain");
  c_all->add_option("--config", all.config, "Pipeline config JSON");
  c_all->add_option("--seed", all.seed, "Seed (overrides config)");
  c_all->add_option("--data", all.data, "Unsplit dataset");
  c_all->add_option("--train", all.train, "Training dataset");
  c_all->add_option("--val", all.val, "Validation dataset");
  c_all->add_option("--test", all.test, "Test dataset");
  c_all->add_option("--out", all.out, "Output directory");
  c_all->add_option("--threads", all.threads, "Worker threads (overrides config)");
  c_all->add_flag("--no-retrain", all.no_retrain, "Keep the train-only sweep model instead of refitting on train+val");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_extract->parsed()) return run_extract(extract);
    if (c_conn->parsed()) return run_connectivity(conn);
    if (c_filter->parsed()) return run_filter(filter);
    if (c_select->parsed()) return run_select(select);
    if (c_train->parsed()) return run_train(train);
    if (c_eval->parsed()) return run_evaluate(evaluate);
    if (c_explain->parsed()) return run_explain(explain);
    if (c_all->parsed()) return run_all(all);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 2;
}
