#include "knoweeg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "knoweeg/errors.hpp"
#include "knoweeg/parallel.hpp"
#include "knoweeg/rng.hpp"
#include "knoweeg/spectral.hpp"

namespace knoweeg::pipeline {

using connectivity::Metric;
using nlohmann::json;

namespace {

// Independent random streams derived from the master seed.
constexpr std::uint64_t kSelectionStream = 1000;
constexpr std::uint64_t kFusionStream = 2000;

std::size_t resolve_threads(std::size_t t) { return t == 0 ? default_threads() : t; }

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

PipelineConfig::PipelineConfig() {
  const auto& all = connectivity::all_metrics();
  candidate_metrics.assign(all.begin(), all.end());
}

void PipelineConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParamError("alpha must lie in (0, 1)");
  if (candidate_metrics.empty()) throw ParamError("candidate_metrics is empty");
  if (selection_forest_size == 0) throw ParamError("selection_forest_size must be positive");
  if (tree_sweep.empty()) throw ParamError("tree_sweep is empty");
  for (auto k : tree_sweep)
    if (k == 0) throw ParamError("tree_sweep entries must be positive");
  if (segment_duration && !(*segment_duration > 0.0)) throw ParamError("segmentation must be positive seconds");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParamError("val_fraction must lie in (0, 1)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParamError("test_fraction must lie in (0, 1)");
  if (explain.histogram_bins == 0) throw ParamError("explain.histogram_bins must be positive");
}

json config_to_json(const PipelineConfig& cfg) {
  json metrics = json::array();
  for (auto m : cfg.candidate_metrics) metrics.push_back(connectivity::metric_name(m));
  json bands = json::array();
  for (auto b : cfg.explain.topomap_bands) bands.push_back(band_name(b));
  return {{"alpha", cfg.alpha},
          {"candidate_metrics", metrics},
          {"selection_forest_size", cfg.selection_forest_size},
          {"tree_sweep", cfg.tree_sweep},
          {"segmentation", cfg.segment_duration ? json(*cfg.segment_duration) : json("auto")},
          {"seed", cfg.seed},
          {"feature_registry", cfg.feature_registry.empty() ? json("default") : json(cfg.feature_registry)},
          {"retrain_on_train_val", cfg.retrain_on_train_val},
          {"val_fraction", cfg.val_fraction},
          {"test_fraction", cfg.test_fraction},
          {"threads", cfg.threads},
          {"explain",
           {{"top_n", cfg.explain.top_n},
            {"ks_top", cfg.explain.ks_top},
            {"histogram_bins", cfg.explain.histogram_bins},
            {"topomap_bands", bands}}}};
}

PipelineConfig config_from_json(const json& j, PipelineConfig cfg) {
  if (!j.is_object()) throw ParamError("config must be a JSON object");
  static const std::set<std::string> known = {"alpha",        "candidate_metrics", "selection_forest_size",
                                              "tree_sweep",   "segmentation",      "seed",
                                              "feature_registry", "retrain_on_train_val", "val_fraction",
                                              "test_fraction", "threads",          "explain"};
  try {
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ParamError("unknown config key '" + key + "'");
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("candidate_metrics")) {
      std::set<Metric> chosen;
      for (const auto& name : j["candidate_metrics"]) {
        const auto m = connectivity::parse_metric(name.get<std::string>());
        if (!m) throw ParamError("unknown connectivity metric '" + name.get<std::string>() + "'");
        chosen.insert(*m);
      }
      cfg.candidate_metrics.clear();
      for (auto m : connectivity::all_metrics())
        if (chosen.count(m)) cfg.candidate_metrics.push_back(m);
    }
    if (j.contains("selection_forest_size")) cfg.selection_forest_size = j["selection_forest_size"].get<std::size_t>();
    if (j.contains("tree_sweep")) cfg.tree_sweep = j["tree_sweep"].get<std::vector<std::size_t>>();
    if (j.contains("segmentation")) {
      const auto& s = j["segmentation"];
      if (s.is_string() && s == "auto") cfg.segment_duration.reset();
      else if (s.is_number()) cfg.segment_duration = s.get<double>();
      else if (s.is_object() && s.contains("segment_duration")) cfg.segment_duration = s["segment_duration"].get<double>();
      else throw ParamError("segmentation must be \"auto\", seconds, or {\"segment_duration\": seconds}");
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("feature_registry")) {
      const auto& r = j["feature_registry"];
      if (r.is_string() && r == "default") cfg.feature_registry.clear();
      else cfg.feature_registry = r.get<std::vector<std::string>>();
    }
    if (j.contains("retrain_on_train_val")) cfg.retrain_on_train_val = j["retrain_on_train_val"].get<bool>();
    if (j.contains("val_fraction")) cfg.val_fraction = j["val_fraction"].get<double>();
    if (j.contains("test_fraction")) cfg.test_fraction = j["test_fraction"].get<double>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<std::size_t>();
    if (j.contains("explain")) {
      const auto& e = j["explain"];
      for (const auto& [key, value] : e.items())
        if (key != "top_n" && key != "ks_top" && key != "histogram_bins" && key != "topomap_bands")
          throw ParamError("unknown explain key '" + key + "'");
      if (e.contains("top_n")) cfg.explain.top_n = e["top_n"].get<std::size_t>();
      if (e.contains("ks_top")) cfg.explain.ks_top = e["ks_top"].get<std::size_t>();
      if (e.contains("histogram_bins")) cfg.explain.histogram_bins = e["histogram_bins"].get<std::size_t>();
      if (e.contains("topomap_bands")) {
        cfg.explain.topomap_bands.clear();
        for (const auto& name : e["topomap_bands"]) {
          const auto b = parse_band(name.get<std::string>());
          if (!b) throw ParamError("unknown band '" + name.get<std::string>() + "'");
          cfg.explain.topomap_bands.push_back(*b);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParamError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw InputError("accuracy: length mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double auroc(std::span<const int> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size() || y_true.empty()) throw InputError("auroc: length mismatch or empty");
  const auto ranks = stats::midranks(scores);
  double n_pos = 0.0, n_neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1) {
      n_pos += 1.0;
      rank_sum += ranks[i];
    } else {
      n_neg += 1.0;
    }
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw UndefinedMetricError("AUROC needs both classes in y_true");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

namespace {

struct Confusion {
  std::vector<double> tp, support, predicted;
};

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw InputError("metrics: length mismatch or empty");
  const auto k = static_cast<std::size_t>(n_classes);
  Confusion c{std::vector<double>(k), std::vector<double>(k), std::vector<double>(k)};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto t = static_cast<std::size_t>(y_true[i]), p = static_cast<std::size_t>(y_pred[i]);
    if (t >= k || p >= k) throw InputError("metrics: label out of range");
    c.support[t] += 1.0;
    c.predicted[p] += 1.0;
    if (t == p) c.tp[t] += 1.0;
  }
  return c;
}

}  // namespace

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  const auto c = confusion(y_true, y_pred, n_classes);
  double sum = 0.0, present = 0.0;
  for (std::size_t k = 0; k < c.tp.size(); ++k)
    if (c.support[k] > 0.0) {
      sum += c.tp[k] / c.support[k];
      present += 1.0;
    }
  return sum / present;
}

double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  const auto c = confusion(y_true, y_pred, n_classes);
  double sum = 0.0;
  for (std::size_t k = 0; k < c.tp.size(); ++k) {
    const double denom = c.support[k] + c.predicted[k];
    const double f1 = denom > 0.0 ? 2.0 * c.tp[k] / denom : 0.0;
    sum += c.support[k] * f1;
  }
  return sum / static_cast<double>(y_true.size());
}

std::map<std::string, double> evaluate(std::span<const int> y_true, std::span<const int> y_pred,
                                       const std::vector<std::vector<double>>& proba, int n_classes) {
  if (proba.size() != y_true.size()) throw InputError("evaluate: probability rows differ from label count");
  std::map<std::string, double> out;
  if (n_classes == 2) {
    std::vector<double> pos(proba.size());
    for (std::size_t i = 0; i < proba.size(); ++i) pos[i] = proba[i].at(1);
    out["accuracy"] = accuracy(y_true, y_pred);
    out["auroc"] = auroc(y_true, pos);
  } else {
    out["balanced_accuracy"] = balanced_accuracy(y_true, y_pred, n_classes);
    out["weighted_f1"] = weighted_f1(y_true, y_pred, n_classes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metric selection
// ---------------------------------------------------------------------------

SelectionResult select_connectivity_metric(std::span<const connectivity::CandidateOutcome> train,
                                           std::span<const connectivity::CandidateOutcome> val,
                                           std::span<const int> train_labels, std::span<const int> val_labels,
                                           int n_classes, std::size_t forest_size, std::uint64_t seed,
                                           std::size_t threads) {
  if (train.empty() || train.size() != val.size()) throw SelectionError("metric selection: candidate lists differ");
  if (val_labels.empty()) throw SelectionError("metric selection: empty validation set");
  SelectionResult result;
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < train.size(); ++k) {
    SelectionScore score;
    score.metric = train[k].metric;
    if (val[k].metric != score.metric) throw SelectionError("metric selection: candidate order differs");
    const auto* failed = !train[k].set ? &train[k] : (!val[k].set ? &val[k] : nullptr);
    if (failed) {
      score.error_kind = failed->error_kind;
      score.error_message = failed->error_message;
    } else {
      try {
        const auto& tr = train[k].set->matrix;
        const auto& va = val[k].set->matrix;
        const auto model = forest::fit_standard_rf(
            tr, train_labels, n_classes, forest_size,
            derive_seed(seed, kSelectionStream + static_cast<std::uint64_t>(score.metric)), threads);
        score.forest_columns = model.descriptors_a;
        const auto pred = forest::argmax_rows(forest::predict_proba(model, va));
        score.val_accuracy = accuracy(val_labels, pred);
        if (!best || *score.val_accuracy > *result.scores[*best].val_accuracy) best = k;
      } catch (const Error& e) {
        score.error_kind = e.kind();
        score.error_message = "metric " + std::string(connectivity::metric_name(score.metric)) + ": " + e.what();
      }
    }
    result.scores.push_back(std::move(score));
  }
  if (!best) throw SelectionError("every candidate connectivity metric failed");
  result.chosen = result.scores[*best].metric;
  return result;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

json EvalReport::to_json() const {
  json selection = json::array();
  for (const auto& s : metric_selection) {
    json e = {{"metric", connectivity::metric_name(s.metric)}};
    if (s.val_accuracy) e["val_accuracy"] = *s.val_accuracy;
    else e["error"] = {{"kind", s.error_kind}, {"message", s.error_message}};
    selection.push_back(std::move(e));
  }
  json sweep = json::array();
  for (const auto& p : tree_sweep) sweep.push_back({{"k_trees", p.k_trees}, {"val_score", p.val_score}});
  json low = json::array();
  for (std::size_t b = 0; b < low_resolution_bands.size(); ++b)
    if (low_resolution_bands[b]) low.push_back(canonical_bands()[b].name);
  return {{"schema", "knoweeg.eval_report"},
          {"version", 1},
          {"task", task},
          {"n_classes", n_classes},
          {"seed", seed},
          {"metric_scores", metric_scores},
          {"selected_connectivity_metric", connectivity::metric_name(selected_connectivity_metric)},
          {"metric_selection", selection},
          {"chosen_k_trees", chosen_k_trees},
          {"sweep_score", sweep_score},
          {"tree_sweep", sweep},
          {"filter_summary",
           {{"alpha", alpha},
            {"test_used", test_used},
            {"n_features", n_features},
            {"n_nan_dropped", n_nan_dropped},
            {"n_kept", n_kept}}},
          {"segmentation",
           {{"segment_duration", segmentation.segment_duration},
            {"n_segments", segmentation.n_segments},
            {"segment_len", segmentation.segment_len},
            {"nfft", nfft},
            {"low_resolution_bands", low}}},
          {"splits", {{"train", n_train}, {"val", n_val}, {"test", n_test}}},
          {"model",
           {{"hash", model_hash},
            {"n_trees", chosen_k_trees},
            {"mode_a_columns", mode_a_columns},
            {"mode_b_columns", mode_b_columns},
            {"retrained_on_train_val", retrained_on_train_val}}}};
}

namespace {

void check_compatible(const EegDataset& a, const EegDataset& b, const char* what) {
  if (!(a.montage() == b.montage())) throw MontageError(std::string(what) + ": montages differ");
  if (a.sample_rate() != b.sample_rate()) throw InputError(std::string(what) + ": sample rates differ");
  if (a.n_timesteps() != b.n_timesteps()) throw InputError(std::string(what) + ": sample lengths differ");
  if (a.n_classes() != b.n_classes()) throw LabelError(std::string(what) + ": class counts differ");
}

const connectivity::ConnectivitySet& chosen_set(const std::vector<connectivity::CandidateOutcome>& outcomes,
                                                Metric metric) {
  for (const auto& o : outcomes)
    if (o.metric == metric && o.set) return *o.set;
  throw SelectionError("selected metric has no feature set");
}

}  // namespace

PipelineResult run_pipeline(const EegDataset& train, const EegDataset& val, const EegDataset& test,
                            const PipelineConfig& cfg) {
  cfg.validate();
  check_compatible(train, val, "train/val");
  check_compatible(train, test, "train/test");
  if (train.n_samples() == 0 || val.n_samples() == 0 || test.n_samples() == 0)
    throw InputError("every split needs at least one sample");
  const std::size_t threads = resolve_threads(cfg.threads);
  const int n_classes = train.n_classes();

  PipelineResult out;
  EvalReport& rep = out.eval;
  rep.task = n_classes == 2 ? "binary" : "multiclass";
  rep.n_classes = n_classes;
  rep.seed = cfg.seed;
  rep.n_train = train.n_samples();
  rep.n_val = val.n_samples();
  rep.n_test = test.n_samples();
  rep.retrained_on_train_val = cfg.retrain_on_train_val;

  // Thread one: per-electrode features, filter fit on train only.
  auto registry = features::FeatureRegistry::default_registry();
  if (!cfg.feature_registry.empty()) registry = registry.select(cfg.feature_registry);
  const auto raw_train = features::extract_features(train, registry, threads);
  const auto raw_val = features::extract_features(val, registry, threads);
  const auto raw_test = features::extract_features(test, registry, threads);
  auto filtered = stats::filter_features(raw_train, train.labels(), n_classes, cfg.alpha, threads);
  out.filter = std::move(filtered.report);
  out.train_a = std::move(filtered.kept);
  out.val_a = stats::apply_filter(raw_val, out.filter);
  out.test_a = stats::apply_filter(raw_test, out.filter);
  rep.alpha = cfg.alpha;
  rep.test_used = std::string(stats::test_kind_name(out.filter.test_used));
  rep.n_features = out.filter.entries.size();
  rep.n_kept = out.filter.n_kept();
  rep.n_nan_dropped = static_cast<std::size_t>(std::count_if(out.filter.entries.begin(), out.filter.entries.end(),
                                                             [](const auto& e) {
                                                               return e.drop_reason == stats::DropReason::nan_column;
                                                             }));

  // Thread two: candidate metrics, selection on validation accuracy.
  rep.segmentation = cfg.segment_duration
                         ? spectral::make_plan(train.n_timesteps(), train.sample_rate(), *cfg.segment_duration)
                         : spectral::default_plan(train.n_timesteps(), train.sample_rate());
  rep.nfft = spectral::covering_nfft(rep.segmentation.segment_len, train.sample_rate());
  rep.low_resolution_bands = connectivity::low_resolution_bands(rep.segmentation, train.sample_rate());
  const auto cand_train = connectivity::try_compute_candidates(train, cfg.candidate_metrics, rep.segmentation, threads);
  const auto cand_val = connectivity::try_compute_candidates(val, cfg.candidate_metrics, rep.segmentation, threads);
  auto selection = select_connectivity_metric(cand_train, cand_val, train.labels(), val.labels(), n_classes,
                                              cfg.selection_forest_size, cfg.seed, threads);
  rep.selected_connectivity_metric = selection.chosen;
  rep.metric_selection = std::move(selection.scores);
  const Metric chosen[] = {rep.selected_connectivity_metric};
  out.train_b = chosen_set(cand_train, chosen[0]).matrix;
  out.val_b = chosen_set(cand_val, chosen[0]).matrix;
  {
    auto test_sets = connectivity::try_compute_candidates(test, chosen, rep.segmentation, threads);
    if (!test_sets.front().set) throw Error(test_sets.front().error_kind, test_sets.front().error_message);
    out.test_b = std::move(test_sets.front().set->matrix);
  }

  // Tree-count sweep: one forest of the largest size, scored by prefix.
  const std::uint64_t fusion_seed = derive_seed(cfg.seed, kFusionStream);
  const std::size_t k_max = *std::max_element(cfg.tree_sweep.begin(), cfg.tree_sweep.end());
  const auto sweep_model =
      forest::fit(out.train_a, out.train_b, train.labels(), n_classes, k_max, fusion_seed, threads);
  const auto sweep_proba = forest::predict_proba_prefixes(sweep_model, out.val_a, out.val_b, cfg.tree_sweep);
  rep.sweep_score = n_classes == 2 ? "accuracy" : "balanced_accuracy";
  double best_score = -1.0;
  for (std::size_t q = 0; q < cfg.tree_sweep.size(); ++q) {
    const auto pred = forest::argmax_rows(sweep_proba[q]);
    const double s = n_classes == 2 ? accuracy(val.labels(), pred) : balanced_accuracy(val.labels(), pred, n_classes);
    rep.tree_sweep.push_back({cfg.tree_sweep[q], s});
    if (s > best_score) {
      best_score = s;
      rep.chosen_k_trees = cfg.tree_sweep[q];
    }
  }

  // Final model and the single test evaluation.
  if (cfg.retrain_on_train_val) {
    out.final_a = FeatureMatrix::vstack(out.train_a, out.val_a);
    out.final_b = FeatureMatrix::vstack(out.train_b, out.val_b);
    out.final_data = EegDataset::concat(train, val, SplitTag::train);
    out.model = forest::fit(out.final_a, out.final_b, out.final_data.labels(), n_classes, rep.chosen_k_trees,
                            fusion_seed, threads);
  } else {
    out.final_a = out.train_a;
    out.final_b = out.train_b;
    out.final_data = train;
    out.model = forest::truncated(sweep_model, rep.chosen_k_trees);
  }
  out.final_labels = out.final_data.labels();
  out.test_labels = test.labels();
  out.test_proba = forest::predict_proba(out.model, out.test_a, out.test_b);
  const auto test_pred = forest::argmax_rows(out.test_proba);
  rep.metric_scores = evaluate(out.test_labels, test_pred, out.test_proba, n_classes);
  rep.mode_a_columns = out.model.n_columns_a();
  rep.mode_b_columns = out.model.n_columns_b();
  rep.model_hash = forest::model_hash(out.model);
  return out;
}

// ---------------------------------------------------------------------------
// Explainability
// ---------------------------------------------------------------------------

std::vector<RankedFeature> rank_features(const forest::FusionForestModel& model) {
  std::vector<std::size_t> order(model.n_columns());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return model.importances[a] > model.importances[b]; });
  std::vector<RankedFeature> out;
  out.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t c = order[r];
    const bool in_a = c < model.n_columns_a();
    out.push_back({r + 1, c, in_a ? model.descriptors_a[c] : model.descriptors_b[c - model.n_columns_a()],
                   in_a ? "per_electrode" : "connectivity", model.importances[c]});
  }
  return out;
}

std::optional<std::array<double, kBandCount>> band_rank_scores(std::span<const std::string> descriptors,
                                                               std::span<const double> importances,
                                                               std::size_t* n_pairs) {
  if (descriptors.size() != importances.size()) throw InputError("band_rank_scores: size mismatch");
  // (metric, channel, partner) -> per-band importance
  std::map<std::tuple<std::string, std::string, std::string>, std::array<double, kBandCount>> pairs;
  for (std::size_t c = 0; c < descriptors.size(); ++c) {
    if (descriptors[c].rfind("con__", 0) != 0) continue;
    const auto d = FeatureDescriptor::parse(descriptors[c]);
    const auto band = parse_band(d.band);
    if (!band) continue;
    auto [it, inserted] = pairs.try_emplace({d.feature_id, d.channel, d.partner});
    if (inserted) it->second.fill(0.0);
    it->second[static_cast<std::size_t>(*band)] = importances[c];
  }
  if (n_pairs) *n_pairs = pairs.size();
  if (pairs.empty()) return std::nullopt;
  std::array<double, kBandCount> scores{};
  for (const auto& [key, imp] : pairs) {
    std::array<std::size_t, kBandCount> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    for (std::size_t r = 0; r < kBandCount; ++r) scores[order[r]] += static_cast<double>(kBandCount - 1 - r);
  }
  return scores;
}

namespace {

json histogram(std::span<const double> values, std::size_t bins) {
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  if (!(hi > 0.0)) hi = 1.0;
  std::vector<double> edges(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) edges[k] = hi * static_cast<double>(k) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto k = static_cast<std::size_t>(v / hi * static_cast<double>(bins));
    ++counts[std::min(k, bins - 1)];
  }
  return {{"bin_edges", edges}, {"counts", counts}, {"n_features", values.size()}};
}

json describe(const RankedFeature& f, const Montage& montage) {
  const auto d = FeatureDescriptor::parse(f.descriptor, &montage);
  json channels = json::array(), regions = json::array();
  for (const auto& ch : d.channels()) {
    channels.push_back(ch);
    const auto idx = montage.index_of(ch);
    regions.push_back(idx ? json(montage.regions[*idx]) : json::array());
  }
  json params = json::object();
  for (const auto& [k, v] : d.params) params[k] = v;
  const char* kind = d.kind == FeatureDescriptor::Kind::electrode ? "electrode"
                     : d.kind == FeatureDescriptor::Kind::pair    ? "pair"
                                                                  : "band_power";
  return {{"rank", f.rank},
          {"descriptor", f.descriptor},
          {"mode", f.mode},
          {"importance", f.importance},
          {"kind", kind},
          {"feature_id", d.feature_id},
          {"params", params},
          {"band", d.band.empty() ? json(nullptr) : json(d.band)},
          {"channels", channels},
          {"regions", regions}};
}

std::vector<double> column_of(const FeatureMatrix& a, const FeatureMatrix& b, std::size_t global) {
  return global < a.n_features() ? a.column(global) : b.column(global - a.n_features());
}

}  // namespace

json explain(const forest::FusionForestModel& model, const FeatureMatrix& features_a, const FeatureMatrix& features_b,
             std::span<const int> labels, const EegDataset& data, Metric metric, const ExplainConfig& cfg) {
  if (features_a.descriptor_strings() != model.descriptors_a ||
      features_b.descriptor_strings() != model.descriptors_b)
    throw AlignmentError("explain: feature descriptors differ from the model");
  if (labels.size() != features_a.n_samples || features_b.n_samples != features_a.n_samples)
    throw AlignmentError("explain: row counts differ");
  const Montage& montage = data.montage();
  const auto n_classes = static_cast<std::size_t>(model.n_classes);
  const auto ranked = rank_features(model);

  json report = {{"schema", "knoweeg.explain_report"},
                 {"version", 1},
                 {"connectivity_metric", connectivity::metric_name(metric)},
                 {"n_classes", model.n_classes},
                 {"montage", montage_to_json(montage)}};

  // (a) importance histograms per mode
  const std::span<const double> imp(model.importances);
  report["importance_histograms"] = {
      {"per_electrode", histogram(imp.subspan(0, model.n_columns_a()), cfg.histogram_bins)},
      {"connectivity", histogram(imp.subspan(model.n_columns_a()), cfg.histogram_bins)}};

  // (b) band rank scores over the connectivity pair columns
  std::size_t n_pairs = 0;
  const auto scores = band_rank_scores(model.descriptors_b, imp.subspan(model.n_columns_a()), &n_pairs);
  if (scores) {
    json s = json::object();
    double total = 0.0;
    for (std::size_t b = 0; b < kBandCount; ++b) {
      s[std::string(canonical_bands()[b].name)] = (*scores)[b];
      total += (*scores)[b];
    }
    report["band_rank_scores"] = {{"available", true}, {"n_pairs", n_pairs}, {"scores", s}, {"total", total}};
  } else {
    report["band_rank_scores"] = {
        {"available", false},
        {"reason", std::string(connectivity::metric_name(metric)) + " features carry no frequency band"}};
  }

  // (c) top-N tables
  json top = json::array(), top_pe = json::array();
  std::vector<RankedFeature> per_electrode;
  for (const auto& f : ranked)
    if (f.mode == "per_electrode") per_electrode.push_back(f);
  for (std::size_t r = 0; r < std::min(cfg.top_n, ranked.size()); ++r) top.push_back(describe(ranked[r], montage));
  for (std::size_t r = 0; r < std::min(cfg.top_n, per_electrode.size()); ++r) {
    auto f = per_electrode[r];
    f.rank = r + 1;
    top_pe.push_back(describe(f, montage));
  }
  report["top_features"] = top;
  report["top_per_electrode"] = top_pe;

  // (d) region counts within the per-electrode ranking; a channel with two
  // region tags counts toward both.
  json region_counts = json::object();
  for (std::size_t n : {5, 10, 20, 100}) {
    std::map<std::string, std::size_t> counts;
    for (std::size_t r = 0; r < std::min(n, per_electrode.size()); ++r) {
      const auto d = FeatureDescriptor::parse(per_electrode[r].descriptor, &montage);
      const auto idx = montage.index_of(d.channel);
      if (!idx) continue;
      for (const auto& region : montage.regions[*idx]) ++counts[region];
    }
    region_counts[std::to_string(n)] = counts;
  }
  report["region_counts"] = {{"ranking", "per_electrode"}, {"counts", region_counts}};

  // (e) KS tests between classes for the top features, with the raw values
  // the KDE plots are drawn from.
  json ks = json::array();
  for (std::size_t r = 0; r < std::min(cfg.ks_top, ranked.size()); ++r) {
    const auto values = column_of(features_a, features_b, ranked[r].column);
    std::vector<std::vector<double>> by_class(n_classes);
    for (std::size_t i = 0; i < values.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(values[i]);
    json tests = json::array();
    auto add_test = [&](const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
      if (x.empty() || y.empty()) return;
      const auto t = stats::ks_two_sample(x, y);
      tests.push_back({{"comparison", name}, {"D", t.statistic}, {"p", t.p}});
    };
    if (n_classes == 2) {
      add_test("0_vs_1", by_class[0], by_class[1]);
    } else {
      for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<double> rest;
        for (std::size_t o = 0; o < n_classes; ++o)
          if (o != c) rest.insert(rest.end(), by_class[o].begin(), by_class[o].end());
        add_test(std::to_string(c) + "_vs_rest", by_class[c], rest);
      }
    }
    ks.push_back({{"rank", ranked[r].rank},
                  {"descriptor", ranked[r].descriptor},
                  {"tests", tests},
                  {"values_by_class", by_class}});
  }
  report["ks_results"] = ks;

  // (f) topomap data: per-class mean relative band power per channel, and
  // importance mass per channel (pair columns split evenly).
  const std::size_t n_ch = data.n_channels();
  std::vector<std::vector<std::array<double, kBandCount>>> sums(n_classes,
                                                                std::vector<std::array<double, kBandCount>>(n_ch));
  std::vector<std::vector<std::size_t>> counts(n_classes, std::vector<std::size_t>(n_ch, 0));
  std::vector<std::vector<std::optional<spectral::BandVector>>> rel(data.n_samples());
  parallel_for(data.n_samples(), [&](std::size_t s) {
    rel[s].resize(n_ch);
    for (std::size_t ch = 0; ch < n_ch; ++ch) {
      try {
        const auto x = data.channel(s, ch);
        const std::vector<double> xd(x.begin(), x.end());
        const auto psd = spectral::welch_psd(std::span<const double>(xd), data.sample_rate());
        rel[s][ch] = spectral::relative_band_powers(psd.freqs, psd.power[0]);
      } catch (const Error&) {
      }
    }
  });
  for (std::size_t s = 0; s < data.n_samples(); ++s) {
    const auto y = static_cast<std::size_t>(data.labels()[s]);
    for (std::size_t ch = 0; ch < n_ch; ++ch)
      if (rel[s][ch]) {
        for (std::size_t b = 0; b < kBandCount; ++b) sums[y][ch][b] += (*rel[s][ch])[b];
        ++counts[y][ch];
      }
  }
  json rbp = json::object();
  for (Band band : cfg.topomap_bands) {
    const auto b = static_cast<std::size_t>(band);
    json per_class = json::array();
    for (std::size_t c = 0; c < n_classes; ++c) {
      json row = json::array();
      for (std::size_t ch = 0; ch < n_ch; ++ch)
        row.push_back(counts[c][ch] ? json(sums[c][ch][b] / static_cast<double>(counts[c][ch])) : json(nullptr));
      per_class.push_back(row);
    }
    rbp[std::string(band_name(band))] = per_class;
  }
  std::vector<double> by_channel(n_ch, 0.0);
  for (const auto& f : ranked) {
    const auto d = FeatureDescriptor::parse(f.descriptor, &montage);
    const auto chs = d.channels();
    for (const auto& ch : chs)
      if (const auto idx = montage.index_of(ch)) by_channel[*idx] += f.importance / static_cast<double>(chs.size());
  }
  json classes = json::array();
  for (std::size_t c = 0; c < n_classes; ++c) classes.push_back(c);
  report["topomap"] = {{"channels", montage.channel_names},
                       {"classes", classes},
                       {"relative_band_power", rbp},
                       {"importance_by_channel", by_channel}};
  return report;
}

}  // namespace knoweeg::pipeline
