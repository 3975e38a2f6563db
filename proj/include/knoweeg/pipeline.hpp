#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "knoweeg/connectivity.hpp"
#include "knoweeg/core.hpp"
#include "knoweeg/feature_matrix.hpp"
#include "knoweeg/features.hpp"
#include "knoweeg/forest.hpp"
#include "knoweeg/stats.hpp"

namespace knoweeg::pipeline {

struct ExplainConfig {
  std::size_t top_n = 10;
  std::size_t ks_top = 10;
  std::size_t histogram_bins = 20;
  std::vector<Band> topomap_bands = {Band::alpha, Band::gamma};
};

struct PipelineConfig {
  double alpha = 0.05;
  std::vector<connectivity::Metric> candidate_metrics;  // canonical order; all nine by default
  std::size_t selection_forest_size = 100;
  std::vector<std::size_t> tree_sweep = {50, 100, 200, 500, 800, 1000};
  std::optional<double> segment_duration;  // seconds; empty: chosen from the signal duration
  std::uint64_t seed = 0;
  std::vector<std::string> feature_registry;  // feature ids; empty: the full built-in registry
  bool retrain_on_train_val = true;
  double val_fraction = 0.2;   // used when only a training set is supplied
  double test_fraction = 0.2;  // used when a single unsplit dataset is supplied
  std::size_t threads = 0;     // 0: KNOWEEG_THREADS or hardware concurrency
  ExplainConfig explain;

  PipelineConfig();
  // Throws ParamError on out-of-range values.
  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
// Fields present in `j` override `base`; unknown keys are a ParamError.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

double accuracy(std::span<const int> y_true, std::span<const int> y_pred);
// Rank statistic over positive-class scores, ties at midrank. Throws
// UndefinedMetricError when y_true holds a single class.
double auroc(std::span<const int> y_true, std::span<const double> positive_scores);
// Mean recall over the classes present in y_true.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);
// Support-weighted per-class F1 (0 for a class with no predicted or true hits).
double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);

// Binary: accuracy and auroc (score = probability of class 1).
// Multiclass: balanced_accuracy and weighted_f1.
std::map<std::string, double> evaluate(std::span<const int> y_true, std::span<const int> y_pred,
                                       const std::vector<std::vector<double>>& proba, int n_classes);

// ---------------------------------------------------------------------------
// Metric selection
// ---------------------------------------------------------------------------

struct SelectionScore {
  connectivity::Metric metric = connectivity::Metric::correlation;
  std::optional<double> val_accuracy;        // empty when the metric failed
  std::string error_kind;
  std::string error_message;
  std::vector<std::string> forest_columns;   // descriptors the selection forest saw
};

struct SelectionResult {
  connectivity::Metric chosen = connectivity::Metric::correlation;
  std::vector<SelectionScore> scores;  // candidate order
};

// Fits a standard forest of `forest_size` trees per candidate on its
// training connectivity matrix and keeps the best validation accuracy; ties
// go to the earlier candidate. Failed candidates are skipped; SelectionError
// when none succeeds.
SelectionResult select_connectivity_metric(std::span<const connectivity::CandidateOutcome> train,
                                           std::span<const connectivity::CandidateOutcome> val,
                                           std::span<const int> train_labels, std::span<const int> val_labels,
                                           int n_classes, std::size_t forest_size, std::uint64_t seed,
                                           std::size_t threads = 0);

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct SweepPoint {
  std::size_t k_trees = 0;
  double val_score = 0.0;
};

struct EvalReport {
  std::string task;  // "binary" or "multiclass"
  int n_classes = 2;
  std::uint64_t seed = 0;
  std::map<std::string, double> metric_scores;
  connectivity::Metric selected_connectivity_metric = connectivity::Metric::correlation;
  std::vector<SelectionScore> metric_selection;
  std::size_t chosen_k_trees = 0;
  std::string sweep_score;  // "accuracy" or "balanced_accuracy"
  std::vector<SweepPoint> tree_sweep;
  double alpha = 0.05;
  std::string test_used;
  std::size_t n_features = 0;
  std::size_t n_nan_dropped = 0;
  std::size_t n_kept = 0;
  spectral::SegmentationPlan segmentation;
  std::size_t nfft = 0;
  std::vector<bool> low_resolution_bands;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  bool retrained_on_train_val = true;
  std::size_t mode_a_columns = 0, mode_b_columns = 0;
  std::string model_hash;

  nlohmann::json to_json() const;
};

struct PipelineResult {
  forest::FusionForestModel model;
  EvalReport eval;
  stats::FilterReport filter;
  // Data the final model was trained on, for explain().
  FeatureMatrix final_a;
  FeatureMatrix final_b;
  std::vector<int> final_labels;
  EegDataset final_data;
  // Test-set outputs.
  std::vector<int> test_labels;
  std::vector<std::vector<double>> test_proba;
  // Feature matrices per split (mode A after filtering, mode B the chosen metric).
  FeatureMatrix train_a, val_a, test_a;
  FeatureMatrix train_b, val_b, test_b;
};

// Both threads, metric selection on val, tree sweep on val, final fit and a
// single test evaluation. Throws KeptNothingError when the filter keeps no
// per-electrode feature, SelectionError when every metric fails.
PipelineResult run_pipeline(const EegDataset& train, const EegDataset& val, const EegDataset& test,
                            const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Explainability
// ---------------------------------------------------------------------------

struct RankedFeature {
  std::size_t rank = 0;  // 1-based
  std::size_t column = 0;
  std::string descriptor;
  std::string mode;  // "per_electrode" or "connectivity"
  double importance = 0.0;
};

// Columns ordered by importance, descending; ties by column index.
std::vector<RankedFeature> rank_features(const forest::FusionForestModel& model);

// Per-band rank scores: for each electrode pair, its six band importances
// are ranked and awarded 5..0 (ties: delta before gamma), then summed per
// band. Pairs are read from con__ descriptors; returns nothing when no
// descriptor carries a band.
std::optional<std::array<double, kBandCount>> band_rank_scores(std::span<const std::string> descriptors,
                                                               std::span<const double> importances,
                                                               std::size_t* n_pairs = nullptr);

// Builds explain_report.json ("knoweeg.explain_report", version 1).
nlohmann::json explain(const forest::FusionForestModel& model, const FeatureMatrix& features_a,
                       const FeatureMatrix& features_b, std::span<const int> labels, const EegDataset& data,
                       connectivity::Metric metric, const ExplainConfig& cfg);

}  // namespace knoweeg::pipeline
