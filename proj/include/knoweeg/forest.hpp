#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "knoweeg/feature_matrix.hpp"

namespace knoweeg::forest {

// Gini impurity 1 - sum p_c^2 of a class-count vector (0 for an empty node).
double gini(std::span<const std::uint64_t> counts);

struct Node {
  std::int32_t feature = -1;  // global column; -1 marks a leaf
  double threshold = 0.0;     // x <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double gain = 0.0;                  // (N_t / N) * impurity decrease, internal nodes
  std::vector<std::uint64_t> counts;  // bootstrap-weighted class counts, leaves

  bool is_leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
  std::vector<std::size_t> subset_a;  // global columns drawn from mode A, draw order
  std::vector<std::size_t> subset_b;  // global columns drawn from mode B (offset by A)
  std::vector<Node> nodes;            // nodes[0] is the root

  // Sorted union of both subsets: the columns this tree may split on.
  std::vector<std::size_t> feature_pool() const;
  std::size_t leaf_index(std::span<const double> row) const;
};

struct FusionForestModel {
  int n_classes = 2;
  std::uint64_t seed = 0;
  std::vector<std::string> descriptors_a;  // global columns [0, A)
  std::vector<std::string> descriptors_b;  // global columns [A, A + B); empty for a standard forest
  std::vector<DecisionTree> trees;
  std::vector<double> importances;         // per global column

  std::size_t n_columns_a() const noexcept { return descriptors_a.size(); }
  std::size_t n_columns_b() const noexcept { return descriptors_b.size(); }
  std::size_t n_columns() const noexcept { return descriptors_a.size() + descriptors_b.size(); }
  bool is_standard() const noexcept { return descriptors_b.empty(); }
};

struct TreeParams {
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
};

// Per-tree subset sizes: floor(sqrt(n)), at least 1.
std::size_t subset_size(std::size_t n_columns);

// Random draws of tree k: mode-A columns, mode-B columns (offset by n_a,
// empty when n_b == 0), then bootstrap multiplicities of the n_rows rows.
struct TreeDraw {
  std::vector<std::size_t> subset_a;
  std::vector<std::size_t> subset_b;
  std::vector<std::uint32_t> weights;
};
TreeDraw draw_tree(std::uint64_t seed, std::size_t k, std::size_t n_rows, std::size_t n_a, std::size_t n_b);

// Fusion Forest. For tree k, with an Rng seeded by derive_seed(seed, k):
// draw floor(sqrt(A)) mode-A columns and floor(sqrt(B)) mode-B columns
// without replacement, then a bootstrap of N rows, then grow an unpruned
// Gini tree that considers every pooled column at every node. A forest of K
// trees is therefore a prefix of any larger forest with the same seed, and
// the result does not depend on `threads`.
// Throws DegenerateLabelsError for single-class labels, ParamError for
// k_trees == 0 or an empty mode, InputError for non-finite values.
FusionForestModel fit(const FeatureMatrix& features_a, const FeatureMatrix& features_b, std::span<const int> labels,
                      int n_classes, std::size_t k_trees, std::uint64_t seed, std::size_t threads = 0,
                      const TreeParams& params = {});

// Classical random forest: the fusion machinery with an empty mode B, so
// every tree draws floor(sqrt(total)) columns.
FusionForestModel fit_standard_rf(const FeatureMatrix& features, std::span<const int> labels, int n_classes,
                                  std::size_t k_trees, std::uint64_t seed, std::size_t threads = 0,
                                  const TreeParams& params = {});

// Mean of leaf class frequencies over the first n_trees trees (0: all).
// Descriptors must equal the training descriptors (AlignmentError).
// Returns rows of n_classes probabilities.
std::vector<std::vector<double>> predict_proba(const FusionForestModel& model, const FeatureMatrix& features_a,
                                               const FeatureMatrix& features_b, std::size_t n_trees = 0);
std::vector<std::vector<double>> predict_proba(const FusionForestModel& model, const FeatureMatrix& features,
                                               std::size_t n_trees = 0);

// Probabilities for several forest prefixes in one pass; result[q] uses the
// first prefix_sizes[q] trees.
std::vector<std::vector<std::vector<double>>> predict_proba_prefixes(const FusionForestModel& model,
                                                                     const FeatureMatrix& features_a,
                                                                     const FeatureMatrix& features_b,
                                                                     std::span<const std::size_t> prefix_sizes);

// Argmax per row, lowest class on ties.
std::vector<int> argmax_rows(const std::vector<std::vector<double>>& proba);

// Sum of gains per tree, averaged over trees, normalized to sum 1; all zero
// when no tree split.
std::vector<double> gini_importances(const FusionForestModel& model);

// The first k trees, importances recomputed.
FusionForestModel truncated(const FusionForestModel& model, std::size_t k);

// Versioned JSON ("knoweeg.fusion_forest", version 1); lossless round trip.
nlohmann::json to_json(const FusionForestModel& model);
FusionForestModel from_json(const nlohmann::json& j);
void save_model(const FusionForestModel& model, const std::filesystem::path& path);
FusionForestModel load_model(const std::filesystem::path& path);

// FNV-1a 64 of the serialized model, as 16 hex digits.
std::string model_hash(const FusionForestModel& model);

}  // namespace knoweeg::forest
