#include "knoweeg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "knoweeg/errors.hpp"
#include "knoweeg/parallel.hpp"
#include "knoweeg/rng.hpp"

namespace knoweeg::forest {

double gini(std::span<const std::uint64_t> counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  if (n == 0.0) return 0.0;
  double s = 0.0;
  for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return 1.0 - s / (n * n);
}

std::size_t subset_size(std::size_t n_columns) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n_columns)));
  while (r * r > n_columns) --r;
  while ((r + 1) * (r + 1) <= n_columns) ++r;
  return std::max<std::size_t>(1, r);
}

std::vector<std::size_t> DecisionTree::feature_pool() const {
  std::vector<std::size_t> pool(subset_a);
  pool.insert(pool.end(), subset_b.begin(), subset_b.end());
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::size_t DecisionTree::leaf_index(std::span<const double> row) const {
  std::size_t k = 0;
  while (!nodes[k].is_leaf())
    k = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left
                                                                                                        : nodes[k].right);
  return k;
}

namespace {

using u128 = unsigned __int128;

// Column-major view of the fused training matrix.
struct Columns {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;  // [col][row]
  const double* col(std::size_t c) const { return data.data() + c * n_rows; }
};

Columns fuse_columns(const FeatureMatrix& a, const FeatureMatrix* b) {
  Columns c;
  c.n_rows = a.n_samples;
  c.n_cols = a.n_features() + (b ? b->n_features() : 0);
  c.data.resize(c.n_rows * c.n_cols);
  for (std::size_t r = 0; r < c.n_rows; ++r) {
    const auto ra = a.row(r);
    for (std::size_t f = 0; f < ra.size(); ++f) c.data[f * c.n_rows + r] = ra[f];
    if (b) {
      const auto rb = b->row(r);
      for (std::size_t f = 0; f < rb.size(); ++f) c.data[(ra.size() + f) * c.n_rows + r] = rb[f];
    }
  }
  for (double v : c.data)
    if (!std::isfinite(v)) throw InputError("forest: feature matrices must be finite");
  return c;
}

class TreeBuilder {
public:
  TreeBuilder(const Columns& cols, std::span<const int> labels, int n_classes, std::vector<std::size_t> pool,
              const TreeParams& params)
      : cols_(cols), labels_(labels), n_classes_(static_cast<std::size_t>(n_classes)), pool_(std::move(pool)),
        params_(params) {}

  std::vector<Node> build(const std::vector<std::uint32_t>& weights) {
    weights_ = &weights;
    idx_.clear();
    total_ = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (weights[i] > 0) {
        idx_.push_back(i);
        total_ += weights[i];
      }
    nodes_.clear();
    grow(0, idx_.size());
    return std::move(nodes_);
  }

private:
  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    u128 num = 0;  // score = num / den = SL/NL + SR/NR, larger is better
    u128 den = 1;
    std::uint64_t sl = 0, sr = 0, nl = 0, nr = 0;
  };

  std::vector<std::uint64_t> counts_of(std::size_t begin, std::size_t end) const {
    std::vector<std::uint64_t> c(n_classes_, 0);
    for (std::size_t k = begin; k < end; ++k) c[static_cast<std::size_t>(labels_[idx_[k]])] += (*weights_)[idx_[k]];
    return c;
  }

  Split best_split(std::size_t begin, std::size_t end, const std::vector<std::uint64_t>& counts) {
    Split best;
    std::uint64_t n = 0, st = 0;
    for (auto c : counts) {
      n += c;
      st += c * c;
    }
    std::vector<std::uint64_t> left(n_classes_), right(n_classes_);
    for (std::size_t f : pool_) {
      const double* x = cols_.col(f);
      buf_.clear();
      for (std::size_t k = begin; k < end; ++k) buf_.push_back({x[idx_[k]], idx_[k]});
      std::sort(buf_.begin(), buf_.end());
      if (buf_.front().first == buf_.back().first) continue;
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      std::uint64_t nl = 0, sl = 0, sr = st;
      for (std::size_t k = 0; k + 1 < buf_.size(); ++k) {
        const auto row = buf_[k].second;
        const auto c = static_cast<std::size_t>(labels_[row]);
        const std::uint64_t w = (*weights_)[row];
        sl += 2 * left[c] * w + w * w;
        sr -= 2 * right[c] * w - w * w;
        left[c] += w;
        right[c] -= w;
        nl += w;
        if (buf_[k].first == buf_[k + 1].first) continue;
        const std::uint64_t nr = n - nl;
        if (nl < params_.min_samples_leaf || nr < params_.min_samples_leaf) continue;
        const u128 num = static_cast<u128>(sl) * nr + static_cast<u128>(sr) * nl;
        const u128 den = static_cast<u128>(nl) * nr;
        if (!best.found || num * best.den > best.num * den) {
          best.found = true;
          best.feature = f;
          const double lo = buf_[k].first, hi = buf_[k + 1].first;
          double t = lo / 2.0 + hi / 2.0;
          if (t == hi || !std::isfinite(t)) t = lo;
          best.threshold = t;
          best.num = num;
          best.den = den;
          best.sl = sl;
          best.sr = sr;
          best.nl = nl;
          best.nr = nr;
        }
      }
    }
    return best;
  }

  std::int32_t grow(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    auto counts = counts_of(begin, end);
    const std::uint64_t n = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    Split split;
    if (!pure && n >= params_.min_samples_split) split = best_split(begin, end, counts);
    if (!split.found) {
      nodes_[static_cast<std::size_t>(id)].counts = std::move(counts);
      return id;
    }
    std::uint64_t st = 0;
    for (auto c : counts) st += c * c;
    const double gain = (static_cast<double>(split.sl) / static_cast<double>(split.nl) +
                         static_cast<double>(split.sr) / static_cast<double>(split.nr) -
                         static_cast<double>(st) / static_cast<double>(n)) /
                        static_cast<double>(total_);
    const double* x = cols_.col(split.feature);
    const auto mid = std::stable_partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           idx_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](std::size_t r) { return x[r] <= split.threshold; });
    const auto m = static_cast<std::size_t>(mid - idx_.begin());
    const auto l = grow(begin, m);
    const auto r = grow(m, end);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(split.feature);
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    node.gain = std::max(0.0, gain);
    return id;
  }

  const Columns& cols_;
  std::span<const int> labels_;
  std::size_t n_classes_;
  std::vector<std::size_t> pool_;
  TreeParams params_;
  const std::vector<std::uint32_t>* weights_ = nullptr;
  std::vector<std::size_t> idx_;
  std::uint64_t total_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::pair<double, std::size_t>> buf_;
};

// k distinct values of [0, n) by a partial Fisher-Yates shuffle, in draw order.
std::vector<std::size_t> draw_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(k);
  return perm;
}

}  // namespace

TreeDraw draw_tree(std::uint64_t seed, std::size_t k, std::size_t n_rows, std::size_t n_a, std::size_t n_b) {
  Rng rng(derive_seed(seed, k));
  TreeDraw d;
  d.subset_a = draw_without_replacement(rng, n_a, subset_size(n_a));
  if (n_b > 0) {
    d.subset_b = draw_without_replacement(rng, n_b, subset_size(n_b));
    for (auto& c : d.subset_b) c += n_a;
  }
  d.weights.assign(n_rows, 0);
  for (std::size_t i = 0; i < n_rows; ++i) ++d.weights[static_cast<std::size_t>(rng.below(n_rows))];
  return d;
}

namespace {

void check_labels(std::span<const int> labels, int n_classes, std::size_t n_rows) {
  if (labels.size() != n_rows) throw InputError("forest: label count differs from row count");
  if (n_classes < 2) throw DegenerateLabelsError("forest: need at least two classes");
  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw InputError("forest: label out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw DegenerateLabelsError("forest: training labels contain a single class");
}

FusionForestModel fit_impl(const FeatureMatrix& a, const FeatureMatrix* b, std::span<const int> labels, int n_classes,
                           std::size_t k_trees, std::uint64_t seed, std::size_t threads, const TreeParams& params) {
  if (k_trees == 0) throw ParamError("forest: k_trees must be positive");
  if (a.n_features() == 0 || (b && b->n_features() == 0)) throw ParamError("forest: every mode needs a column");
  if (b && b->n_samples != a.n_samples) throw AlignmentError("forest: modes differ in row count");
  if (a.n_samples == 0) throw InputError("forest: no training rows");
  check_labels(labels, n_classes, a.n_samples);

  const Columns cols = fuse_columns(a, b);
  FusionForestModel model;
  model.n_classes = n_classes;
  model.seed = seed;
  model.descriptors_a = a.descriptor_strings();
  if (b) model.descriptors_b = b->descriptor_strings();
  model.trees.resize(k_trees);

  const std::size_t n_a = a.n_features(), n_b = b ? b->n_features() : 0;
  const std::size_t n = a.n_samples;
  parallel_for(
      k_trees,
      [&](std::size_t k) {
        DecisionTree& tree = model.trees[k];
        auto draw = draw_tree(seed, k, n, n_a, n_b);
        tree.subset_a = std::move(draw.subset_a);
        tree.subset_b = std::move(draw.subset_b);
        const auto& weights = draw.weights;
        TreeBuilder builder(cols, labels, n_classes, tree.feature_pool(), params);
        tree.nodes = builder.build(weights);
      },
      threads);
  model.importances = gini_importances(model);
  return model;
}

std::vector<double> aligned_row_major(const FusionForestModel& model, const FeatureMatrix& a, const FeatureMatrix* b) {
  if (a.descriptor_strings() != model.descriptors_a) throw AlignmentError("mode-A descriptors differ from training");
  if (b) {
    if (b->descriptor_strings() != model.descriptors_b) throw AlignmentError("mode-B descriptors differ from training");
    if (b->n_samples != a.n_samples) throw AlignmentError("modes differ in row count");
  } else if (!model.is_standard()) {
    throw AlignmentError("model expects two feature modes");
  }
  const std::size_t width = model.n_columns();
  std::vector<double> x(a.n_samples * width);
  for (std::size_t r = 0; r < a.n_samples; ++r) {
    const auto ra = a.row(r);
    std::copy(ra.begin(), ra.end(), x.begin() + static_cast<std::ptrdiff_t>(r * width));
    if (b) {
      const auto rb = b->row(r);
      std::copy(rb.begin(), rb.end(), x.begin() + static_cast<std::ptrdiff_t>(r * width + ra.size()));
    }
  }
  return x;
}

std::vector<std::vector<std::vector<double>>> prefixes_impl(const FusionForestModel& model, const FeatureMatrix& a,
                                                            const FeatureMatrix* b,
                                                            std::span<const std::size_t> prefix_sizes) {
  for (auto k : prefix_sizes)
    if (k == 0 || k > model.trees.size()) throw ParamError("prefix size outside [1, n_trees]");
  const auto x = aligned_row_major(model, a, b);
  const std::size_t width = model.n_columns();
  const std::size_t n_rows = a.n_samples;
  const auto n_cls = static_cast<std::size_t>(model.n_classes);
  const std::size_t max_k = prefix_sizes.empty() ? 0 : *std::max_element(prefix_sizes.begin(), prefix_sizes.end());

  std::vector<std::vector<std::vector<double>>> out(prefix_sizes.size(),
                                                    std::vector<std::vector<double>>(n_rows, std::vector<double>(n_cls)));
  std::vector<double> acc(n_cls);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const std::span<const double> row(x.data() + r * width, width);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < max_k; ++t) {
      const auto& tree = model.trees[t];
      const auto& leaf = tree.nodes[tree.leaf_index(row)];
      const double total = static_cast<double>(std::accumulate(leaf.counts.begin(), leaf.counts.end(), std::uint64_t{0}));
      for (std::size_t c = 0; c < n_cls; ++c) acc[c] += static_cast<double>(leaf.counts[c]) / total;
      for (std::size_t q = 0; q < prefix_sizes.size(); ++q)
        if (prefix_sizes[q] == t + 1)
          for (std::size_t c = 0; c < n_cls; ++c) out[q][r][c] = acc[c] / static_cast<double>(t + 1);
    }
  }
  return out;
}

}  // namespace

FusionForestModel fit(const FeatureMatrix& features_a, const FeatureMatrix& features_b, std::span<const int> labels,
                      int n_classes, std::size_t k_trees, std::uint64_t seed, std::size_t threads,
                      const TreeParams& params) {
  return fit_impl(features_a, &features_b, labels, n_classes, k_trees, seed, threads, params);
}

FusionForestModel fit_standard_rf(const FeatureMatrix& features, std::span<const int> labels, int n_classes,
                                  std::size_t k_trees, std::uint64_t seed, std::size_t threads,
                                  const TreeParams& params) {
  return fit_impl(features, nullptr, labels, n_classes, k_trees, seed, threads, params);
}

std::vector<std::vector<double>> predict_proba(const FusionForestModel& model, const FeatureMatrix& features_a,
                                               const FeatureMatrix& features_b, std::size_t n_trees) {
  const std::size_t k[] = {n_trees == 0 ? model.trees.size() : n_trees};
  return std::move(prefixes_impl(model, features_a, &features_b, k).front());
}

std::vector<std::vector<double>> predict_proba(const FusionForestModel& model, const FeatureMatrix& features,
                                               std::size_t n_trees) {
  const std::size_t k[] = {n_trees == 0 ? model.trees.size() : n_trees};
  return std::move(prefixes_impl(model, features, nullptr, k).front());
}

std::vector<std::vector<std::vector<double>>> predict_proba_prefixes(const FusionForestModel& model,
                                                                     const FeatureMatrix& features_a,
                                                                     const FeatureMatrix& features_b,
                                                                     std::span<const std::size_t> prefix_sizes) {
  return prefixes_impl(model, features_a, model.is_standard() ? nullptr : &features_b, prefix_sizes);
}

std::vector<int> argmax_rows(const std::vector<std::vector<double>>& proba) {
  std::vector<int> out;
  out.reserve(proba.size());
  for (const auto& row : proba)
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  return out;
}

std::vector<double> gini_importances(const FusionForestModel& model) {
  std::vector<double> imp(model.n_columns(), 0.0);
  for (const auto& tree : model.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) imp[static_cast<std::size_t>(node.feature)] += node.gain;
  double total = 0.0;
  for (auto& v : imp) {
    v /= static_cast<double>(std::max<std::size_t>(1, model.trees.size()));
    total += v;
  }
  if (total > 0.0)
    for (auto& v : imp) v /= total;
  return imp;
}

FusionForestModel truncated(const FusionForestModel& model, std::size_t k) {
  if (k == 0 || k > model.trees.size()) throw ParamError("truncated: k outside [1, n_trees]");
  FusionForestModel out = model;
  out.trees.resize(k);
  out.importances = gini_importances(out);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

nlohmann::json to_json(const FusionForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
      if (n.is_leaf())
        nodes.push_back({{"counts", n.counts}});
      else
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"gain", n.gain}});
    }
    trees.push_back({{"subset_a", tree.subset_a}, {"subset_b", tree.subset_b}, {"nodes", std::move(nodes)}});
  }
  return {{"schema", "knoweeg.fusion_forest"},
          {"version", 1},
          {"n_classes", model.n_classes},
          {"seed", model.seed},
          {"descriptors_a", model.descriptors_a},
          {"descriptors_b", model.descriptors_b},
          {"importances", model.importances},
          {"trees", std::move(trees)}};
}

FusionForestModel from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != "knoweeg.fusion_forest") throw FormatError("not a fusion forest model");
    if (j.at("version") != 1) throw FormatError("unsupported model version " + j.at("version").dump());
    FusionForestModel m;
    m.n_classes = j.at("n_classes").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.descriptors_a = j.at("descriptors_a").get<std::vector<std::string>>();
    m.descriptors_b = j.at("descriptors_b").get<std::vector<std::string>>();
    m.importances = j.at("importances").get<std::vector<double>>();
    const auto n_cols = static_cast<std::int64_t>(m.n_columns());
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      t.subset_a = jt.at("subset_a").get<std::vector<std::size_t>>();
      t.subset_b = jt.at("subset_b").get<std::vector<std::size_t>>();
      const auto& jn = jt.at("nodes");
      const auto n_nodes = static_cast<std::int64_t>(jn.size());
      for (const auto& x : jn) {
        Node n;
        if (x.contains("counts")) {
          n.counts = x.at("counts").get<std::vector<std::uint64_t>>();
          if (n.counts.size() != static_cast<std::size_t>(m.n_classes)) throw FormatError("leaf count width");
        } else {
          n.feature = x.at("feature").get<std::int32_t>();
          n.threshold = x.at("threshold").get<double>();
          n.left = x.at("left").get<std::int32_t>();
          n.right = x.at("right").get<std::int32_t>();
          n.gain = x.at("gain").get<double>();
          if (n.feature < 0 || n.feature >= n_cols || n.left <= 0 || n.right <= 0 || n.left >= n_nodes ||
              n.right >= n_nodes)
            throw FormatError("node index out of range");
        }
        t.nodes.push_back(std::move(n));
      }
      if (t.nodes.empty()) throw FormatError("tree without nodes");
      m.trees.push_back(std::move(t));
    }
    if (m.importances.size() != m.n_columns()) throw FormatError("importance vector width");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model json: ") + e.what());
  }
}

void save_model(const FusionForestModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(model).dump() << '\n';
}

FusionForestModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string model_hash(const FusionForestModel& model) {
  const auto text = to_json(model).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace knoweeg::forest
