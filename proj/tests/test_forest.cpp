#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "knoweeg/errors.hpp"
#include "knoweeg/forest.hpp"
#include "oracles.hpp"

using namespace knoweeg;
using namespace knoweeg::forest;

namespace {

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, const std::string& prefix,
                            ModeTag tag = ModeTag::per_electrode, int levels = 0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  FeatureMatrix m;
  m.mode_tag = tag;
  m.n_samples = rows;
  for (std::size_t c = 0; c < cols; ++c)
    m.descriptors.push_back(FeatureDescriptor::electrode(prefix, "f" + std::to_string(c)));
  m.values.resize(rows * cols);
  for (auto& v : m.values) v = levels > 0 ? static_cast<double>(gen() % static_cast<unsigned>(levels)) : nd(gen);
  return m;
}

std::vector<int> labels_from(const FeatureMatrix& m, std::size_t col, std::uint64_t seed, double flip = 0.1) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u;
  std::vector<int> y(m.n_samples);
  for (std::size_t r = 0; r < m.n_samples; ++r) {
    y[r] = m.at(r, col) > 0.0 ? 1 : 0;
    if (u(gen) < flip) y[r] = 1 - y[r];
  }
  y[0] = 0;
  y[1] = 1;
  return y;
}

}  // namespace

TEST_CASE("gini impurity") {
  CHECK(gini(std::vector<std::uint64_t>{5, 5}) == doctest::Approx(0.5));
  CHECK(gini(std::vector<std::uint64_t>{10, 0}) == 0.0);
  CHECK(gini(std::vector<std::uint64_t>{0, 0}) == 0.0);
  CHECK(gini(std::vector<std::uint64_t>{1, 1, 1}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("per-tree subset sizes are floor(sqrt) of each mode") {
  CHECK(subset_size(100) == 10);
  CHECK(subset_size(9) == 3);
  CHECK(subset_size(10000) == 100);
  CHECK(subset_size(2) == 1);
  CHECK(subset_size(1) == 1);
  struct Case {
    std::size_t a, b, want_a, want_b;
  };
  for (const auto& c : {Case{100, 9, 10, 3}, Case{10000, 100, 100, 10}, Case{2, 2, 1, 1}}) {
    const auto fa = random_matrix(16, c.a, 1, "A");
    const auto fb = random_matrix(16, c.b, 2, "B", ModeTag::connectivity);
    const auto y = labels_from(fa, 0, 3);
    const auto model = fit(fa, fb, y, 2, 6, 11);
    for (const auto& tree : model.trees) {
      CHECK(tree.subset_a.size() == c.want_a);
      CHECK(tree.subset_b.size() == c.want_b);
      CHECK(std::set<std::size_t>(tree.subset_a.begin(), tree.subset_a.end()).size() == c.want_a);
      for (auto col : tree.subset_a) CHECK(col < c.a);
      for (auto col : tree.subset_b) {
        CHECK(col >= c.a);
        CHECK(col < c.a + c.b);
      }
    }
  }
}

TEST_CASE("root split matches a brute-force Gini scan") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t rows = 12 + seed % 20;
    const int levels = seed % 3 == 0 ? 4 : 0;  // some datasets with heavy ties
    const auto fa = random_matrix(rows, 7, seed * 2 + 1, "A", ModeTag::per_electrode, levels);
    const auto fb = random_matrix(rows, 5, seed * 2 + 2, "B", ModeTag::connectivity, levels);
    std::mt19937_64 gen(seed);
    std::vector<int> y(rows);
    for (auto& v : y) v = static_cast<int>(gen() % 3);
    y[0] = 0;
    y[1] = 1;
    const auto model = fit(fa, fb, y, 3, 3, seed);
    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < 7; ++c) cols.push_back(fa.column(c));
    for (std::size_t c = 0; c < 5; ++c) cols.push_back(fb.column(c));
    for (std::size_t k = 0; k < model.trees.size(); ++k) {
      const auto draw = draw_tree(seed, k, rows, 7, 5);
      const auto& tree = model.trees[k];
      CHECK(draw.subset_a == tree.subset_a);
      CHECK(draw.subset_b == tree.subset_b);
      const auto want = oracle::best_root_split(cols, y, draw.weights, tree.feature_pool(), 3);
      const auto& root = tree.nodes[0];
      if (want.optima.empty() || want.decrease <= 0.0) {
        if (!root.is_leaf()) CHECK(root.gain == doctest::Approx(0.0));
        continue;
      }
      REQUIRE_FALSE(root.is_leaf());
      CHECK(root.gain == doctest::Approx(want.decrease).epsilon(1e-12));
      bool found = false;
      for (const auto& [col, thr] : want.optima)
        found = found || (static_cast<std::size_t>(root.feature) == col && std::abs(root.threshold - thr) < 1e-12);
      CHECK(found);
    }
  }
}

TEST_CASE("importances are nonnegative and sum to one") {
  const auto fa = random_matrix(80, 30, 5, "A");
  const auto fb = random_matrix(80, 20, 6, "B", ModeTag::connectivity);
  const auto y = labels_from(fa, 4, 7);
  const auto model = fit(fa, fb, y, 2, 40, 9);
  double s = 0.0;
  for (double v : model.importances) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model.importances.size() == 50);
  // The label-driving column ranks first.
  CHECK(std::max_element(model.importances.begin(), model.importances.end()) - model.importances.begin() == 4);
}

TEST_CASE("bootstrap keeps about 1 - 1/e distinct rows") {
  double sum = 0.0;
  const std::size_t rows = 500, trees = 300;
  for (std::size_t k = 0; k < trees; ++k) {
    const auto d = draw_tree(42, k, rows, 3, 0);
    std::size_t distinct = 0, total = 0;
    for (auto w : d.weights) {
      distinct += w > 0;
      total += w;
    }
    CHECK(total == rows);
    sum += static_cast<double>(distinct) / static_cast<double>(rows);
  }
  CHECK(std::abs(sum / trees - (1.0 - std::exp(-1.0))) < 0.02);
}

TEST_CASE("models are identical for any worker count and prefixes of larger forests") {
  const auto fa = random_matrix(60, 16, 1, "A");
  const auto fb = random_matrix(60, 25, 2, "B", ModeTag::connectivity);
  const auto y = labels_from(fa, 2, 3);
  const auto m1 = fit(fa, fb, y, 2, 20, 77, 1);
  const auto m2 = fit(fa, fb, y, 2, 20, 77, 2);
  const auto m8 = fit(fa, fb, y, 2, 20, 77, 8);
  CHECK(model_hash(m1) == model_hash(m2));
  CHECK(model_hash(m1) == model_hash(m8));
  CHECK(model_hash(m1).size() == 16);

  const auto small = fit(fa, fb, y, 2, 7, 77);
  CHECK(model_hash(small) == model_hash(truncated(m1, 7)));
  CHECK(predict_proba(small, fa, fb) == predict_proba(m1, fa, fb, 7));
  const std::vector<std::size_t> sizes{7, 20};
  const auto pre = predict_proba_prefixes(m1, fa, fb, sizes);
  CHECK(pre[0] == predict_proba(small, fa, fb));
  CHECK(pre[1] == predict_proba(m1, fa, fb));

  CHECK(model_hash(fit(fa, fb, y, 2, 20, 78)) != model_hash(m1));
}

TEST_CASE("JSON persistence is lossless") {
  const auto fa = random_matrix(40, 9, 4, "A");
  const auto fb = random_matrix(40, 4, 5, "B", ModeTag::connectivity);
  const auto y = labels_from(fa, 1, 6);
  const auto m = fit(fa, fb, y, 2, 10, 3);
  const auto back = from_json(to_json(m));
  CHECK(model_hash(back) == model_hash(m));
  CHECK(predict_proba(back, fa, fb) == predict_proba(m, fa, fb));
  CHECK(back.importances == m.importances);

  auto bad = to_json(m);
  bad["version"] = 99;
  CHECK_THROWS(from_json(bad));
}

TEST_CASE("probabilities lie on the simplex") {
  const auto fa = random_matrix(50, 6, 8, "A");
  std::vector<int> y(50);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  const auto m = fit_standard_rf(fa, y, 3, 15, 2);
  CHECK(m.is_standard());
  for (const auto& row : predict_proba(m, fa)) {
    CHECK(row.size() == 3);
    double s = 0;
    for (double p : row) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK(argmax_rows({{0.2, 0.4, 0.4}, {0.5, 0.5, 0.0}}) == std::vector<int>{1, 0});
}

TEST_CASE("separable data: fusion and standard forests both generalize") {
  const auto fa = random_matrix(400, 20, 10, "A");
  auto fb = random_matrix(400, 30, 11, "B", ModeTag::connectivity);
  std::vector<int> y(400);
  for (std::size_t r = 0; r < 400; ++r) {
    y[r] = fa.at(r, 3) > 0.0 ? 1 : 0;
    fb.values[r * 30 + 7] = fa.at(r, 3) + 0.3 * fb.at(r, 7);  // noisy copy in the other mode
  }
  std::vector<std::size_t> train(300), test(100);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 300);
  const std::vector<int> ytr(y.begin(), y.begin() + 300), yte(y.begin() + 300, y.end());
  const auto fusion = fit(fa.select_rows(train), fb.select_rows(train), ytr, 2, 200, 1);
  const auto both = FeatureMatrix::hstack(fa, fb);
  const auto standard = fit_standard_rf(both.select_rows(train), ytr, 2, 200, 1);
  auto acc = [&](const std::vector<int>& pred) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == yte[i];
    return static_cast<double>(ok) / static_cast<double>(pred.size());
  };
  CHECK(acc(argmax_rows(predict_proba(fusion, fa.select_rows(test), fb.select_rows(test)))) >= 0.8);
  CHECK(acc(argmax_rows(predict_proba(standard, both.select_rows(test)))) >= 0.8);
}

TEST_CASE("forest input errors") {
  const auto fa = random_matrix(20, 4, 1, "A");
  const auto fb = random_matrix(20, 4, 2, "B", ModeTag::connectivity);
  std::vector<int> one(20, 0);
  CHECK_THROWS_AS(fit(fa, fb, one, 2, 5, 1), DegenerateLabelsError);
  auto y = labels_from(fa, 0, 1);
  CHECK_THROWS_AS(fit(fa, fb, y, 2, 0, 1), ParamError);
  auto nan = fa;
  nan.values[5] = std::nan("");
  CHECK_THROWS_AS(fit(nan, fb, y, 2, 5, 1), InputError);
  const auto m = fit(fa, fb, y, 2, 5, 1);
  CHECK_THROWS_AS(predict_proba(m, fb, fa), AlignmentError);
  const auto short_b = random_matrix(10, 4, 3, "B", ModeTag::connectivity);
  CHECK_THROWS_AS(fit(fa, short_b, y, 2, 5, 1), AlignmentError);
}
