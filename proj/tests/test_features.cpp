#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "knoweeg/errors.hpp"
#include "knoweeg/features.hpp"
#include "oracles.hpp"

using namespace knoweeg;
using namespace knoweeg::features;

namespace {

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (auto& v : x) v = nd(gen);
  return x;
}

// Yule-Walker by Gaussian elimination; last coefficient is the PACF.
double pacf_yule_walker(std::span<const double> x, std::size_t lag) {
  const std::size_t n = x.size();
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> r(lag + 1);
  for (std::size_t k = 0; k <= lag; ++k)
    for (std::size_t t = 0; t + k < n; ++t) r[k] += (x[t] - mu) * (x[t + k] - mu);
  for (std::size_t k = lag + 1; k-- > 0;) r[k] /= r[0];
  std::vector<std::vector<double>> a(lag, std::vector<double>(lag + 1));
  for (std::size_t i = 0; i < lag; ++i) {
    for (std::size_t j = 0; j < lag; ++j) a[i][j] = r[i > j ? i - j : j - i];
    a[i][lag] = r[i + 1];
  }
  for (std::size_t c = 0; c < lag; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < lag; ++i)
      if (std::abs(a[i][c]) > std::abs(a[piv][c])) piv = i;
    std::swap(a[c], a[piv]);
    for (std::size_t i = 0; i < lag; ++i) {
      if (i == c) continue;
      const double f = a[i][c] / a[c][c];
      for (std::size_t j = c; j <= lag; ++j) a[i][j] -= f * a[c][j];
    }
  }
  return a[lag - 1][lag] / a[lag - 1][lag - 1];
}

EegDataset dataset_from(const std::vector<std::vector<std::vector<double>>>& samples, const Montage& m,
                        double fs = 128.0) {
  std::vector<float> v;
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& ch : samples[i])
      for (double x : ch) v.push_back(static_cast<float>(x));
    labels.push_back(static_cast<int>(i % 2));
  }
  return EegDataset(v, samples.size(), samples[0][0].size(), labels, 2, fs, m);
}

bool same_values(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.values.size() != b.values.size()) return false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (std::isnan(a.values[i]) && std::isnan(b.values[i])) continue;
    if (a.values[i] != b.values[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("distributional features against scipy and numpy references") {
  // tests/oracles/moments_reference.py
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 10.0, -2.5, 0.25, 7.0};
  CHECK(skewness(x) == doctest::Approx(0.5638186322902992).epsilon(1e-12));
  CHECK(kurtosis(x) == doctest::Approx(0.17707502638052475).epsilon(1e-12));
  std::vector<double> sorted(x);
  std::sort(sorted.begin(), sorted.end());
  CHECK(quantile(sorted, 0.1) == doctest::Approx(-0.5749999999999998).epsilon(1e-12));
  CHECK(quantile(sorted, 0.25) == doctest::Approx(0.8125).epsilon(1e-12));
  CHECK(quantile(sorted, 0.5) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(quantile(sorted, 0.9) == doctest::Approx(7.9).epsilon(1e-12));

  const std::vector<double> flat(10, 4.0);
  CHECK(skewness(flat) == 0.0);
  CHECK(kurtosis(flat) == 0.0);
  CHECK(variance(flat) == 0.0);
  CHECK(root_mean_square(flat) == doctest::Approx(4.0));
  CHECK(abs_energy(flat) == doctest::Approx(160.0));
}

TEST_CASE("change features") {
  const std::vector<double> x{1, 3, 2};
  CHECK(mean_abs_change(x) == 1.5);
  CHECK(mean_change(x) == 0.5);
  CHECK(absolute_sum_of_changes(x) == 3.0);
  const std::vector<double> y{1, 2, 4, 7};
  CHECK(mean_second_derivative_central(y) == doctest::Approx(0.5));  // (1 + 1) / (2 * 2)
}

TEST_CASE("change_quantiles averages differences inside the corridor") {
  const std::vector<double> x{0, 1, 2, 10, 3, 4};
  // Q(0)=0, Q(0.8)=4: pairs (0,1),(1,2),(3,4) qualify.
  CHECK(change_quantiles(x, 0.0, 0.8, true) == doctest::Approx(1.0));
  const std::vector<double> flat(6, 2.0);
  CHECK(change_quantiles(flat, 0.2, 0.8, true) == 0.0);
  CHECK(change_quantiles(x, 0.9, 1.0, true) == 0.0);  // no qualifying pair
}

TEST_CASE("number_peaks") {
  CHECK(number_peaks(std::vector<double>{1, 3, 1}, 1) == 1);
  CHECK(number_peaks(std::vector<double>{1, 2, 3, 4, 5}, 1) == 0);
  // The outer peaks lack two neighbors on one side, so only the middle counts.
  CHECK(number_peaks(std::vector<double>{0, 5, 0, 0, 5, 0, 0, 5, 0}, 2) == 1);
  CHECK(number_peaks(std::vector<double>{0, 0, 5, 0, 0, 5, 0, 0, 5, 0, 0}, 2) == 3);
  CHECK(number_peaks(std::vector<double>{1, 2}, 3) == 0);
}

TEST_CASE("mean-crossing counts and strikes") {
  const std::vector<double> x{1, 5, 5, 0, 0, 0, 6};
  CHECK(count_above_mean(x) == 3);
  CHECK(count_below_mean(x) == 4);
  CHECK(longest_strike_above_mean(x) == 2);
  CHECK(longest_strike_below_mean(x) == 3);
}

TEST_CASE("autocorrelation and partial autocorrelation") {
  const auto w = white(4000, 1);
  CHECK(partial_autocorrelation(w, 0) == 1.0);
  for (std::size_t lag = 1; lag <= 5; ++lag)
    CHECK(partial_autocorrelation(w, lag) == doctest::Approx(pacf_yule_walker(w, lag)).epsilon(1e-9));
  CHECK(std::abs(autocorrelation(w, 1)) < 0.05);
  CHECK(std::isnan(partial_autocorrelation(std::vector<double>{1, 2, 3}, 3)));
  CHECK(std::isnan(autocorrelation(std::vector<double>(5, 1.0), 1)));
}

TEST_CASE("AR(1) lag-1 PACF recovers the generating coefficient") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd;
  std::vector<double> x(100000);
  for (std::size_t t = 1; t < x.size(); ++t) x[t] = 0.8 * x[t - 1] + nd(gen);
  CHECK(std::abs(partial_autocorrelation(x, 1) - 0.8) < 0.02);
  CHECK(std::abs(partial_autocorrelation(x, 2)) < 0.02);
}

TEST_CASE("permutation entropy matches brute-force pattern counting") {
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 3 + static_cast<std::size_t>(trial % 5);
    const std::size_t tau = 1 + static_cast<std::size_t>(trial % 3);
    std::vector<double> x(20 + static_cast<std::size_t>(trial % 37));
    for (auto& v : x) v = small(gen);  // heavy ties exercise the tie rule
    if ((m - 1) * tau + 1 > x.size()) continue;
    CHECK(permutation_entropy(x, m, tau) == oracle::permutation_entropy(x, m, tau));
  }
}

TEST_CASE("permutation entropy special cases") {
  std::vector<double> inc(50);
  std::iota(inc.begin(), inc.end(), 0.0);
  for (std::size_t m = 3; m <= 7; ++m) CHECK(permutation_entropy(inc, m, 1) == 0.0);
  CHECK(permutation_entropy(std::vector<double>(30, 3.0), 4, 1) == 0.0);
  CHECK_THROWS_AS(permutation_entropy(std::vector<double>{1, 2}, 3, 1), LengthError);
  CHECK_THROWS_AS(permutation_entropy(inc, 8, 1), InputError);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u;
  std::vector<double> r(100000);
  for (auto& v : r) v = u(gen);
  const double h = permutation_entropy(r, 3, 1);
  CHECK(std::abs(h - std::log(6.0)) < 0.05);
  CHECK(h <= std::log(6.0));
}

TEST_CASE("complexity features on simple inputs") {
  const std::vector<double> flat(16, 1.0);
  CHECK(binned_entropy(flat, 10) == 0.0);
  const std::vector<double> two{0, 1, 0, 1};
  CHECK(binned_entropy(two, 2) == doctest::Approx(std::log(2.0)));
  CHECK(cid_ce(std::vector<double>{0, 3, 7}, false) == doctest::Approx(5.0));
  CHECK(cid_ce(flat, true) == 0.0);
  // Phrases 0, 1, 01, 010; the trailing 1 is already known.
  const std::vector<double> alt{0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(lempel_ziv_complexity(alt, 2) == doctest::Approx(4.0 / 8.0));
}

TEST_CASE("FFT aggregates of a pure tone") {
  std::vector<double> x(64);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::cos(2 * 3.14159265358979323846 * 8.0 * static_cast<double>(t) / 64.0);
  CHECK(fft_aggregated(x, FftAggregate::centroid) == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(fft_aggregated(x, FftAggregate::variance) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::isnan(fft_aggregated(x, FftAggregate::skew)));
}

TEST_CASE("default registry covers every feature class") {
  const auto reg = FeatureRegistry::default_registry();
  CHECK(reg.size() >= 64);
  std::set<std::string> ids;
  for (const auto& s : reg.specs()) ids.insert(s.feature_id);
  for (const char* id : {"mean", "variance", "standard_deviation", "skewness", "kurtosis", "quantile",
                         "autocorrelation", "partial_autocorrelation", "mean_abs_change", "change_quantiles",
                         "number_peaks", "count_above_mean", "count_below_mean", "longest_strike_above_mean",
                         "longest_strike_below_mean", "permutation_entropy", "binned_entropy",
                         "lempel_ziv_complexity", "cid_ce", "relative_band_power", "spectral_centroid",
                         "median_frequency", "fft_aggregated"})
    CHECK_MESSAGE(ids.count(id) == 1, id);

  const std::vector<std::string> pick{"mean"};
  CHECK(reg.select(pick).size() == 1);
  const std::vector<std::string> bad{"nope"};
  CHECK_THROWS_AS(reg.select(bad), InputError);
}

TEST_CASE("descriptor strings round-trip for every registry entry") {
  const auto reg = FeatureRegistry::default_registry();
  const auto m = Montage::emotiv14();
  std::set<std::string> seen;
  for (const auto& s : reg.specs()) {
    const auto d = FeatureDescriptor::electrode("O1", s.feature_id, s.params);
    const auto text = d.to_string();
    CHECK(FeatureDescriptor::parse(text, &m) == d);
    CHECK(seen.insert(text).second);
  }
  const auto pair = FeatureDescriptor::pair("fpc", "alpha", "O1", "O2");
  CHECK(pair.to_string() == "con__fpc__alpha__O1-O2");
  CHECK(FeatureDescriptor::parse(pair.to_string()) == pair);
  const auto pow = FeatureDescriptor::band_power("gamma", "AF3");
  CHECK(FeatureDescriptor::parse(pow.to_string()) == pow);
  const auto tuh = Montage::tuh16();
  const auto bipolar = FeatureDescriptor::pair("coh", "delta", tuh.channel_names[0], tuh.channel_names[1]);
  CHECK(FeatureDescriptor::parse(bipolar.to_string(), &tuh) == bipolar);
}

TEST_CASE("registry of one feature on a constant sample") {
  std::vector<std::string> ids{"mean"};
  const auto reg = FeatureRegistry::default_registry().select(ids);
  const auto d = dataset_from({{std::vector<double>(32, 3.0), std::vector<double>(32, 3.0)},
                               {std::vector<double>(32, 3.0), std::vector<double>(32, 3.0)}},
                              Montage::generic(2));
  const auto fm = extract_features(d, reg);
  CHECK(fm.n_features() == 2);
  CHECK(fm.at(0, 0) == 3.0);
  CHECK(fm.at(0, 1) == 3.0);
  CHECK(fm.mode_tag == ModeTag::per_electrode);
}

TEST_CASE("extraction is worker-count invariant and channel-separable") {
  const auto m = Montage::generic(3);
  std::vector<std::vector<std::vector<double>>> samples;
  for (std::uint64_t s = 0; s < 4; ++s)
    samples.push_back({white(256, s * 3), white(256, s * 3 + 1), white(256, s * 3 + 2)});
  const auto d = dataset_from(samples, m);
  const auto reg = FeatureRegistry::default_registry();
  const auto one = extract_features(d, reg, 1);
  const auto many = extract_features(d, reg, 4);
  CHECK(one.n_features() == 3 * reg.size());
  CHECK(one.descriptors == many.descriptors);
  CHECK(same_values(one, many));
  CHECK(one.descriptors[reg.size()].channel == m.channel_names[1]);

  // Channel 1 on its own equals its slice of the whole extraction.
  Montage single{"single", {m.channel_names[1]}, {m.positions[1]}, {m.regions[1]}};
  std::vector<std::vector<std::vector<double>>> only;
  for (const auto& s : samples) only.push_back({s[1]});
  const auto part = extract_features(dataset_from(only, single), reg, 2);
  std::vector<std::size_t> cols(reg.size());
  std::iota(cols.begin(), cols.end(), reg.size());
  CHECK(same_values(part, one.select_columns(cols)));
}

TEST_CASE("full registry on 14 channels") {
  SyntheticSpec spec = SyntheticSpec::eyes_task(2);
  const auto d = generate_synthetic(spec, 1);
  const auto fm = extract_features(d, FeatureRegistry::default_registry());
  CHECK(fm.n_features() == 14 * FeatureRegistry::default_registry().size());
  CHECK_NOTHROW(fm.validate());
}
