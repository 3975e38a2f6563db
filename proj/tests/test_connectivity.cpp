#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "checks.hpp"
#include "knoweeg/connectivity.hpp"
#include "knoweeg/errors.hpp"

using namespace knoweeg;
using namespace knoweeg::connectivity;

namespace {

double band_value(const EegDataset& d, Metric m, Band band) {
  const auto plan = spectral::default_plan(d.n_timesteps(), d.sample_rate());
  const auto set = spectral_metric(d, m, plan);
  return set.matrix.at(0, static_cast<std::size_t>(band));
}

}  // namespace

TEST_CASE("metric names round-trip in canonical order") {
  const auto& all = all_metrics();
  CHECK(all.size() == 9);
  CHECK(metric_name(all[0]) == "correlation");
  CHECK(metric_name(all[8]) == "wpli");
  for (auto m : all) CHECK(parse_metric(metric_name(m)) == m);
  CHECK_FALSE(parse_metric("granger").has_value());
  CHECK_FALSE(is_spectral(Metric::fpc));
  CHECK(is_spectral(Metric::wpli));
}

TEST_CASE("column counts for 14 and 16 channels") {
  const auto e = Montage::emotiv14();
  CHECK(metric_descriptors(Metric::correlation, e).size() == 182);
  CHECK(metric_descriptors(Metric::fpc, e).size() == 630);
  CHECK(metric_descriptors(Metric::coh, e).size() == 546);
  const auto t = Montage::tuh16();
  CHECK(metric_descriptors(Metric::correlation, t).size() == 240);
  CHECK(metric_descriptors(Metric::fpc, t).size() == 816);
  CHECK(metric_descriptors(Metric::pli, t).size() == 720);

  const auto fpc = metric_descriptors(Metric::fpc, e);
  CHECK(fpc[0].to_string() == "pow__delta__AF3");
  CHECK(fpc[84].to_string() == "con__fpc__delta__AF3-F7");
  const auto cor = metric_descriptors(Metric::correlation, e);
  CHECK(cor[0].to_string() == "con__pearson__full__AF3-F7");
  CHECK(cor[91].to_string() == "con__spearman__full__AF3-F7");
}

TEST_CASE("pearson and spearman against direct formulas") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 7};
  // Direct: cov / (sx sy).
  const double mx = 3, my = 3.4;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CHECK(pearson_correlation(x, y) == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-12));
  CHECK(spearman_correlation(x, y) == doctest::Approx(0.8).epsilon(1e-12));  // ranks 2 1 4 3 5
  const std::vector<double> flat(5, 1.0);
  CHECK(pearson_correlation(x, flat) == 0.0);
  CHECK(spearman_correlation(flat, y) == 0.0);
}

TEST_CASE("range and symmetry invariants on random samples") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto d = checks::random_connectivity_dataset(25, Montage::emotiv14(), seed);
    const auto rep = checks::connectivity_invariants(d);
    for (const auto& f : rep.failures) MESSAGE(f);
    CHECK(rep.n_failures == 0);
    CHECK(rep.checked > 0);
  }
  const auto t = checks::random_connectivity_dataset(6, Montage::tuh16(), 3);
  CHECK(checks::connectivity_invariants(t).n_failures == 0);
}

TEST_CASE("a consistently lagged tone gives PLI = 1 and identical channels PLI = 0") {
  for (double lag : {0.4, 1.2, -0.9, 2.5}) {
    const auto d = checks::lagged_pair(10.0, lag, 0.0, 1);
    CHECK(std::abs(band_value(d, Metric::pli, Band::alpha) - 1.0) <= 1e-9);
    CHECK(std::abs(band_value(d, Metric::wpli, Band::alpha) - 1.0) <= 1e-9);
    const double dpli = band_value(d, Metric::dpli, Band::alpha);
    CHECK((dpli == 0.0 || dpli == 1.0));
  }
  const auto same = checks::lagged_pair(10.0, 0.0, 0.3, 2, true);
  for (Band b : {Band::delta, Band::alpha, Band::gamma}) {
    CHECK(std::abs(band_value(same, Metric::pli, b)) <= 1e-9);
    CHECK(band_value(same, Metric::wpli, b) == 0.0);  // 0/0 convention
    CHECK(band_value(same, Metric::dpli, b) == 0.5);  // H(0) = 1/2
    CHECK(band_value(same, Metric::coh, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(band_value(same, Metric::imcoh, b) == 0.0);
  }
}

TEST_CASE("phase locking: PLV = PPC = 1 for a locked tone, PPC <= PLV^2 unclamped") {
  const auto locked = checks::lagged_pair(10.0, 0.7, 0.0, 3);
  CHECK(band_value(locked, Metric::plv, Band::alpha) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(band_value(locked, Metric::ppc, Band::alpha) == doctest::Approx(1.0).epsilon(1e-9));

  const auto d = checks::random_connectivity_dataset(10, Montage::generic(4), 8);
  const auto plan = spectral::default_plan(d.n_timesteps(), d.sample_rate());
  const auto nfft = spectral::covering_nfft(plan.segment_len, d.sample_rate());
  for (std::size_t s = 0; s < d.n_samples(); ++s) {
    const auto cs = spectral::bandlimited_cross_spectra(spectral::epoch_segments(d, s, plan), d.sample_rate(), nfft);
    const auto plv = spectral_row(cs, Metric::plv);
    const auto ppc = spectral_row(cs, Metric::ppc);
    std::size_t col = 0;
    for (std::size_t b = 0; b < kBandCount; ++b)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j, ++col) {
          const double raw = ppc_unclamped(cs, b, i, j);
          CHECK(raw <= plv[col] * plv[col] + 1e-12);
          CHECK(ppc[col] == std::max(0.0, raw));
        }
  }
}

TEST_CASE("FPC is a log ratio of relative band powers") {
  const auto d = checks::lagged_pair(10.0, 0.5, 0.5, 4);
  const auto set = fpc_features(d);
  const auto& m = set.matrix;
  // Layout: pow__band__ch0, pow__band__ch1 per band, then one pair per band.
  for (std::size_t b = 0; b < kBandCount; ++b) {
    const double p0 = m.at(0, 2 * b), p1 = m.at(0, 2 * b + 1);
    CHECK(m.at(0, 12 + b) == doctest::Approx(std::log(std::max(p0, kFpcFloor)) - std::log(std::max(p1, kFpcFloor))));
  }
  double s0 = 0;
  for (std::size_t b = 0; b < kBandCount; ++b) s0 += m.at(0, 2 * b);
  CHECK(s0 == doctest::Approx(1.0));
}

TEST_CASE("low-resolution bands are flagged for short segments") {
  const auto plan = spectral::default_plan(256, 128.0);  // 0.25 s segments, 4 Hz bins
  const auto low = low_resolution_bands(plan, 128.0);
  CHECK(low[0]);  // delta has no native bin
  CHECK_FALSE(low[2]);
  const auto d = checks::lagged_pair(10.0, 0.5, 0.5, 5);
  const auto set = spectral_metric(d, Metric::coh, plan);
  CHECK(set.low_resolution == low);
  CHECK(std::isfinite(set.matrix.at(0, 0)));
}

TEST_CASE("candidate failures are isolated") {
  const auto d = checks::lagged_pair(10.0, 0.5, 0.5, 6);
  spectral::SegmentationPlan single{2.0, 1, 256};
  const std::vector<Metric> list{Metric::correlation, Metric::coh};
  const auto out = try_compute_candidates(d, list, single);
  CHECK(out[0].set.has_value());
  CHECK_FALSE(out[1].set.has_value());
  CHECK(out[1].error_kind == "SegmentationError");
  try {
    compute_all_candidates(d, single);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == "SegmentationError");
    CHECK(std::string(e.what()).find("metric coh") != std::string::npos);
  }
}

TEST_CASE("connectivity output does not depend on the worker count") {
  const auto d = checks::random_connectivity_dataset(12, Montage::emotiv14(), 9);
  const auto plan = spectral::default_plan(d.n_timesteps(), d.sample_rate());
  const auto a = compute_all_candidates(d, plan, 1);
  const auto b = compute_all_candidates(d, plan, 3);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].matrix.values == b[k].matrix.values);
}
