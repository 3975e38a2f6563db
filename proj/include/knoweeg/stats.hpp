#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "knoweeg/errors.hpp"
#include "knoweeg/feature_matrix.hpp"

namespace knoweeg::stats {

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
};

// Midranks (1-based) of the values, ties sharing their average rank.
std::vector<double> midranks(std::span<const double> values);

// U = #{x_i > y_j} + 0.5 #{x_i == y_j}, two-sided p. Exact null distribution
// when |x| + |y| <= 10 and there are no ties; otherwise the normal
// approximation with tie-corrected variance and a 0.5 continuity correction.
// Both groups constant and equal gives p = 1.
TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y);

// Two-sided exact p for statistic u (may be a half-integer only with ties,
// which the exact path never sees).
double mann_whitney_exact_p(double u, std::size_t n1, std::size_t n2);

// Tie-corrected H with p from the chi-square survival function, k-1 degrees
// of freedom. Requires at least two nonempty groups and 3 values in total.
TestResult kruskal_wallis(std::span<const std::vector<double>> groups);

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double gamma_q(double a, double x);
double chi2_sf(double x, double dof);

// Benjamini-Yekutieli step-up adjusted p-values, in input order:
//   p_adj_(i) = min(1, min_{j >= i} m c(m) p_(j) / j),  c(m) = sum_{k<=m} 1/k
std::vector<double> benjamini_yekutieli(std::span<const double> p);

// Kolmogorov survival function P(K > lambda).
double kolmogorov_sf(double lambda);

// D = sup |F_x - F_y|; p from the asymptotic Kolmogorov distribution at
// lambda = sqrt(n_e) D, n_e = |x||y| / (|x| + |y|).
TestResult ks_two_sample(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Feature filter
// ---------------------------------------------------------------------------

enum class TestKind { mann_whitney, kruskal_wallis };
enum class DropReason { none, insignificant, nan_column };

std::string_view test_kind_name(TestKind kind);
std::string_view drop_reason_name(DropReason reason);

struct FilterEntry {
  std::string descriptor;
  double p_raw = 1.0;  // NaN for nan_column drops
  double p_adj = 1.0;
  bool kept = false;
  DropReason drop_reason = DropReason::insignificant;
};

struct FilterReport {
  double alpha = 0.05;
  TestKind test_used = TestKind::mann_whitney;
  std::vector<FilterEntry> entries;  // one per input column, input order

  std::size_t n_kept() const;
  std::vector<std::size_t> kept_indices() const;

  nlohmann::json to_json() const;
  static FilterReport from_json(const nlohmann::json& j);
};

class KeptNothingError : public Error {
public:
  KeptNothingError(const std::string& message, FilterReport report)
      : Error("KeptNothingError", message), report_(std::move(report)) {}
  const FilterReport& report() const noexcept { return report_; }

private:
  FilterReport report_;
};

// Tests every column against the labels (Mann-Whitney for two classes,
// Kruskal-Wallis otherwise). Columns with any non-finite value are dropped
// before testing and excluded from the BY family. Never throws on zero keeps.
FilterReport compute_filter_report(const FeatureMatrix& features, std::span<const int> labels, int n_classes,
                                   double alpha, std::size_t threads = 0);

// Kept columns of `features`, whose descriptors must match the report's in
// order (AlignmentError otherwise).
FeatureMatrix apply_filter(const FeatureMatrix& features, const FilterReport& report);

struct FilterResult {
  FeatureMatrix kept;
  FilterReport report;
};

// compute_filter_report + apply_filter; throws KeptNothingError (carrying the
// report) when nothing survives. Requires a per-electrode matrix.
FilterResult filter_features(const FeatureMatrix& features, std::span<const int> labels, int n_classes,
                             double alpha, std::size_t threads = 0);

}  // namespace knoweeg::stats
