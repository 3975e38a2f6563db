#include "knoweeg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "knoweeg/parallel.hpp"

namespace knoweeg::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_gamma(double a) {
  int sign = 0;
  return ::lgamma_r(a, &sign);
}

// Sum over tie groups of t^3 - t.
double tie_term(std::vector<double> sorted_values) {
  std::sort(sorted_values.begin(), sorted_values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < sorted_values.size();) {
    std::size_t j = i;
    while (j < sorted_values.size() && sorted_values[j] == sorted_values[i]) ++j;
    const auto t = static_cast<double>(j - i);
    sum += t * t * t - t;
    i = j;
  }
  return sum;
}

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double mann_whitney_exact_p(double u, std::size_t n1, std::size_t n2) {
  // counts[a][b][k]: arrangements of a x-values and b y-values with U = k.
  const std::size_t max_u = n1 * n2;
  std::vector<std::vector<std::vector<double>>> f(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t a = 0; a <= n1; ++a)
    for (std::size_t b = 0; b <= n2; ++b) {
      auto& cur = f[a][b];
      cur.assign(a * b + 1, 0.0);
      if (a == 0 || b == 0) {
        cur[0] = 1.0;
        continue;
      }
      // The largest value is either an x (beating all b y's) or a y.
      const auto& with_x = f[a - 1][b];
      for (std::size_t k = 0; k < with_x.size(); ++k) cur[k + b] += with_x[k];
      const auto& with_y = f[a][b - 1];
      for (std::size_t k = 0; k < with_y.size(); ++k) cur[k] += with_y[k];
    }
  const auto& dist = f[n1][n2];
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k <= max_u; ++k) {
    const auto kd = static_cast<double>(k);
    if (kd <= u + 1e-9) lower += dist[k];
    if (kd >= u - 1e-9) upper += dist[k];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InputError("mann_whitney_u: both groups must be nonempty");
  const std::size_t n1 = x.size(), n2 = y.size();
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = midranks(pooled);
  double r1 = 0.0;
  for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
  const auto n1d = static_cast<double>(n1), n2d = static_cast<double>(n2);
  TestResult res;
  res.statistic = r1 - n1d * (n1d + 1.0) / 2.0;

  const double ties = tie_term(pooled);
  if (n1 + n2 <= 10 && ties == 0.0) {
    res.p = mann_whitney_exact_p(res.statistic, n1, n2);
    return res;
  }
  const double n = n1d + n2d;
  const double var = n1d * n2d / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (!(var > 0.0)) {
    res.p = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::abs(res.statistic - n1d * n2d / 2.0) - 0.5) / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
  return res;
}

TestResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  std::vector<double> pooled;
  std::size_t k = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw InputError("kruskal_wallis: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
    ++k;
  }
  if (k < 2) throw InputError("kruskal_wallis: need at least two groups");
  if (pooled.size() < 3) throw InputError("kruskal_wallis: need at least three values");
  const auto n = static_cast<double>(pooled.size());
  const double correction = 1.0 - tie_term(pooled) / (n * n * n - n);
  if (!(correction > 0.0)) return {0.0, 1.0};
  const auto ranks = midranks(pooled);
  double sum = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r += ranks[offset + i];
    offset += g.size();
    sum += r * r / static_cast<double>(g.size());
  }
  double h = (12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction;
  h = std::max(h, 0.0);
  return {h, chi2_sf(h, static_cast<double>(k - 1))};
}

double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw InputError("gamma_q: a must be positive");
  if (std::isnan(x)) return kNaN;
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double log_prefix = a * std::log(x) - x - log_gamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    // Series for P(a, x).
    double term = 1.0 / a, sum = term, ap = a;
    for (int i = 0; i < 10000; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

double chi2_sf(double x, double dof) {
  if (!(dof > 0.0)) throw InputError("chi2_sf: degrees of freedom must be positive");
  return gamma_q(dof / 2.0, x / 2.0);
}

std::vector<double> benjamini_yekutieli(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<double> out(m);
  if (m == 0) return out;
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("benjamini_yekutieli: p-values must lie in [0, 1]");
  double c = 0.0;
  for (std::size_t k = 1; k <= m; ++k) c += 1.0 / static_cast<double>(k);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  const double scale = static_cast<double>(m) * c;
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    running = std::min(running, scale * p[order[r]] / static_cast<double>(r + 1));
    out[order[r]] = running;
  }
  return out;
}

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-theta form of the CDF converges fast for small lambda.
    const double w = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double t = static_cast<double>(2 * k - 1);
      s += std::exp(-t * t * w);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

TestResult ks_two_sample(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InputError("ks_two_sample: both samples must be nonempty");
  std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return {d, kolmogorov_sf(std::sqrt(ne) * d)};
}

// ---------------------------------------------------------------------------
// Feature filter
// ---------------------------------------------------------------------------

std::string_view test_kind_name(TestKind kind) {
  return kind == TestKind::mann_whitney ? "mann_whitney" : "kruskal_wallis";
}

std::string_view drop_reason_name(DropReason reason) {
  switch (reason) {
    case DropReason::none: return "none";
    case DropReason::insignificant: return "insignificant";
    case DropReason::nan_column: return "nan_column";
  }
  return "none";
}

std::size_t FilterReport::n_kept() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.kept; }));
}

std::vector<std::size_t> FilterReport::kept_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].kept) out.push_back(i);
  return out;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

nlohmann::json FilterReport::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& e : entries)
    features.push_back({{"descriptor", e.descriptor},
                        {"p_raw", number_or_null(e.p_raw)},
                        {"p_adj", number_or_null(e.p_adj)},
                        {"kept", e.kept},
                        {"drop_reason", drop_reason_name(e.drop_reason)}});
  return {{"schema", "knoweeg.filter_report"},
          {"version", 1},
          {"alpha", alpha},
          {"test_used", test_kind_name(test_used)},
          {"n_kept", n_kept()},
          {"features", std::move(features)}};
}

FilterReport FilterReport::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != "knoweeg.filter_report" || j.at("version") != 1)
      throw FormatError("not a version-1 filter report");
    FilterReport r;
    r.alpha = j.at("alpha").get<double>();
    const auto test = j.at("test_used").get<std::string>();
    if (test == "mann_whitney") r.test_used = TestKind::mann_whitney;
    else if (test == "kruskal_wallis") r.test_used = TestKind::kruskal_wallis;
    else throw FormatError("unknown test '" + test + "'");
    for (const auto& f : j.at("features")) {
      FilterEntry e;
      e.descriptor = f.at("descriptor").get<std::string>();
      e.p_raw = number_from(f.at("p_raw"));
      e.p_adj = number_from(f.at("p_adj"));
      e.kept = f.at("kept").get<bool>();
      const auto reason = f.at("drop_reason").get<std::string>();
      if (reason == "none") e.drop_reason = DropReason::none;
      else if (reason == "insignificant") e.drop_reason = DropReason::insignificant;
      else if (reason == "nan_column") e.drop_reason = DropReason::nan_column;
      else throw FormatError("unknown drop reason '" + reason + "'");
      r.entries.push_back(std::move(e));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("filter report: ") + e.what());
  }
}

FilterReport compute_filter_report(const FeatureMatrix& features, std::span<const int> labels, int n_classes,
                                   double alpha, std::size_t threads) {
  if (labels.size() != features.n_samples) throw InputError("filter: label count differs from row count");
  if (n_classes < 2) throw InputError("filter: need at least two classes");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("filter: alpha must lie in (0, 1)");

  FilterReport report;
  report.alpha = alpha;
  report.test_used = n_classes == 2 ? TestKind::mann_whitney : TestKind::kruskal_wallis;
  const std::size_t m = features.n_features();
  report.entries.resize(m);
  const auto bad = features.nonfinite_columns();

  parallel_for(
      m,
      [&](std::size_t c) {
        auto& e = report.entries[c];
        e.descriptor = features.descriptors[c].to_string();
        if (bad[c]) {
          e.p_raw = e.p_adj = kNaN;
          e.drop_reason = DropReason::nan_column;
          return;
        }
        std::vector<std::vector<double>> groups(static_cast<std::size_t>(n_classes));
        for (std::size_t r = 0; r < features.n_samples; ++r)
          groups.at(static_cast<std::size_t>(labels[r])).push_back(features.at(r, c));
        std::erase_if(groups, [](const auto& g) { return g.empty(); });
        if (groups.size() < 2) {
          e.p_raw = 1.0;
        } else if (report.test_used == TestKind::mann_whitney) {
          e.p_raw = mann_whitney_u(groups[0], groups[1]).p;
        } else {
          e.p_raw = kruskal_wallis(groups).p;
        }
      },
      threads);

  std::vector<std::size_t> tested;
  std::vector<double> raw;
  for (std::size_t c = 0; c < m; ++c)
    if (report.entries[c].drop_reason != DropReason::nan_column) {
      tested.push_back(c);
      raw.push_back(report.entries[c].p_raw);
    }
  const auto adj = benjamini_yekutieli(raw);
  for (std::size_t k = 0; k < tested.size(); ++k) {
    auto& e = report.entries[tested[k]];
    e.p_adj = adj[k];
    e.kept = adj[k] <= alpha;
    e.drop_reason = e.kept ? DropReason::none : DropReason::insignificant;
  }
  return report;
}

FeatureMatrix apply_filter(const FeatureMatrix& features, const FilterReport& report) {
  if (report.entries.size() != features.n_features())
    throw AlignmentError("filter report covers " + std::to_string(report.entries.size()) + " features, matrix has " +
                         std::to_string(features.n_features()));
  for (std::size_t c = 0; c < features.n_features(); ++c)
    if (features.descriptors[c].to_string() != report.entries[c].descriptor)
      throw AlignmentError("column " + std::to_string(c) + " is " + features.descriptors[c].to_string() +
                           " but the report expects " + report.entries[c].descriptor);
  const auto keep = report.kept_indices();
  return features.select_columns(keep);
}

FilterResult filter_features(const FeatureMatrix& features, std::span<const int> labels, int n_classes, double alpha,
                             std::size_t threads) {
  if (features.mode_tag != ModeTag::per_electrode) throw InputError("filter: expects a per-electrode matrix");
  auto report = compute_filter_report(features, labels, n_classes, alpha, threads);
  if (report.n_kept() == 0)
    throw KeptNothingError("no feature survived the filter at alpha " + format_double(alpha), std::move(report));
  auto kept = apply_filter(features, report);
  return {std::move(kept), std::move(report)};
}

}  // namespace knoweeg::stats
