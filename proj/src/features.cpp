#include "knoweeg/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "knoweeg/errors.hpp"
#include "knoweeg/parallel.hpp"

namespace knoweeg::features {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double central_moment(std::span<const double> x, double mu, int k) {
  double s = 0.0;
  for (double v : x) s += std::pow(v - mu, k);
  return s / static_cast<double>(x.size());
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return kNaN;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.empty()) return kNaN;
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size());
}

double standard_deviation(std::span<const double> x) { return std::sqrt(variance(x)); }

double skewness(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 3) return kNaN;
  const double mu = mean(x);
  const double m2 = central_moment(x, mu, 2);
  if (m2 == 0.0) return 0.0;
  const double g1 = central_moment(x, mu, 3) / std::pow(m2, 1.5);
  return std::sqrt(n * (n - 1.0)) / (n - 2.0) * g1;
}

double kurtosis(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 4) return kNaN;
  const double mu = mean(x);
  const double m2 = central_moment(x, mu, 2);
  if (m2 == 0.0) return 0.0;
  const double g2 = central_moment(x, mu, 4) / (m2 * m2) - 3.0;
  return ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return kNaN;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double root_mean_square(std::span<const double> x) {
  if (x.empty()) return kNaN;
  return std::sqrt(abs_energy(x) / static_cast<double>(x.size()));
}

double abs_energy(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double autocorrelation(std::span<const double> x, std::size_t lag) {
  const std::size_t n = x.size();
  if (lag >= n) return kNaN;
  const double mu = mean(x);
  const double var = variance(x);
  if (!(var > 0.0)) return kNaN;
  double s = 0.0;
  for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mu) * (x[t + lag] - mu);
  return s / (static_cast<double>(n - lag) * var);
}

double partial_autocorrelation(std::span<const double> x, std::size_t lag) {
  if (lag == 0) return 1.0;
  const std::size_t n = x.size();
  if (lag >= n) return kNaN;
  const double mu = mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  if (!(c0 > 0.0)) return kNaN;
  std::vector<double> r(lag + 1);
  for (std::size_t k = 0; k <= lag; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mu) * (x[t + k] - mu);
    r[k] = s / c0;
  }
  std::vector<double> phi(lag + 1, 0.0), prev(lag + 1, 0.0);
  phi[1] = r[1];
  for (std::size_t k = 2; k <= lag; ++k) {
    prev = phi;
    double num = r[k], den = 1.0;
    for (std::size_t j = 1; j < k; ++j) {
      num -= prev[j] * r[k - j];
      den -= prev[j] * r[j];
    }
    if (den == 0.0) return kNaN;
    phi[k] = num / den;
    for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - phi[k] * prev[k - j];
  }
  return phi[lag];
}

double mean_abs_change(std::span<const double> x) {
  if (x.size() < 2) return kNaN;
  return absolute_sum_of_changes(x) / static_cast<double>(x.size() - 1);
}

double mean_change(std::span<const double> x) {
  if (x.size() < 2) return kNaN;
  return (x.back() - x.front()) / static_cast<double>(x.size() - 1);
}

double mean_second_derivative_central(std::span<const double> x) {
  if (x.size() < 3) return kNaN;
  double s = 0.0;
  for (std::size_t i = 0; i + 2 < x.size(); ++i) s += 0.5 * (x[i + 2] - 2.0 * x[i + 1] + x[i]);
  return s / static_cast<double>(x.size() - 2);
}

double absolute_sum_of_changes(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += std::abs(x[i] - x[i - 1]);
  return s;
}

double change_quantiles(std::span<const double> x, double lower_q, double upper_q, bool absolute, Aggregate agg) {
  if (x.size() < 2 || lower_q >= upper_q) return 0.0;
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = quantile(sorted, lower_q);
  const double hi = quantile(sorted, upper_q);
  std::vector<double> diffs;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const bool in_prev = x[i - 1] >= lo && x[i - 1] <= hi;
    const bool in_cur = x[i] >= lo && x[i] <= hi;
    if (in_prev && in_cur) {
      const double d = x[i] - x[i - 1];
      diffs.push_back(absolute ? std::abs(d) : d);
    }
  }
  if (diffs.empty()) return 0.0;
  return agg == Aggregate::mean ? mean(diffs) : variance(diffs);
}

std::size_t number_peaks(std::span<const double> x, std::size_t support) {
  if (support == 0) throw InputError("number_peaks: support must be at least 1");
  const std::size_t n = x.size();
  if (n < 2 * support + 1) return 0;
  std::size_t count = 0;
  for (std::size_t i = support; i + support < n; ++i) {
    bool peak = true;
    for (std::size_t k = 1; k <= support && peak; ++k) peak = x[i] > x[i - k] && x[i] > x[i + k];
    if (peak) ++count;
  }
  return count;
}

std::size_t count_above_mean(std::span<const double> x) {
  const double mu = mean(x);
  return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [mu](double v) { return v > mu; }));
}

std::size_t count_below_mean(std::span<const double> x) {
  const double mu = mean(x);
  return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [mu](double v) { return v < mu; }));
}

namespace {

template <class Pred>
std::size_t longest_run(std::span<const double> x, Pred pred) {
  std::size_t best = 0, cur = 0;
  for (double v : x) {
    cur = pred(v) ? cur + 1 : 0;
    best = std::max(best, cur);
  }
  return best;
}

}  // namespace

std::size_t longest_strike_above_mean(std::span<const double> x) {
  const double mu = mean(x);
  return longest_run(x, [mu](double v) { return v > mu; });
}

std::size_t longest_strike_below_mean(std::span<const double> x) {
  const double mu = mean(x);
  return longest_run(x, [mu](double v) { return v < mu; });
}

double permutation_entropy(std::span<const double> x, std::size_t dimension, std::size_t tau) {
  if (dimension < 2 || dimension > 7) throw InputError("permutation_entropy: dimension must lie in [2, 7]");
  if (tau == 0) throw InputError("permutation_entropy: tau must be positive");
  const std::size_t span_len = (dimension - 1) * tau + 1;
  if (x.size() < span_len) throw LengthError("permutation_entropy: series shorter than one embedding window");

  std::size_t n_patterns = 1;
  for (std::size_t k = 2; k <= dimension; ++k) n_patterns *= k;
  std::vector<std::size_t> counts(n_patterns, 0);
  const std::size_t n_windows = x.size() - span_len + 1;
  std::array<std::size_t, 7> order{};
  std::array<double, 7> w{};
  for (std::size_t start = 0; start < n_windows; ++start) {
    for (std::size_t k = 0; k < dimension; ++k) {
      w[k] = x[start + k * tau];
      order[k] = k;
    }
    // Stable insertion sort: equal values keep index order.
    for (std::size_t a = 1; a < dimension; ++a) {
      const std::size_t key = order[a];
      std::size_t b = a;
      while (b > 0 && w[order[b - 1]] > w[key]) {
        order[b] = order[b - 1];
        --b;
      }
      order[b] = key;
    }
    // Lehmer code of the permutation.
    std::size_t code = 0;
    for (std::size_t a = 0; a < dimension; ++a) {
      std::size_t smaller = 0;
      for (std::size_t b = a + 1; b < dimension; ++b) smaller += order[b] < order[a];
      code = code * (dimension - a) + smaller;
    }
    ++counts[code];
  }
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n_windows);
    h -= p * std::log(p);
  }
  return h;
}

double binned_entropy(std::span<const double> x, std::size_t max_bins) {
  if (x.empty() || max_bins == 0) return kNaN;
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  double lo = *mn_it, hi = *mx_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<std::size_t> hist(max_bins, 0);
  const double width = (hi - lo) / static_cast<double>(max_bins);
  for (double v : x) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    if (b >= max_bins) b = max_bins - 1;
    ++hist[b];
  }
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(x.size());
    h -= p * std::log(p);
  }
  return h;
}

double lempel_ziv_complexity(std::span<const double> x, std::size_t bins) {
  if (x.empty() || bins == 0) return kNaN;
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn_it, hi = *mx_it;
  std::vector<double> edges(bins);
  for (std::size_t k = 1; k <= bins; ++k) edges[k - 1] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  std::string symbols;
  symbols.reserve(x.size());
  for (double v : x)
    symbols.push_back(static_cast<char>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin()));

  std::unordered_set<std::string> words;
  std::size_t ind = 0, inc = 1;
  const std::size_t n = symbols.size();
  while (ind + inc <= n) {
    std::string w = symbols.substr(ind, inc);
    if (words.count(w)) {
      ++inc;
    } else {
      words.insert(std::move(w));
      ind += inc;
      inc = 1;
    }
  }
  return static_cast<double>(words.size()) / static_cast<double>(n);
}

double cid_ce(std::span<const double> x, bool normalize) {
  if (x.size() < 2) return kNaN;
  std::vector<double> z(x.begin(), x.end());
  if (normalize) {
    const double sd = standard_deviation(x);
    if (sd == 0.0) return 0.0;
    const double mu = mean(x);
    for (auto& v : z) v = (v - mu) / sd;
  }
  double s = 0.0;
  for (std::size_t i = 1; i < z.size(); ++i) s += (z[i] - z[i - 1]) * (z[i] - z[i - 1]);
  return std::sqrt(s);
}

double fft_aggregated(std::span<const double> x, FftAggregate agg) {
  if (x.size() < 2) return kNaN;
  const auto spec = spectral::rfft(x, x.size());
  std::vector<double> mag(spec.size());
  double total = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) total += mag[k] = std::abs(spec[k]);
  if (!(total > 0.0)) return kNaN;
  auto moment = [&](int p) {
    double s = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) s += mag[k] * std::pow(static_cast<double>(k), p);
    return s / total;
  };
  const double m1 = moment(1);
  if (agg == FftAggregate::centroid) return m1;
  const double var = moment(2) - m1 * m1;
  if (agg == FftAggregate::variance) return var;
  if (var < 0.5) return kNaN;
  if (agg == FftAggregate::skew) return (moment(3) - 3.0 * m1 * var - m1 * m1 * m1) / std::pow(var, 1.5);
  return (moment(4) - 4.0 * m1 * moment(3) + 6.0 * moment(2) * m1 * m1 - 3.0 * std::pow(m1, 4)) / (var * var);
}

// ---------------------------------------------------------------------------
// Channel context
// ---------------------------------------------------------------------------

ChannelContext::ChannelContext(std::span<const float> samples, double rate)
    : x(samples.begin(), samples.end()), sample_rate(rate) {
  prepare();
}

ChannelContext::ChannelContext(std::span<const double> samples, double rate)
    : x(samples.begin(), samples.end()), sample_rate(rate) {
  prepare();
}

void ChannelContext::prepare() {
  sorted = x;
  std::sort(sorted.begin(), sorted.end());
  mean = features::mean(x);
  variance = features::variance(x);
  const auto seg = std::min(x.size(), static_cast<std::size_t>(std::llround(2.0 * sample_rate)));
  bool finite = std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
  if (finite && seg >= 8) {
    psd = spectral::welch_psd(std::span<const double>(x), sample_rate);
    has_psd = true;
  }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

using Params = std::vector<std::pair<std::string, std::string>>;

double spectral_centroid(const ChannelContext& c) {
  if (!c.has_psd) return kNaN;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 1; k < c.psd.freqs.size(); ++k) {
    num += c.psd.freqs[k] * c.psd.power[0][k];
    den += c.psd.power[0][k];
  }
  return den > 0.0 ? num / den : kNaN;
}

double median_frequency(const ChannelContext& c) {
  if (!c.has_psd) return kNaN;
  const auto& p = c.psd.power[0];
  const double total = std::accumulate(p.begin() + 1, p.end(), 0.0);
  if (!(total > 0.0)) return kNaN;
  double acc = 0.0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    acc += p[k];
    if (acc >= 0.5 * total) return c.psd.freqs[k];
  }
  return c.psd.freqs.back();
}

double peak_frequency(const ChannelContext& c) {
  if (!c.has_psd) return kNaN;
  const auto& p = c.psd.power[0];
  if (p.size() < 2) return kNaN;
  const auto it = std::max_element(p.begin() + 1, p.end());
  if (!(*it > 0.0)) return kNaN;
  return c.psd.freqs[static_cast<std::size_t>(it - p.begin())];
}

double relative_band_power(const ChannelContext& c, std::size_t band) {
  if (!c.has_psd) return kNaN;
  try {
    return spectral::relative_band_powers(c.psd.freqs, c.psd.power[0])[band];
  } catch (const Error&) {
    return kNaN;
  }
}

}  // namespace

FeatureRegistry FeatureRegistry::default_registry() {
  std::vector<FeatureSpec> s;
  auto add = [&](std::string id, Params params, std::function<double(const ChannelContext&)> fn) {
    s.push_back({std::move(id), std::move(params), std::move(fn)});
  };

  // Distributional.
  add("mean", {}, [](const ChannelContext& c) { return c.mean; });
  add("variance", {}, [](const ChannelContext& c) { return c.variance; });
  add("standard_deviation", {}, [](const ChannelContext& c) { return std::sqrt(c.variance); });
  add("skewness", {}, [](const ChannelContext& c) { return skewness(c.x); });
  add("kurtosis", {}, [](const ChannelContext& c) { return kurtosis(c.x); });
  add("median", {}, [](const ChannelContext& c) { return quantile(c.sorted, 0.5); });
  add("minimum", {}, [](const ChannelContext& c) { return c.sorted.empty() ? kNaN : c.sorted.front(); });
  add("maximum", {}, [](const ChannelContext& c) { return c.sorted.empty() ? kNaN : c.sorted.back(); });
  add("root_mean_square", {}, [](const ChannelContext& c) { return root_mean_square(c.x); });
  add("abs_energy", {}, [](const ChannelContext& c) { return abs_energy(c.x); });
  for (const char* q : {"0.1", "0.2", "0.3", "0.4", "0.6", "0.7", "0.8", "0.9"}) {
    const double qv = std::stod(q);
    add("quantile", {{"q", q}}, [qv](const ChannelContext& c) { return quantile(c.sorted, qv); });
  }

  // Temporal.
  for (std::size_t lag = 1; lag <= 9; ++lag)
    add("autocorrelation", {{"lag", std::to_string(lag)}},
        [lag](const ChannelContext& c) { return autocorrelation(c.x, lag); });
  for (std::size_t lag = 1; lag <= 5; ++lag)
    add("partial_autocorrelation", {{"lag", std::to_string(lag)}},
        [lag](const ChannelContext& c) { return partial_autocorrelation(c.x, lag); });
  add("mean_abs_change", {}, [](const ChannelContext& c) { return mean_abs_change(c.x); });
  add("mean_change", {}, [](const ChannelContext& c) { return mean_change(c.x); });
  add("mean_second_derivative_central", {}, [](const ChannelContext& c) { return mean_second_derivative_central(c.x); });
  add("absolute_sum_of_changes", {}, [](const ChannelContext& c) { return absolute_sum_of_changes(c.x); });
  struct Corridor {
    const char* agg;
    const char* isabs;
    const char* qh;
    const char* ql;
  };
  for (const Corridor& k : {Corridor{"mean", "true", "0.8", "0.0"}, Corridor{"mean", "true", "0.8", "0.2"},
                            Corridor{"mean", "true", "0.6", "0.0"}, Corridor{"mean", "true", "1.0", "0.4"},
                            Corridor{"var", "true", "0.8", "0.0"}, Corridor{"mean", "false", "0.8", "0.2"}}) {
    const Aggregate agg = std::string_view(k.agg) == "mean" ? Aggregate::mean : Aggregate::var;
    const bool isabs = std::string_view(k.isabs) == "true";
    const double qh = std::stod(k.qh), ql = std::stod(k.ql);
    add("change_quantiles", {{"f_agg", k.agg}, {"isabs", k.isabs}, {"qh", k.qh}, {"ql", k.ql}},
        [=](const ChannelContext& c) { return change_quantiles(c.x, ql, qh, isabs, agg); });
  }
  for (std::size_t n : {1, 3, 5})
    add("number_peaks", {{"n", std::to_string(n)}},
        [n](const ChannelContext& c) { return static_cast<double>(number_peaks(c.x, n)); });
  add("count_above_mean", {}, [](const ChannelContext& c) { return static_cast<double>(count_above_mean(c.x)); });
  add("count_below_mean", {}, [](const ChannelContext& c) { return static_cast<double>(count_below_mean(c.x)); });
  add("longest_strike_above_mean", {},
      [](const ChannelContext& c) { return static_cast<double>(longest_strike_above_mean(c.x)); });
  add("longest_strike_below_mean", {},
      [](const ChannelContext& c) { return static_cast<double>(longest_strike_below_mean(c.x)); });

  // Complexity.
  for (std::size_t m = 3; m <= 7; ++m)
    add("permutation_entropy", {{"dimension", std::to_string(m)}, {"tau", "1"}}, [m](const ChannelContext& c) {
      return c.x.size() < m ? kNaN : permutation_entropy(c.x, m, 1);
    });
  add("binned_entropy", {{"max_bins", "10"}}, [](const ChannelContext& c) { return binned_entropy(c.x, 10); });
  for (std::size_t bins : {2, 10})
    add("lempel_ziv_complexity", {{"bins", std::to_string(bins)}},
        [bins](const ChannelContext& c) { return lempel_ziv_complexity(c.x, bins); });
  add("cid_ce", {{"normalize", "true"}}, [](const ChannelContext& c) { return cid_ce(c.x, true); });
  add("cid_ce", {{"normalize", "false"}}, [](const ChannelContext& c) { return cid_ce(c.x, false); });

  // Spectral.
  for (const auto& b : canonical_bands()) {
    const auto idx = static_cast<std::size_t>(b.band);
    add("relative_band_power", {{"band", std::string(b.name)}},
        [idx](const ChannelContext& c) { return relative_band_power(c, idx); });
  }
  add("spectral_centroid", {}, spectral_centroid);
  add("median_frequency", {}, median_frequency);
  add("peak_frequency", {}, peak_frequency);
  for (const auto& [name, agg] : {std::pair{"centroid", FftAggregate::centroid}, std::pair{"variance", FftAggregate::variance},
                                  std::pair{"skew", FftAggregate::skew}, std::pair{"kurtosis", FftAggregate::kurtosis}})
    add("fft_aggregated", {{"aggtype", name}}, [agg](const ChannelContext& c) { return fft_aggregated(c.x, agg); });

  return FeatureRegistry(std::move(s));
}

FeatureRegistry FeatureRegistry::select(std::span<const std::string> feature_ids) const {
  std::set<std::string> wanted(feature_ids.begin(), feature_ids.end());
  std::set<std::string> known;
  for (const auto& s : specs_) known.insert(s.feature_id);
  for (const auto& id : wanted)
    if (!known.count(id)) throw InputError("unknown feature id '" + id + "'");
  std::vector<FeatureSpec> out;
  for (const auto& s : specs_)
    if (wanted.count(s.feature_id)) out.push_back(s);
  return FeatureRegistry(std::move(out));
}

FeatureMatrix extract_features(const EegDataset& dataset, const FeatureRegistry& registry, std::size_t threads) {
  if (registry.empty()) throw InputError("extract_features: empty registry");
  const std::size_t n_ch = dataset.n_channels();
  const std::size_t n_feat = registry.size();
  FeatureMatrix out;
  out.mode_tag = ModeTag::per_electrode;
  out.n_samples = dataset.n_samples();
  out.descriptors.reserve(n_ch * n_feat);
  for (std::size_t ch = 0; ch < n_ch; ++ch)
    for (const auto& spec : registry.specs())
      out.descriptors.push_back(
          FeatureDescriptor::electrode(dataset.montage().channel_names[ch], spec.feature_id, spec.params));
  out.values.assign(out.n_samples * n_ch * n_feat, 0.0);

  const std::size_t width = n_ch * n_feat;
  parallel_for(
      dataset.n_samples() * n_ch,
      [&](std::size_t job) {
        const std::size_t s = job / n_ch, ch = job % n_ch;
        const ChannelContext ctx(dataset.channel(s, ch), dataset.sample_rate());
        double* dst = out.values.data() + s * width + ch * n_feat;
        for (std::size_t f = 0; f < n_feat; ++f) {
          try {
            dst[f] = registry.specs()[f].compute(ctx);
          } catch (const Error&) {
            dst[f] = kNaN;
          }
        }
      },
      threads);
  out.validate();
  return out;
}

}  // namespace knoweeg::features
