#include "knoweeg/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <set>

#include "knoweeg/errors.hpp"
#include "knoweeg/parallel.hpp"
#include "knoweeg/stats.hpp"

namespace knoweeg::connectivity {

using spectral::cplx;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<Metric, kMetricCount> kAll = {Metric::correlation, Metric::fpc,  Metric::coh,
                                                   Metric::imcoh,       Metric::ppc,  Metric::plv,
                                                   Metric::pli,         Metric::dpli, Metric::wpli};

constexpr std::array<std::string_view, kMetricCount> kNames = {"correlation", "fpc", "coh",  "imcoh", "ppc",
                                                               "plv",         "pli", "dpli", "wpli"};

std::size_t pair_count(std::size_t n_ch) { return n_ch * (n_ch - 1) / 2; }

std::vector<std::vector<double>> sample_channels(const EegDataset& ds, std::size_t s) {
  std::vector<std::vector<double>> out(ds.n_channels());
  for (std::size_t ch = 0; ch < ds.n_channels(); ++ch) {
    const auto x = ds.channel(s, ch);
    out[ch].assign(x.begin(), x.end());
  }
  return out;
}

void check_finite(std::span<const std::vector<double>> channels) {
  for (const auto& ch : channels)
    for (double v : ch)
      if (!std::isfinite(v)) throw InputError("connectivity: non-finite input");
}

bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

// Rows for every sample, computed in parallel. Per-sample failures are
// collected and the lowest-index one rethrown, so the reported error does not
// depend on scheduling.
template <class Fn>
std::vector<std::vector<double>> per_sample_rows(std::size_t n_samples, std::size_t threads,
                                                 std::vector<std::vector<std::string>>& flags, Fn fn) {
  std::vector<std::vector<double>> rows(n_samples);
  std::vector<std::exception_ptr> errors(n_samples);
  flags.assign(n_samples, {});
  parallel_for(
      n_samples,
      [&](std::size_t s) {
        try {
          rows[s] = fn(s, flags[s]);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      },
      threads);
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

FeatureMatrix assemble(std::vector<FeatureDescriptor> descriptors, const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m;
  m.mode_tag = ModeTag::connectivity;
  m.n_samples = rows.size();
  m.descriptors = std::move(descriptors);
  m.values.reserve(m.n_samples * m.n_features());
  for (const auto& r : rows) {
    if (r.size() != m.n_features()) throw InputError("connectivity: row width mismatch");
    m.values.insert(m.values.end(), r.begin(), r.end());
  }
  m.validate();
  return m;
}

std::vector<std::string> merge_flags(const std::vector<std::vector<std::string>>& per_sample) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t s = 0; s < per_sample.size(); ++s)
    for (const auto& f : per_sample[s]) {
      const auto msg = "sample " + std::to_string(s) + ": " + f;
      if (seen.insert(msg).second) out.push_back(msg);
    }
  return out;
}

void require_samples(const EegDataset& ds) {
  if (ds.n_samples() == 0) throw InputError("connectivity: empty dataset");
  if (ds.n_channels() < 2) throw InputError("connectivity: need at least two channels");
}

std::vector<bool> fpc_low_resolution(const EegDataset& ds) {
  const double seg = std::min(static_cast<double>(ds.n_timesteps()), std::round(2.0 * ds.sample_rate()));
  spectral::SegmentationPlan p;
  p.segment_len = static_cast<std::size_t>(seg);
  p.n_segments = 1;
  p.segment_duration = seg / ds.sample_rate();
  return low_resolution_bands(p, ds.sample_rate());
}

}  // namespace

const std::array<Metric, kMetricCount>& all_metrics() { return kAll; }

std::string_view metric_name(Metric metric) { return kNames[static_cast<std::size_t>(metric)]; }

std::optional<Metric> parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kMetricCount; ++i)
    if (kNames[i] == name) return kAll[i];
  return std::nullopt;
}

bool is_spectral(Metric metric) { return metric != Metric::correlation && metric != Metric::fpc; }

std::vector<FeatureDescriptor> metric_descriptors(Metric metric, const Montage& montage) {
  const auto& names = montage.channel_names;
  const std::size_t n = names.size();
  std::vector<FeatureDescriptor> out;
  auto pairs = [&](const std::string& token, const std::string& band) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) out.push_back(FeatureDescriptor::pair(token, band, names[i], names[j]));
  };
  if (metric == Metric::correlation) {
    pairs("pearson", "full");
    pairs("spearman", "full");
    return out;
  }
  if (metric == Metric::fpc) {
    for (const auto& b : canonical_bands())
      for (const auto& ch : names) out.push_back(FeatureDescriptor::band_power(std::string(b.name), ch));
  }
  for (const auto& b : canonical_bands()) pairs(std::string(metric_name(metric)), std::string(b.name));
  return out;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw InputError("pearson_correlation: length mismatch");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    mx += x[t];
    my += y[t];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double dx = x[t] - mx, dy = y[t] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0 && syy > 0.0)) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  const auto rx = stats::midranks(x);
  const auto ry = stats::midranks(y);
  return pearson_correlation(rx, ry);
}

std::vector<double> correlation_row(std::span<const std::vector<double>> channels, std::vector<std::string>* flags) {
  check_finite(channels);
  const std::size_t n = channels.size();
  for (std::size_t ch = 0; ch < n; ++ch)
    if (flags && is_constant(channels[ch])) flags->push_back("constant channel " + std::to_string(ch));
  std::vector<std::vector<double>> ranks;
  ranks.reserve(n);
  for (const auto& ch : channels) ranks.push_back(stats::midranks(ch));
  const std::size_t p = pair_count(n);
  std::vector<double> row(2 * p);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      row[k] = pearson_correlation(channels[i], channels[j]);
      row[p + k] = pearson_correlation(ranks[i], ranks[j]);
    }
  return row;
}

std::vector<double> fpc_row(std::span<const std::vector<double>> channels, double sample_rate,
                            std::vector<std::string>* flags) {
  check_finite(channels);
  const auto psd = spectral::welch_psd(channels, sample_rate);
  const auto rel = spectral::relative_band_powers(psd);
  const std::size_t n = channels.size();
  std::vector<std::array<double, kBandCount>> logs(n);
  std::vector<double> row;
  row.reserve(kBandCount * (n + pair_count(n)));
  for (std::size_t b = 0; b < kBandCount; ++b)
    for (std::size_t ch = 0; ch < n; ++ch) {
      double p = rel.values[ch][b];
      row.push_back(p);
      if (p < kFpcFloor) {
        if (flags)
          flags->push_back("channel " + std::to_string(ch) + " " + std::string(canonical_bands()[b].name) +
                           " power floored");
        p = kFpcFloor;
      }
      logs[ch][b] = std::log(p);
    }
  for (std::size_t b = 0; b < kBandCount; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) row.push_back(logs[i][b] - logs[j][b]);
  return row;
}

double ppc_unclamped(const spectral::CrossSpectra& cs, std::size_t band, std::size_t i, std::size_t j) {
  double re = 0.0, im = 0.0;
  for (std::size_t s = 0; s < cs.n_segments; ++s) {
    const auto& v = cs.at(s, band, i, j);
    const double mag = std::abs(v);
    if (mag > 0.0) {
      re += v.real() / mag;
      im += v.imag() / mag;
    }
  }
  const auto n = static_cast<double>(cs.n_segments);
  return (re * re + im * im - n) / (n * (n - 1.0));
}

std::vector<double> spectral_row(const spectral::CrossSpectra& cs, Metric metric) {
  if (!is_spectral(metric)) throw InputError("spectral_row: " + std::string(metric_name(metric)) + " is not spectral");
  const std::size_t n_ch = cs.n_channels;
  const std::size_t n_seg = cs.n_segments;
  const auto n = static_cast<double>(n_seg);
  std::vector<double> row;
  row.reserve(kBandCount * pair_count(n_ch));
  for (std::size_t b = 0; b < kBandCount; ++b) {
    for (std::size_t i = 0; i < n_ch; ++i) {
      for (std::size_t j = i + 1; j < n_ch; ++j) {
        if (cs.empty_band[b]) {
          row.push_back(kNaN);
          continue;
        }
        double value = 0.0;
        switch (metric) {
          case Metric::coh:
          case Metric::imcoh: {
            cplx sxy{0.0, 0.0};
            double sxx = 0.0, syy = 0.0;
            for (std::size_t s = 0; s < n_seg; ++s) {
              sxy += cs.at(s, b, i, j);
              sxx += cs.at(s, b, i, i).real();
              syy += cs.at(s, b, j, j).real();
            }
            const double den = std::sqrt((sxx / n) * (syy / n));
            if (den > 0.0) {
              value = metric == Metric::coh ? std::abs(sxy / n) / den : (sxy.imag() / n) / den;
              value = metric == Metric::coh ? std::clamp(value, 0.0, 1.0) : std::clamp(value, -1.0, 1.0);
            }
            break;
          }
          case Metric::plv: {
            double re = 0.0, im = 0.0;
            for (std::size_t s = 0; s < n_seg; ++s) {
              const auto& v = cs.at(s, b, i, j);
              const double mag = std::abs(v);
              if (mag > 0.0) {
                re += v.real() / mag;
                im += v.imag() / mag;
              }
            }
            value = std::min(1.0, std::hypot(re, im) / n);
            break;
          }
          case Metric::ppc:
            value = std::clamp(ppc_unclamped(cs, b, i, j), 0.0, 1.0);
            break;
          case Metric::pli: {
            double acc = 0.0;
            for (std::size_t s = 0; s < n_seg; ++s) {
              const double im = cs.at(s, b, i, j).imag();
              acc += static_cast<double>((im > 0.0) - (im < 0.0));
            }
            value = std::abs(acc) / n;
            break;
          }
          case Metric::dpli: {
            double acc = 0.0;
            for (std::size_t s = 0; s < n_seg; ++s) {
              const double im = cs.at(s, b, i, j).imag();
              acc += im > 0.0 ? 1.0 : (im < 0.0 ? 0.0 : 0.5);
            }
            value = acc / n;
            break;
          }
          case Metric::wpli: {
            double num = 0.0, den = 0.0;
            for (std::size_t s = 0; s < n_seg; ++s) {
              const double im = cs.at(s, b, i, j).imag();
              num += im;
              den += std::abs(im);
            }
            value = den > 0.0 ? std::min(1.0, std::abs(num) / den) : 0.0;
            break;
          }
          default: break;
        }
        row.push_back(value);
      }
    }
  }
  return row;
}

std::vector<bool> low_resolution_bands(const spectral::SegmentationPlan& plan, double sample_rate) {
  std::vector<bool> low(kBandCount, true);
  const auto& bands = canonical_bands();
  for (std::size_t k = 0; k <= plan.segment_len / 2; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(plan.segment_len);
    for (std::size_t b = 0; b < kBandCount; ++b)
      if (f >= bands[b].lo_hz && f < bands[b].hi_hz) low[b] = false;
  }
  return low;
}

ConnectivitySet correlation_features(const EegDataset& dataset, std::size_t threads) {
  require_samples(dataset);
  std::vector<std::vector<std::string>> flags;
  const auto rows = per_sample_rows(dataset.n_samples(), threads, flags, [&](std::size_t s, auto& f) {
    return correlation_row(sample_channels(dataset, s), &f);
  });
  ConnectivitySet out;
  out.metric = Metric::correlation;
  out.matrix = assemble(metric_descriptors(Metric::correlation, dataset.montage()), rows);
  out.flags = merge_flags(flags);
  return out;
}

ConnectivitySet fpc_features(const EegDataset& dataset, std::size_t threads) {
  require_samples(dataset);
  std::vector<std::vector<std::string>> flags;
  const auto rows = per_sample_rows(dataset.n_samples(), threads, flags, [&](std::size_t s, auto& f) {
    return fpc_row(sample_channels(dataset, s), dataset.sample_rate(), &f);
  });
  ConnectivitySet out;
  out.metric = Metric::fpc;
  out.matrix = assemble(metric_descriptors(Metric::fpc, dataset.montage()), rows);
  out.low_resolution = fpc_low_resolution(dataset);
  out.flags = merge_flags(flags);
  return out;
}

ConnectivitySet spectral_metric(const EegDataset& dataset, Metric metric, const spectral::SegmentationPlan& plan,
                                std::size_t threads) {
  const Metric one[] = {metric};
  auto outcome = try_compute_candidates(dataset, one, plan, threads).front();
  if (!outcome.set) throw Error(outcome.error_kind, outcome.error_message);
  return std::move(*outcome.set);
}

std::vector<CandidateOutcome> try_compute_candidates(const EegDataset& dataset, std::span<const Metric> metrics,
                                                     const spectral::SegmentationPlan& plan, std::size_t threads) {
  require_samples(dataset);
  std::vector<CandidateOutcome> out(metrics.size());
  std::vector<std::size_t> spectral_slots;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    out[k].metric = metrics[k];
    if (is_spectral(metrics[k])) {
      spectral_slots.push_back(k);
      continue;
    }
    try {
      out[k].set = metrics[k] == Metric::correlation ? correlation_features(dataset, threads)
                                                     : fpc_features(dataset, threads);
    } catch (const Error& e) {
      out[k].error_kind = e.kind();
      out[k].error_message = "metric " + std::string(metric_name(metrics[k])) + ": " + e.what();
    }
  }
  if (spectral_slots.empty()) return out;

  // One cross-spectra pass per sample serves every requested spectral metric.
  const std::size_t n_req = spectral_slots.size();
  try {
    const std::size_t nfft = spectral::covering_nfft(plan.segment_len, dataset.sample_rate());
    std::vector<std::vector<std::string>> flags;
    const auto packed = per_sample_rows(dataset.n_samples(), threads, flags, [&](std::size_t s, auto&) {
      const auto segs = spectral::epoch_segments(dataset, s, plan);
      const auto cs = spectral::bandlimited_cross_spectra(segs, dataset.sample_rate(), nfft);
      std::vector<double> joined;
      for (std::size_t k : spectral_slots) {
        const auto r = spectral_row(cs, metrics[k]);
        joined.insert(joined.end(), r.begin(), r.end());
      }
      return joined;
    });
    const auto low = low_resolution_bands(plan, dataset.sample_rate());
    const std::size_t width = kBandCount * pair_count(dataset.n_channels());
    for (std::size_t q = 0; q < n_req; ++q) {
      std::vector<std::vector<double>> rows(packed.size());
      for (std::size_t s = 0; s < packed.size(); ++s)
        rows[s].assign(packed[s].begin() + static_cast<std::ptrdiff_t>(q * width),
                       packed[s].begin() + static_cast<std::ptrdiff_t>((q + 1) * width));
      const Metric m = metrics[spectral_slots[q]];
      ConnectivitySet set;
      set.metric = m;
      set.matrix = assemble(metric_descriptors(m, dataset.montage()), rows);
      set.low_resolution = low;
      out[spectral_slots[q]].set = std::move(set);
    }
  } catch (const Error& e) {
    for (std::size_t k : spectral_slots) {
      out[k].error_kind = e.kind();
      out[k].error_message = "metric " + std::string(metric_name(metrics[k])) + ": " + e.what();
    }
  }
  return out;
}

std::vector<ConnectivitySet> compute_all_candidates(const EegDataset& dataset, const spectral::SegmentationPlan& plan,
                                                    std::size_t threads) {
  auto outcomes = try_compute_candidates(dataset, kAll, plan, threads);
  std::vector<ConnectivitySet> out;
  for (auto& o : outcomes) {
    if (!o.set) throw Error(o.error_kind, o.error_message);
    out.push_back(std::move(*o.set));
  }
  return out;
}

}  // namespace knoweeg::connectivity
