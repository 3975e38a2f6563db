#include "knoweeg/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "knoweeg/errors.hpp"

namespace knoweeg::spectral {

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

namespace {

std::vector<double> welch_channel(std::span<const double> x, double fs, std::size_t seg,
                                  const WelchConfig& cfg, const std::vector<double>& window, double window_power) {
  const std::size_t n = x.size();
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(seg) * (1.0 - cfg.overlap))));
  const std::size_t n_bins = seg / 2 + 1;
  std::vector<double> acc(n_bins, 0.0);
  std::size_t count = 0;
  std::vector<double> buf(seg);
  for (std::size_t start = 0; start + seg <= n; start += step) {
    double mean = 0.0;
    if (cfg.detrend) {
      for (std::size_t t = 0; t < seg; ++t) mean += x[start + t];
      mean /= static_cast<double>(seg);
    }
    for (std::size_t t = 0; t < seg; ++t) buf[t] = (x[start + t] - mean) * window[t];
    const auto spec = rfft(buf, seg);
    for (std::size_t k = 0; k < n_bins; ++k) acc[k] += std::norm(spec[k]);
    ++count;
  }
  const double scale = 1.0 / (fs * window_power * static_cast<double>(count));
  for (std::size_t k = 0; k < n_bins; ++k) {
    const bool edge = k == 0 || (seg % 2 == 0 && k == seg / 2);
    acc[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return acc;
}

}  // namespace

PsdEstimate welch_psd(std::span<const std::vector<double>> channels, double fs, const WelchConfig& cfg) {
  if (channels.empty()) throw InputError("welch_psd: no channels");
  if (!(fs > 0.0)) throw InputError("welch_psd: sample rate must be positive");
  if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw InputError("welch_psd: overlap must lie in [0, 1)");
  const std::size_t n = channels.front().size();
  std::size_t seg = cfg.segment_len;
  if (seg == 0) seg = std::min(n, static_cast<std::size_t>(std::llround(2.0 * fs)));
  if (seg < 8) throw InputError("welch_psd: segment length must be at least 8");
  for (const auto& ch : channels) {
    if (ch.size() != n) throw InputError("welch_psd: channels differ in length");
    if (n < seg) throw InputError("welch_psd: signal shorter than segment");
    for (double v : ch)
      if (!std::isfinite(v)) throw InputError("welch_psd: non-finite input");
  }
  const auto window = hann(seg);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  PsdEstimate out;
  out.freqs.resize(seg / 2 + 1);
  for (std::size_t k = 0; k < out.freqs.size(); ++k) out.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(seg);
  out.power.reserve(channels.size());
  for (const auto& ch : channels) out.power.push_back(welch_channel(ch, fs, seg, cfg, window, window_power));
  return out;
}

PsdEstimate welch_psd(std::span<const double> signal, double fs, const WelchConfig& cfg) {
  std::vector<std::vector<double>> one{std::vector<double>(signal.begin(), signal.end())};
  return welch_psd(std::span<const std::vector<double>>(one), fs, cfg);
}

BandVector band_powers(std::span<const double> freqs, std::span<const double> power) {
  BandVector out{};
  if (freqs.size() < 2) return out;
  const double df = freqs[1] - freqs[0];
  const auto& bands = canonical_bands();
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    for (std::size_t b = 0; b < kBandCount; ++b) {
      if (freqs[k] >= bands[b].lo_hz && freqs[k] < bands[b].hi_hz) {
        out[b] += power[k] * df;
        break;
      }
    }
  }
  return out;
}

BandVector relative_band_powers(std::span<const double> freqs, std::span<const double> power) {
  if (freqs.empty() || freqs.back() < canonical_bands().back().hi_hz)
    throw InputError("relative_band_powers: spectrum does not reach 40 Hz");
  BandVector bp = band_powers(freqs, power);
  const double total = std::accumulate(bp.begin(), bp.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateSpectrumError("zero total power in 0.5-40 Hz");
  for (auto& v : bp) v /= total;
  return bp;
}

RelativeBandPowers relative_band_powers(const PsdEstimate& psd) {
  RelativeBandPowers out;
  out.values.reserve(psd.power.size());
  for (const auto& p : psd.power) out.values.push_back(relative_band_powers(psd.freqs, p));
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

SegmentationPlan make_plan(std::size_t n_timesteps, double fs, double segment_duration) {
  if (!(segment_duration > 0.0)) throw PlanError("segment duration must be positive");
  SegmentationPlan plan;
  plan.segment_duration = segment_duration;
  plan.segment_len = static_cast<std::size_t>(std::llround(segment_duration * fs));
  if (plan.segment_len == 0) throw PlanError("segment shorter than one sample");
  plan.n_segments = n_timesteps / plan.segment_len;
  return plan;
}

SegmentationPlan default_plan(std::size_t n_timesteps, double fs) {
  struct Row {
    double duration;
    std::size_t n_segments;
  };
  static constexpr Row rows[] = {{2.0, 8}, {5.0, 10}, {10.0, 16}};
  const double duration = static_cast<double>(n_timesteps) / fs;
  const Row* best = &rows[0];
  for (const auto& r : rows)
    if (std::abs(r.duration - duration) < std::abs(best->duration - duration)) best = &r;
  std::size_t count = best->n_segments;
  while (count > 2 && n_timesteps / count < 8) --count;
  SegmentationPlan plan;
  plan.n_segments = count;
  plan.segment_len = n_timesteps / count;
  plan.segment_duration = static_cast<double>(plan.segment_len) / fs;
  return plan;
}

SegmentStack epoch_segments(const EegDataset& dataset, std::size_t sample, const SegmentationPlan& plan) {
  if (plan.segment_len == 0 || plan.n_segments == 0) throw PlanError("empty segmentation plan");
  if (plan.n_segments * plan.segment_len > dataset.n_timesteps())
    throw PlanError("plan needs " + std::to_string(plan.n_segments * plan.segment_len) + " samples but only " +
                    std::to_string(dataset.n_timesteps()) + " are available");
  SegmentStack out;
  out.n_segments = plan.n_segments;
  out.n_channels = dataset.n_channels();
  out.segment_len = plan.segment_len;
  out.data.resize(out.n_segments * out.n_channels * out.segment_len);
  for (std::size_t s = 0; s < out.n_segments; ++s)
    for (std::size_t ch = 0; ch < out.n_channels; ++ch) {
      const auto src = dataset.channel(sample, ch).subspan(s * plan.segment_len, plan.segment_len);
      double* dst = out.data.data() + (s * out.n_channels + ch) * out.segment_len;
      for (std::size_t t = 0; t < out.segment_len; ++t) dst[t] = src[t];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-spectra
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> band_bin_lists(std::size_t nfft, double fs) {
  std::vector<std::vector<std::size_t>> bins(kBandCount);
  const auto& bands = canonical_bands();
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(nfft);
    for (std::size_t b = 0; b < kBandCount; ++b)
      if (f >= bands[b].lo_hz && f < bands[b].hi_hz) bins[b].push_back(k);
  }
  return bins;
}

}  // namespace

std::size_t covering_nfft(std::size_t segment_len, double fs) {
  auto covers = [&](std::size_t nfft) {
    for (const auto& b : band_bin_lists(nfft, fs))
      if (b.empty()) return false;
    return true;
  };
  if (covers(segment_len)) return segment_len;
  std::size_t nfft = next_power_of_two(segment_len + 1);
  while (!covers(nfft)) {
    if (nfft > (std::size_t{1} << 24)) throw PlanError("no FFT length resolves every band");
    nfft <<= 1;
  }
  return nfft;
}

CrossSpectra bandlimited_cross_spectra(const SegmentStack& segments, double fs, std::size_t nfft) {
  if (segments.n_segments < 2) throw SegmentationError("cross-spectra need at least 2 segments");
  if (nfft == 0) nfft = segments.segment_len;
  if (nfft < segments.segment_len) throw PlanError("nfft shorter than the segment");
  for (double v : segments.data)
    if (!std::isfinite(v)) throw InputError("cross-spectra: non-finite input");

  const auto bins = band_bin_lists(nfft, fs);
  const auto window = hann(segments.segment_len);
  const std::size_t n_ch = segments.n_channels;

  CrossSpectra out;
  out.n_segments = segments.n_segments;
  out.n_channels = n_ch;
  out.nfft = nfft;
  out.values.resize(out.n_segments * kBandCount * n_ch * n_ch);
  for (std::size_t b = 0; b < kBandCount; ++b) {
    out.band_bins.push_back(bins[b].size());
    out.empty_band.push_back(bins[b].empty());
  }

  std::vector<std::vector<cplx>> spectra(n_ch);
  std::vector<double> buf(segments.segment_len);
  for (std::size_t s = 0; s < segments.n_segments; ++s) {
    for (std::size_t ch = 0; ch < n_ch; ++ch) {
      const auto x = segments.at(s, ch);
      for (std::size_t t = 0; t < buf.size(); ++t) buf[t] = x[t] * window[t];
      spectra[ch] = rfft(buf, nfft);
    }
    for (std::size_t b = 0; b < kBandCount; ++b) {
      const auto& kb = bins[b];
      for (std::size_t i = 0; i < n_ch; ++i) {
        for (std::size_t j = 0; j < n_ch; ++j) {
          cplx& dst = out.values[((s * kBandCount + b) * n_ch + i) * n_ch + j];
          if (kb.empty()) {
            dst = cplx(std::nan(""), std::nan(""));
            continue;
          }
          // Written out so S_ij and conj(S_ji) round identically.
          double re = 0.0, im = 0.0;
          for (std::size_t k : kb) {
            const cplx a = spectra[i][k];
            const cplx c = spectra[j][k];
            re += a.real() * c.real() + a.imag() * c.imag();
            im += a.imag() * c.real() - a.real() * c.imag();
          }
          const double inv = 1.0 / static_cast<double>(kb.size());
          dst = cplx(re * inv, im * inv);
        }
      }
    }
  }
  return out;
}

}  // namespace knoweeg::spectral
