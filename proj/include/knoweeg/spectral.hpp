#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "knoweeg/core.hpp"
#include "knoweeg/fft.hpp"

namespace knoweeg::spectral {

// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

struct WelchConfig {
  std::size_t segment_len = 0;  // 0: min(n, 2 * sample_rate)
  double overlap = 0.5;
  bool detrend = true;          // subtract each segment's mean
};

struct PsdEstimate {
  std::vector<double> freqs;               // 0 .. Nyquist, strictly increasing
  std::vector<std::vector<double>> power;  // [channel][bin], density per Hz

  double resolution() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

// Welch PSD with a Hann window, one-sided density scaling and mean
// averaging. Throws InputError on NaN/inf or a signal shorter than the
// segment (segment_len must be at least 8).
PsdEstimate welch_psd(std::span<const std::vector<double>> channels, double sample_rate,
                      const WelchConfig& cfg = {});
PsdEstimate welch_psd(std::span<const double> signal, double sample_rate, const WelchConfig& cfg = {});

using BandVector = std::array<double, kBandCount>;

struct RelativeBandPowers {
  std::vector<BandVector> values;  // per channel, sums to 1
};

// Power of one channel in each canonical band (sum of density * df over bins
// with lo <= f < hi).
BandVector band_powers(std::span<const double> freqs, std::span<const double> power);

// Band powers normalized by their 0.5-40 Hz total. Throws
// DegenerateSpectrumError when a channel has zero power there and InputError
// when the PSD does not reach 40 Hz.
RelativeBandPowers relative_band_powers(const PsdEstimate& psd);
BandVector relative_band_powers(std::span<const double> freqs, std::span<const double> power);

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct SegmentationPlan {
  double segment_duration = 0.0;  // seconds
  std::size_t n_segments = 0;
  std::size_t segment_len = 0;    // samples
};

// Segments of `segment_duration` seconds, as many as fit in n_timesteps.
SegmentationPlan make_plan(std::size_t n_timesteps, double sample_rate, double segment_duration);

// Default plan by signal duration: 2 s -> 0.25 s x 8, 5 s -> 0.5 s x 10,
// 10 s -> 0.625 s x 16. Other durations take the segment count of the
// nearest listed duration, reduced until segments hold at least 8 samples.
SegmentationPlan default_plan(std::size_t n_timesteps, double sample_rate);

// Segment stack [segment][channel][t] of one dataset sample.
struct SegmentStack {
  std::size_t n_segments = 0;
  std::size_t n_channels = 0;
  std::size_t segment_len = 0;
  std::vector<double> data;

  std::span<const double> at(std::size_t segment, std::size_t channel) const {
    return std::span<const double>(data).subspan((segment * n_channels + channel) * segment_len, segment_len);
  }
};

// Contiguous, non-overlapping, temporally ordered segments covering the
// sample prefix. Throws PlanError when the plan overruns the sample.
SegmentStack epoch_segments(const EegDataset& dataset, std::size_t sample, const SegmentationPlan& plan);

// ---------------------------------------------------------------------------
// Band-limited cross-spectra
// ---------------------------------------------------------------------------

struct CrossSpectra {
  std::size_t n_segments = 0;
  std::size_t n_channels = 0;
  std::size_t nfft = 0;
  std::vector<std::size_t> band_bins;  // FFT bins averaged per band
  std::vector<bool> empty_band;        // no bin inside the band; values are NaN
  std::vector<cplx> values;            // [segment][band][i][j]

  const cplx& at(std::size_t segment, std::size_t band, std::size_t i, std::size_t j) const {
    return values[((segment * kBandCount + band) * n_channels + i) * n_channels + j];
  }
};

// Smallest FFT length >= segment_len (segment_len itself, else powers of two
// above it) for which every canonical band holds at least one bin.
std::size_t covering_nfft(std::size_t segment_len, double sample_rate);

// Per segment and band: S_ij = mean over in-band bins of X_i conj(X_j), with
// X the Hann-windowed FFT (zero-padded to nfft; 0 means segment_len).
// Requires at least 2 segments (SegmentationError otherwise).
CrossSpectra bandlimited_cross_spectra(const SegmentStack& segments, double sample_rate, std::size_t nfft = 0);

}  // namespace knoweeg::spectral
