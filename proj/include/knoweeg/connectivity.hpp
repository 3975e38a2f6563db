#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knoweeg/core.hpp"
#include "knoweeg/feature_matrix.hpp"
#include "knoweeg/spectral.hpp"

namespace knoweeg::connectivity {

enum class Metric : std::uint8_t { correlation, fpc, coh, imcoh, ppc, plv, pli, dpli, wpli };
inline constexpr std::size_t kMetricCount = 9;

// Canonical order: correlation, fpc, coh, imcoh, ppc, plv, pli, dpli, wpli.
const std::array<Metric, kMetricCount>& all_metrics();
std::string_view metric_name(Metric metric);
std::optional<Metric> parse_metric(std::string_view name);
bool is_spectral(Metric metric);

// Floor applied to relative band power before taking logs.
inline constexpr double kFpcFloor = 1e-12;

struct ConnectivitySet {
  Metric metric = Metric::correlation;
  FeatureMatrix matrix;                  // mode_tag == connectivity
  std::vector<bool> low_resolution;      // per band; empty for correlation
  std::vector<std::string> flags;        // constant channels, floored powers, ...
};

// Column layout of each metric for a montage.
//   correlation: 91 pearson then 91 spearman pairs (14 channels)
//   fpc:         6 x n_ch pow__ columns (band-major), then 6 x pairs con__fpc__
//   spectral:    6 x pairs, band-major, pairs i<j in montage order
std::vector<FeatureDescriptor> metric_descriptors(Metric metric, const Montage& montage);

// ---------------------------------------------------------------------------
// Single-sample building blocks
// ---------------------------------------------------------------------------

// Both return 0 when either input is constant.
double pearson_correlation(std::span<const double> x, std::span<const double> y);
double spearman_correlation(std::span<const double> x, std::span<const double> y);

// One row of each metric for channel-major sample data ([ch][t]).
// Notes about degenerate inputs are appended to `flags` when given.
std::vector<double> correlation_row(std::span<const std::vector<double>> channels,
                                    std::vector<std::string>* flags = nullptr);
std::vector<double> fpc_row(std::span<const std::vector<double>> channels, double sample_rate,
                            std::vector<std::string>* flags = nullptr);

// The seven phase/coherence metrics from one sample's cross-spectra. With n
// segments and per-segment band values S_xy:
//   coh   |<S_xy>| / sqrt(<S_xx><S_yy>)       imcoh  Im<S_xy> / sqrt(<S_xx><S_yy>)
//   plv   |<e^{i arg S_xy}>|                    ppc    max(0, (|sum e^{i arg}|^2 - n) / (n(n-1)))
//   pli   |<sign Im S_xy>|                      dpli   <H(Im S_xy)>, H(0) = 1/2
//   wpli  |<Im S_xy>| / <|Im S_xy|>, 0 when the denominator is 0
// Empty bands yield NaN.
std::vector<double> spectral_row(const spectral::CrossSpectra& cs, Metric metric);

// Unclamped pairwise phase consistency for one pair and band.
double ppc_unclamped(const spectral::CrossSpectra& cs, std::size_t band, std::size_t i, std::size_t j);

// ---------------------------------------------------------------------------
// Dataset level
// ---------------------------------------------------------------------------

// Bands with no FFT bin at the plan's native resolution.
std::vector<bool> low_resolution_bands(const spectral::SegmentationPlan& plan, double sample_rate);

ConnectivitySet correlation_features(const EegDataset& dataset, std::size_t threads = 0);
ConnectivitySet fpc_features(const EegDataset& dataset, std::size_t threads = 0);
ConnectivitySet spectral_metric(const EegDataset& dataset, Metric metric, const spectral::SegmentationPlan& plan,
                                std::size_t threads = 0);

struct CandidateOutcome {
  Metric metric = Metric::correlation;
  std::optional<ConnectivitySet> set;
  std::string error_kind;  // empty on success
  std::string error_message;
};

// Computes the requested metrics (cross-spectra once per sample for all
// spectral ones). A failing metric is reported in its outcome instead of
// aborting the others. Output follows the requested order.
std::vector<CandidateOutcome> try_compute_candidates(const EegDataset& dataset, std::span<const Metric> metrics,
                                                     const spectral::SegmentationPlan& plan, std::size_t threads = 0);

// All nine metrics in canonical order. Throws the first failure with the
// metric named in the message. Empty dataset -> InputError.
std::vector<ConnectivitySet> compute_all_candidates(const EegDataset& dataset, const spectral::SegmentationPlan& plan,
                                                    std::size_t threads = 0);

}  // namespace knoweeg::connectivity
