#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knoweeg/core.hpp"
#include "knoweeg/feature_matrix.hpp"
#include "knoweeg/spectral.hpp"

namespace knoweeg::features {

// ---------------------------------------------------------------------------
// Individual features. Each returns NaN where the feature is undefined for
// the input (too short, zero variance where a ratio needs it).
// ---------------------------------------------------------------------------

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population
double standard_deviation(std::span<const double> x);
double skewness(std::span<const double> x);  // adjusted Fisher-Pearson; 0 for constant input
double kurtosis(std::span<const double> x);  // adjusted excess; 0 for constant input
// Linear interpolation between order statistics.
double quantile(std::span<const double> sorted, double q);
double root_mean_square(std::span<const double> x);
double abs_energy(std::span<const double> x);

double autocorrelation(std::span<const double> x, std::size_t lag);
// Durbin-Levinson on the sample autocorrelations; lag 0 gives 1.
double partial_autocorrelation(std::span<const double> x, std::size_t lag);
double mean_abs_change(std::span<const double> x);
double mean_change(std::span<const double> x);
double mean_second_derivative_central(std::span<const double> x);
double absolute_sum_of_changes(std::span<const double> x);

enum class Aggregate { mean, var };
// Aggregate of consecutive differences (absolute when `absolute`) whose two
// endpoints both lie in the corridor [Q(lower_q), Q(upper_q)]. 0 when no
// difference qualifies.
double change_quantiles(std::span<const double> x, double lower_q, double upper_q, bool absolute,
                        Aggregate agg = Aggregate::mean);

// Count of i with x[i] strictly above every value within `support` on both
// sides, both neighborhoods fully in range.
std::size_t number_peaks(std::span<const double> x, std::size_t support);

std::size_t count_above_mean(std::span<const double> x);
std::size_t count_below_mean(std::span<const double> x);
std::size_t longest_strike_above_mean(std::span<const double> x);
std::size_t longest_strike_below_mean(std::span<const double> x);

// Shannon entropy (natural log) of ordinal patterns of `dimension` values
// spaced `tau` apart. Ties are ranked by position. Range [0, ln(dimension!)].
// Throws LengthError when len(x) < (dimension-1)*tau + 1 and InputError for
// dimension outside [2, 7] or tau == 0.
double permutation_entropy(std::span<const double> x, std::size_t dimension, std::size_t tau);

double binned_entropy(std::span<const double> x, std::size_t max_bins);
double lempel_ziv_complexity(std::span<const double> x, std::size_t bins);
double cid_ce(std::span<const double> x, bool normalize);

enum class FftAggregate { centroid, variance, skew, kurtosis };
// Moments of |rfft(x)| treated as a distribution over bin index.
double fft_aggregated(std::span<const double> x, FftAggregate agg);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

// Everything a feature may need about one channel, computed once.
struct ChannelContext {
  std::vector<double> x;
  std::vector<double> sorted;
  double sample_rate = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  bool has_psd = false;
  spectral::PsdEstimate psd;  // one channel; valid when has_psd

  ChannelContext(std::span<const float> samples, double sample_rate);
  ChannelContext(std::span<const double> samples, double sample_rate);

private:
  void prepare();
};

struct FeatureSpec {
  std::string feature_id;
  std::vector<std::pair<std::string, std::string>> params;
  std::function<double(const ChannelContext&)> compute;
};

class FeatureRegistry {
public:
  FeatureRegistry() = default;
  explicit FeatureRegistry(std::vector<FeatureSpec> specs) : specs_(std::move(specs)) {}

  // The built-in catalog: distributional, temporal, complexity and spectral
  // features (72 entries).
  static FeatureRegistry default_registry();

  // Entries of this registry whose feature_id is listed, in registry order.
  // Throws InputError for unknown ids.
  FeatureRegistry select(std::span<const std::string> feature_ids) const;

  void add(FeatureSpec spec) { specs_.push_back(std::move(spec)); }

  std::size_t size() const noexcept { return specs_.size(); }
  bool empty() const noexcept { return specs_.empty(); }
  const std::vector<FeatureSpec>& specs() const noexcept { return specs_; }

private:
  std::vector<FeatureSpec> specs_;
};

// Per-electrode feature matrix: columns ordered channel-major, then registry
// order. Features undefined for a sample yield NaN in that cell (the filter
// drops such columns). Output is independent of the worker count.
FeatureMatrix extract_features(const EegDataset& dataset, const FeatureRegistry& registry,
                               std::size_t threads = 0);

}  // namespace knoweeg::features
