#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace knoweeg {

// ---------------------------------------------------------------------------
// Frequency bands
// ---------------------------------------------------------------------------

enum class Band : std::uint8_t { delta, theta, alpha, sigma, beta, gamma };

inline constexpr std::size_t kBandCount = 6;

struct BandDefinition {
  Band band;
  std::string_view name;
  double lo_hz;  // inclusive
  double hi_hz;  // exclusive
};

// delta 0.5-4, theta 4-8, alpha 8-12, sigma 12-16, beta 16-30, gamma 30-40 Hz,
// in that order. Bands are half-open [lo, hi).
const std::array<BandDefinition, kBandCount>& canonical_bands();

std::string_view band_name(Band band);
std::optional<Band> parse_band(std::string_view name);

// ---------------------------------------------------------------------------
// Montage
// ---------------------------------------------------------------------------

struct Vec2 {
  double x{0.0};
  double y{0.0};
};

struct Montage {
  std::string name;
  std::vector<std::string> channel_names;
  std::vector<Vec2> positions;                   // unit-disc scalp coordinates, +y toward the nose
  std::vector<std::vector<std::string>> regions;  // per channel; first entry is the primary region

  std::size_t channel_count() const noexcept { return channel_names.size(); }
  std::optional<std::size_t> index_of(std::string_view channel) const;

  // Throws MontageError on duplicate names, size mismatches, or positions
  // outside the unit disc.
  void validate() const;

  // Emotiv EPOC 14-channel layout with the region map used for reports.
  static Montage emotiv14();
  // TUH 16-channel bipolar montage (positions are electrode-pair midpoints).
  static Montage tuh16();
  // Channels "ch0".."ch{n-1}" on a ring, region "Unassigned".
  static Montage generic(std::size_t n_channels);
  // "emotiv14" or "tuh16"; throws MontageError otherwise.
  static Montage by_name(std::string_view name);
};

bool operator==(const Montage& a, const Montage& b);

nlohmann::json montage_to_json(const Montage& montage);
Montage montage_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class SplitTag : std::uint8_t { unsplit = 0, train = 1, val = 2, test = 3 };

std::string_view split_tag_name(SplitTag tag);

// Labeled multichannel EEG segments. Samples are stored sample-major, then
// channel, then time, as f32 microvolts. Immutable after construction.
class EegDataset {
public:
  EegDataset() = default;

  // Validates every invariant; throws LabelError / MontageError / FormatError.
  EegDataset(std::vector<float> values, std::size_t n_samples, std::size_t n_timesteps,
             std::vector<int> labels, int n_classes, double sample_rate, Montage montage,
             SplitTag split_tag = SplitTag::unsplit);

  std::size_t n_samples() const noexcept { return n_samples_; }
  std::size_t n_channels() const noexcept { return montage_.channel_count(); }
  std::size_t n_timesteps() const noexcept { return n_timesteps_; }
  int n_classes() const noexcept { return n_classes_; }
  double sample_rate() const noexcept { return sample_rate_; }
  double duration() const noexcept { return static_cast<double>(n_timesteps_) / sample_rate_; }
  const Montage& montage() const noexcept { return montage_; }
  SplitTag split_tag() const noexcept { return split_tag_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<float>& values() const noexcept { return values_; }

  std::span<const float> channel(std::size_t sample, std::size_t ch) const;
  // All channels of one sample, channel-major.
  std::span<const float> sample(std::size_t sample) const;

  EegDataset subset(std::span<const std::size_t> indices, SplitTag tag) const;

  // Concatenates two datasets with identical montage, rate and length.
  static EegDataset concat(const EegDataset& a, const EegDataset& b, SplitTag tag);

private:
  std::vector<float> values_;
  std::vector<int> labels_;
  std::size_t n_samples_ = 0;
  std::size_t n_timesteps_ = 0;
  int n_classes_ = 2;
  double sample_rate_ = 0.0;
  Montage montage_;
  SplitTag split_tag_ = SplitTag::unsplit;
};

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

enum class DatasetFormat { eegds_binary, csv_manifest };

// eegds-binary layout, all little-endian:
//   header   "EEGD" | version u32 | n_samples u32 | n_channels u32 |
//            n_timesteps u32 | sample_rate_milli_hz u32 | n_classes u32
//   samples  n_samples*n_channels*n_timesteps f32
//   labels   n_samples u16
//   trailer  "MONT" | split_tag u8 | name | per channel: name, x f64, y f64, regions
// Strings in the trailer are u16 length + UTF-8 bytes; regions are joined by '|'.
inline constexpr std::uint32_t kEegdsVersion = 1;

void save_dataset(const EegDataset& dataset, const std::filesystem::path& path);
EegDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
// Picks csv_manifest for ".json", eegds_binary otherwise.
EegDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

// Stratified index partition: per class, a seeded shuffle puts
// round(fraction * class_size) samples (clamped to [1, class_size-1]) in the
// second part. Both parts are returned sorted. Throws StratifyError when a
// class has fewer than two samples.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_partition(
    std::span<const int> labels, int n_classes, double fraction, std::uint64_t seed);

// (train, val); disjoint, exhaustive, stratified, deterministic in seed.
std::pair<EegDataset, EegDataset> split_train_val(const EegDataset& dataset, double val_fraction,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic EEG
// ---------------------------------------------------------------------------

struct BandBoost {
  int label = 0;
  std::vector<std::string> channels;  // empty: every channel
  Band band = Band::alpha;
  std::optional<double> freq_hz;      // fixed tone; otherwise drawn inside the band per sample
  double snr = 2.0;                   // mean tone power / expected background power in the band
};

struct SyntheticSpec {
  Montage montage = Montage::emotiv14();
  double sample_rate = 128.0;
  double duration_s = 2.0;
  std::size_t n_samples = 600;
  int n_classes = 2;
  double background_uv = 10.0;   // background standard deviation
  double gain_jitter = 0.2;      // sd of the per-sample log gain
  double boost_jitter = 0.75;    // tone power factor ~ U[1-j, 1+j]
  std::vector<BandBoost> boosts;

  // Eyes-closed/eyes-open stand-in: class 0 gets an alpha tone at O1/O2,
  // class 1 a gamma tone on every channel.
  static SyntheticSpec eyes_task(std::size_t n_samples = 600, double snr = 2.0);
};

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// Pink (1/f) background per channel plus the configured band tones. Labels
// cycle 0,1,..,n_classes-1. Throws SpecError for tones at or above Nyquist
// or unknown channels.
EegDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace knoweeg
