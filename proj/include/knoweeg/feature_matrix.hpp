#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knoweeg/core.hpp"

namespace knoweeg {

enum class ModeTag : std::uint8_t { per_electrode, connectivity };

std::string_view mode_tag_name(ModeTag tag);

// Identity of one feature column.
//
//   electrode:   {channel}__{feature_id}[__{param}_{value}]...
//   pair:        con__{feature_id}__{band}__{channel}-{partner}
//   band_power:  pow__{band}__{channel}
//
// For pair descriptors feature_id is the metric token (coh, pli, pearson, ...)
// and band is a canonical band name or "full" for whole-signal metrics.
struct FeatureDescriptor {
  enum class Kind : std::uint8_t { electrode, pair, band_power };

  Kind kind = Kind::electrode;
  std::string feature_id;
  std::string channel;
  std::string partner;
  std::string band;
  std::vector<std::pair<std::string, std::string>> params;

  static FeatureDescriptor electrode(std::string channel, std::string feature_id,
                                     std::vector<std::pair<std::string, std::string>> params = {});
  static FeatureDescriptor pair(std::string metric, std::string band, std::string channel, std::string partner);
  static FeatureDescriptor band_power(std::string band, std::string channel);

  std::string to_string() const;

  // Inverse of to_string(). Pair descriptors whose channel names contain '-'
  // are split using `montage` when given, else at the middle '-'.
  // Throws FormatError on malformed input.
  static FeatureDescriptor parse(std::string_view text, const Montage* montage = nullptr);

  // Channels this column is computed from (one, or two for pairs).
  std::vector<std::string> channels() const;

  bool operator==(const FeatureDescriptor&) const = default;
};

// Samples x features, row-major, with one descriptor per column.
struct FeatureMatrix {
  ModeTag mode_tag = ModeTag::per_electrode;
  std::size_t n_samples = 0;
  std::vector<double> values;
  std::vector<FeatureDescriptor> descriptors;

  std::size_t n_features() const noexcept { return descriptors.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * n_features() + col]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * n_features(), n_features());
  }
  std::vector<double> column(std::size_t col) const;
  std::vector<std::string> descriptor_strings() const;

  // Columns holding a NaN or infinity in any row.
  std::vector<bool> nonfinite_columns() const;

  FeatureMatrix select_columns(std::span<const std::size_t> cols) const;
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;

  // Throws FormatError on size mismatch or duplicate descriptors.
  void validate() const;

  // Stacks rows of matrices with identical descriptors.
  static FeatureMatrix vstack(const FeatureMatrix& a, const FeatureMatrix& b);
  // Joins columns of matrices with equal row counts.
  static FeatureMatrix hstack(const FeatureMatrix& a, const FeatureMatrix& b);
};

// CSV: a header row of descriptor strings, then one row per sample. Values
// are written with round-trip precision; NaN as "nan".
void write_feature_csv(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix read_feature_csv(const std::filesystem::path& path, const Montage* montage = nullptr);

std::string format_double(double v);

}  // namespace knoweeg
