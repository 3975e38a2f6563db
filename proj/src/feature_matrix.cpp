#include "knoweeg/feature_matrix.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "knoweeg/errors.hpp"

namespace knoweeg {

std::string_view mode_tag_name(ModeTag tag) {
  return tag == ModeTag::per_electrode ? "per_electrode" : "connectivity";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_on(std::string_view text, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      return out;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::pair<std::string, std::string> split_pair(const std::string& text, const Montage* montage) {
  std::vector<std::size_t> dashes;
  for (std::size_t i = 0; i < text.size(); ++i)
    if (text[i] == '-') dashes.push_back(i);
  if (dashes.empty()) throw FormatError("pair '" + text + "' has no '-' separator");
  if (montage) {
    for (std::size_t d : dashes) {
      const auto a = text.substr(0, d), b = text.substr(d + 1);
      if (montage->index_of(a) && montage->index_of(b)) return {a, b};
    }
    throw FormatError("pair '" + text + "' does not name two montage channels");
  }
  const std::size_t d = dashes[dashes.size() / 2];
  return {text.substr(0, d), text.substr(d + 1)};
}

}  // namespace

FeatureDescriptor FeatureDescriptor::electrode(std::string channel, std::string feature_id,
                                               std::vector<std::pair<std::string, std::string>> params) {
  FeatureDescriptor d;
  d.kind = Kind::electrode;
  d.channel = std::move(channel);
  d.feature_id = std::move(feature_id);
  d.params = std::move(params);
  return d;
}

FeatureDescriptor FeatureDescriptor::pair(std::string metric, std::string band, std::string channel,
                                          std::string partner) {
  FeatureDescriptor d;
  d.kind = Kind::pair;
  d.feature_id = std::move(metric);
  d.band = std::move(band);
  d.channel = std::move(channel);
  d.partner = std::move(partner);
  return d;
}

FeatureDescriptor FeatureDescriptor::band_power(std::string band, std::string channel) {
  FeatureDescriptor d;
  d.kind = Kind::band_power;
  d.feature_id = "pow";
  d.band = std::move(band);
  d.channel = std::move(channel);
  return d;
}

std::string FeatureDescriptor::to_string() const {
  switch (kind) {
    case Kind::pair: return "con__" + feature_id + "__" + band + "__" + channel + "-" + partner;
    case Kind::band_power: return "pow__" + band + "__" + channel;
    case Kind::electrode: break;
  }
  std::string s = channel + "__" + feature_id;
  for (const auto& [k, v] : params) s += "__" + k + "_" + v;
  return s;
}

FeatureDescriptor FeatureDescriptor::parse(std::string_view text, const Montage* montage) {
  const auto tokens = split_on(text, "__");
  for (const auto& t : tokens)
    if (t.empty()) throw FormatError("descriptor '" + std::string(text) + "' has an empty field");
  if (tokens.size() < 2) throw FormatError("descriptor '" + std::string(text) + "' needs at least two fields");
  if (tokens[0] == "con") {
    if (tokens.size() != 4) throw FormatError("pair descriptor '" + std::string(text) + "' needs 4 fields");
    auto [a, b] = split_pair(tokens[3], montage);
    return pair(tokens[1], tokens[2], std::move(a), std::move(b));
  }
  if (tokens[0] == "pow") {
    if (tokens.size() != 3) throw FormatError("band-power descriptor '" + std::string(text) + "' needs 3 fields");
    return band_power(tokens[1], tokens[2]);
  }
  std::vector<std::pair<std::string, std::string>> params;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const auto pos = tokens[i].rfind('_');
    if (pos == std::string::npos || pos == 0 || pos + 1 == tokens[i].size())
      throw FormatError("parameter '" + tokens[i] + "' is not of the form name_value");
    params.emplace_back(tokens[i].substr(0, pos), tokens[i].substr(pos + 1));
  }
  return electrode(tokens[0], tokens[1], std::move(params));
}

std::vector<std::string> FeatureDescriptor::channels() const {
  if (kind == Kind::pair) return {channel, partner};
  return {channel};
}

std::vector<double> FeatureMatrix::column(std::size_t col) const {
  std::vector<double> out(n_samples);
  for (std::size_t r = 0; r < n_samples; ++r) out[r] = at(r, col);
  return out;
}

std::vector<std::string> FeatureMatrix::descriptor_strings() const {
  std::vector<std::string> out;
  out.reserve(descriptors.size());
  for (const auto& d : descriptors) out.push_back(d.to_string());
  return out;
}

std::vector<bool> FeatureMatrix::nonfinite_columns() const {
  std::vector<bool> bad(n_features(), false);
  for (std::size_t r = 0; r < n_samples; ++r) {
    const auto rw = row(r);
    for (std::size_t c = 0; c < rw.size(); ++c)
      if (!std::isfinite(rw[c])) bad[c] = true;
  }
  return bad;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
  FeatureMatrix out;
  out.mode_tag = mode_tag;
  out.n_samples = n_samples;
  out.descriptors.reserve(cols.size());
  for (std::size_t c : cols) out.descriptors.push_back(descriptors.at(c));
  out.values.resize(n_samples * cols.size());
  for (std::size_t r = 0; r < n_samples; ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) out.values[r * cols.size() + k] = at(r, cols[k]);
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.mode_tag = mode_tag;
  out.descriptors = descriptors;
  out.n_samples = rows.size();
  out.values.reserve(rows.size() * n_features());
  for (std::size_t r : rows) {
    if (r >= n_samples) throw InputError("row index out of range");
    const auto rw = row(r);
    out.values.insert(out.values.end(), rw.begin(), rw.end());
  }
  return out;
}

void FeatureMatrix::validate() const {
  if (values.size() != n_samples * n_features())
    throw FormatError("feature matrix holds " + std::to_string(values.size()) + " values, expected " +
                      std::to_string(n_samples * n_features()));
  std::set<std::string> seen;
  for (const auto& d : descriptors)
    if (!seen.insert(d.to_string()).second) throw FormatError("duplicate descriptor " + d.to_string());
}

FeatureMatrix FeatureMatrix::vstack(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.descriptors != b.descriptors) throw AlignmentError("vstack: descriptors differ");
  FeatureMatrix out = a;
  out.n_samples += b.n_samples;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  return out;
}

FeatureMatrix FeatureMatrix::hstack(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.n_samples != b.n_samples) throw AlignmentError("hstack: row counts differ");
  FeatureMatrix out;
  out.mode_tag = a.mode_tag;
  out.n_samples = a.n_samples;
  out.descriptors = a.descriptors;
  out.descriptors.insert(out.descriptors.end(), b.descriptors.begin(), b.descriptors.end());
  out.values.reserve(a.values.size() + b.values.size());
  for (std::size_t r = 0; r < a.n_samples; ++r) {
    const auto ra = a.row(r), rb = b.row(r);
    out.values.insert(out.values.end(), ra.begin(), ra.end());
    out.values.insert(out.values.end(), rb.begin(), rb.end());
  }
  out.validate();
  return out;
}

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t c = 0; c < m.n_features(); ++c) out << (c ? "," : "") << m.descriptors[c].to_string();
  out << '\n';
  for (std::size_t r = 0; r < m.n_samples; ++r) {
    for (std::size_t c = 0; c < m.n_features(); ++c) out << (c ? "," : "") << format_double(m.at(r, c));
    out << '\n';
  }
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path, const Montage* montage) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  FeatureMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!line.empty())
    for (const auto& tok : split_on(line, ",")) m.descriptors.push_back(FeatureDescriptor::parse(tok, montage));
  bool any_electrode = false;
  for (const auto& d : m.descriptors) any_electrode |= d.kind == FeatureDescriptor::Kind::electrode;
  m.mode_tag = (m.descriptors.empty() || any_electrode) ? ModeTag::per_electrode : ModeTag::connectivity;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_on(line, ",");
    if (cells.size() != m.n_features()) throw FormatError(path.string() + ": ragged row");
    for (const auto& cell : cells) {
      if (cell == "nan") {
        m.values.push_back(std::nan(""));
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw FormatError(path.string() + ": bad number '" + cell + "'");
      m.values.push_back(v);
    }
    ++m.n_samples;
  }
  m.validate();
  return m;
}

}  // namespace knoweeg
