#include "knoweeg/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "knoweeg/errors.hpp"
#include "knoweeg/fft.hpp"
#include "knoweeg/rng.hpp"

namespace knoweeg {

// ---------------------------------------------------------------------------
// Bands
// ---------------------------------------------------------------------------

const std::array<BandDefinition, kBandCount>& canonical_bands() {
  static const std::array<BandDefinition, kBandCount> bands{{
      {Band::delta, "delta", 0.5, 4.0},
      {Band::theta, "theta", 4.0, 8.0},
      {Band::alpha, "alpha", 8.0, 12.0},
      {Band::sigma, "sigma", 12.0, 16.0},
      {Band::beta, "beta", 16.0, 30.0},
      {Band::gamma, "gamma", 30.0, 40.0},
  }};
  return bands;
}

std::string_view band_name(Band band) { return canonical_bands()[static_cast<std::size_t>(band)].name; }

std::optional<Band> parse_band(std::string_view name) {
  for (const auto& b : canonical_bands())
    if (b.name == name) return b.band;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Montage
// ---------------------------------------------------------------------------

std::optional<std::size_t> Montage::index_of(std::string_view channel) const {
  for (std::size_t i = 0; i < channel_names.size(); ++i)
    if (channel_names[i] == channel) return i;
  return std::nullopt;
}

void Montage::validate() const {
  if (channel_names.empty()) throw MontageError("montage has no channels");
  if (positions.size() != channel_names.size() || regions.size() != channel_names.size())
    throw MontageError("montage '" + name + "': positions/regions do not match channel count");
  std::set<std::string> seen;
  for (const auto& c : channel_names) {
    if (c.empty()) throw MontageError("montage '" + name + "': empty channel name");
    if (c.find("__") != std::string::npos)
      throw MontageError("channel name '" + c + "' contains the descriptor separator '__'");
    if (!seen.insert(c).second) throw MontageError("montage '" + name + "': duplicate channel " + c);
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    if (!(p.x * p.x + p.y * p.y <= 1.0 + 1e-12))
      throw MontageError("channel " + channel_names[i] + " lies outside the unit disc");
  }
}

Montage Montage::emotiv14() {
  Montage m;
  m.name = "emotiv14";
  m.channel_names = {"AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
                     "O2",  "P8", "T8", "FC6", "F4", "F8", "AF4"};
  m.positions = {{-0.29, 0.78}, {-0.68, 0.52}, {-0.38, 0.50}, {-0.62, 0.24}, {-0.84, 0.00},
                 {-0.68, -0.52}, {-0.29, -0.80}, {0.29, -0.80}, {0.68, -0.52}, {0.84, 0.00},
                 {0.62, 0.24},  {0.38, 0.50},  {0.68, 0.52},  {0.29, 0.78}};
  m.regions = {{"Left Frontal"},
               {"Left Frontal"},
               {"Left Frontal"},
               {"Left Frontal", "Left Central"},
               {"Left Temporal"},
               {"Parietal"},
               {"Occipital"},
               {"Occipital"},
               {"Parietal"},
               {"Right Temporal"},
               {"Right Frontal", "Right Central"},
               {"Right Frontal"},
               {"Right Frontal"},
               {"Right Frontal"}};
  return m;
}

Montage Montage::tuh16() {
  struct Electrode {
    const char* name;
    Vec2 pos;
  };
  static const Electrode electrodes[] = {
      {"FP1", {-0.29, 0.88}}, {"FP2", {0.29, 0.88}},  {"F7", {-0.68, 0.52}}, {"F8", {0.68, 0.52}},
      {"T7", {-0.84, 0.00}},  {"T8", {0.84, 0.00}},   {"P7", {-0.68, -0.52}}, {"P8", {0.68, -0.52}},
      {"O1", {-0.29, -0.84}}, {"O2", {0.29, -0.84}},  {"F3", {-0.38, 0.50}}, {"F4", {0.38, 0.50}},
      {"C3", {-0.42, 0.00}},  {"C4", {0.42, 0.00}},   {"P3", {-0.38, -0.50}}, {"P4", {0.38, -0.50}},
  };
  auto pos = [](std::string_view e) {
    for (const auto& el : electrodes)
      if (e == el.name) return el.pos;
    throw MontageError("unknown electrode");
  };
  struct Pair {
    const char* a;
    const char* b;
    const char* region;
  };
  static const Pair pairs[] = {
      {"FP1", "F7", "Left Frontal"},  {"F7", "T7", "Left Temporal"},  {"T7", "P7", "Left Temporal"},
      {"P7", "O1", "Occipital"},      {"FP2", "F8", "Right Frontal"}, {"F8", "T8", "Right Temporal"},
      {"T8", "P8", "Right Temporal"}, {"P8", "O2", "Occipital"},      {"FP1", "F3", "Left Frontal"},
      {"F3", "C3", "Left Central"},   {"C3", "P3", "Parietal"},       {"P3", "O1", "Occipital"},
      {"FP2", "F4", "Right Frontal"}, {"F4", "C4", "Right Central"},  {"C4", "P4", "Parietal"},
      {"P4", "O2", "Occipital"},
  };
  Montage m;
  m.name = "tuh16";
  for (const auto& p : pairs) {
    m.channel_names.push_back(std::string(p.a) + "-" + p.b);
    const Vec2 a = pos(p.a), b = pos(p.b);
    m.positions.push_back({(a.x + b.x) / 2.0, (a.y + b.y) / 2.0});
    m.regions.push_back({p.region});
  }
  return m;
}

Montage Montage::generic(std::size_t n_channels) {
  Montage m;
  m.name = "generic" + std::to_string(n_channels);
  for (std::size_t i = 0; i < n_channels; ++i) {
    m.channel_names.push_back("ch" + std::to_string(i));
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n_channels, 1));
    m.positions.push_back({0.8 * std::sin(a), 0.8 * std::cos(a)});
    m.regions.push_back({"Unassigned"});
  }
  return m;
}

Montage Montage::by_name(std::string_view name) {
  if (name == "emotiv14") return emotiv14();
  if (name == "tuh16") return tuh16();
  throw MontageError("unknown montage name '" + std::string(name) + "'");
}

bool operator==(const Montage& a, const Montage& b) {
  if (a.name != b.name || a.channel_names != b.channel_names || a.regions != b.regions) return false;
  if (a.positions.size() != b.positions.size()) return false;
  for (std::size_t i = 0; i < a.positions.size(); ++i)
    if (a.positions[i].x != b.positions[i].x || a.positions[i].y != b.positions[i].y) return false;
  return true;
}

nlohmann::json montage_to_json(const Montage& m) {
  nlohmann::json channels = nlohmann::json::array();
  for (std::size_t i = 0; i < m.channel_count(); ++i)
    channels.push_back({{"name", m.channel_names[i]},
                        {"x", m.positions[i].x},
                        {"y", m.positions[i].y},
                        {"regions", m.regions[i]}});
  return {{"name", m.name}, {"channels", channels}};
}

Montage montage_from_json(const nlohmann::json& j) {
  if (j.is_string()) return Montage::by_name(j.get<std::string>());
  Montage m;
  try {
    m.name = j.value("name", std::string("inline"));
    for (const auto& c : j.at("channels")) {
      m.channel_names.push_back(c.at("name").get<std::string>());
      m.positions.push_back({c.value("x", 0.0), c.value("y", 0.0)});
      m.regions.push_back(c.value("regions", std::vector<std::string>{"Unassigned"}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("montage JSON: ") + e.what());
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

std::string_view split_tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::unsplit: break;
  }
  return "unsplit";
}

EegDataset::EegDataset(std::vector<float> values, std::size_t n_samples, std::size_t n_timesteps,
                       std::vector<int> labels, int n_classes, double sample_rate, Montage montage,
                       SplitTag split_tag)
    : values_(std::move(values)),
      labels_(std::move(labels)),
      n_samples_(n_samples),
      n_timesteps_(n_timesteps),
      n_classes_(n_classes),
      sample_rate_(sample_rate),
      montage_(std::move(montage)),
      split_tag_(split_tag) {
  montage_.validate();
  if (n_classes_ < 2) throw LabelError("n_classes must be at least 2");
  if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_)) throw FormatError("sample_rate must be positive");
  if (n_timesteps_ == 0) throw FormatError("n_timesteps must be positive");
  if (labels_.size() != n_samples_) throw FormatError("label count does not match sample count");
  if (values_.size() != n_samples_ * montage_.channel_count() * n_timesteps_)
    throw FormatError("value block does not match n_samples x n_channels x n_timesteps");
  for (int y : labels_)
    if (y < 0 || y >= n_classes_)
      throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes_) + ")");
}

std::span<const float> EegDataset::channel(std::size_t s, std::size_t ch) const {
  return std::span<const float>(values_).subspan((s * n_channels() + ch) * n_timesteps_, n_timesteps_);
}

std::span<const float> EegDataset::sample(std::size_t s) const {
  const std::size_t block = n_channels() * n_timesteps_;
  return std::span<const float>(values_).subspan(s * block, block);
}

EegDataset EegDataset::subset(std::span<const std::size_t> indices, SplitTag tag) const {
  const std::size_t block = n_channels() * n_timesteps_;
  std::vector<float> values;
  values.reserve(indices.size() * block);
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= n_samples_) throw InputError("subset index out of range");
    const auto s = sample(i);
    values.insert(values.end(), s.begin(), s.end());
    labels.push_back(labels_[i]);
  }
  return EegDataset(std::move(values), indices.size(), n_timesteps_, std::move(labels), n_classes_,
                    sample_rate_, montage_, tag);
}

EegDataset EegDataset::concat(const EegDataset& a, const EegDataset& b, SplitTag tag) {
  if (!(a.montage_ == b.montage_)) throw MontageError("concat: montages differ");
  if (a.sample_rate_ != b.sample_rate_ || a.n_timesteps_ != b.n_timesteps_)
    throw FormatError("concat: sample rate or length differ");
  std::vector<float> values = a.values_;
  values.insert(values.end(), b.values_.begin(), b.values_.end());
  std::vector<int> labels = a.labels_;
  labels.insert(labels.end(), b.labels_.begin(), b.labels_.end());
  return EegDataset(std::move(values), a.n_samples_ + b.n_samples_, a.n_timesteps_, std::move(labels),
                    std::max(a.n_classes_, b.n_classes_), a.sample_rate_, a.montage_, tag);
}

// ---------------------------------------------------------------------------
// eegds-binary
// ---------------------------------------------------------------------------

namespace {

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    u32(static_cast<std::uint32_t>(bits));
    u32(static_cast<std::uint32_t>(bits >> 32));
  }
  void raw(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    if (s.size() > 0xFFFF) throw FormatError("string too long for eegds trailer");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }
  const std::string& bytes() const { return buf_; }

private:
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(u16()); }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("eegds: truncated file");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

EegDataset load_binary(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  if (r.raw(4) != "EEGD") throw FormatError(path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kEegdsVersion) throw FormatError("unsupported eegds version " + std::to_string(version));
  const std::uint64_t n_samples = r.u32();
  const std::uint64_t n_channels = r.u32();
  const std::uint64_t n_timesteps = r.u32();
  const std::uint32_t rate_milli = r.u32();
  const std::uint32_t n_classes = r.u32();
  if (n_channels == 0 || n_timesteps == 0 || rate_milli == 0)
    throw FormatError(path.string() + ": zero-sized header field");
  const std::uint64_t n_values = n_samples * n_channels * n_timesteps;
  if (r.remaining() < n_values * 4 + n_samples * 2) throw FormatError(path.string() + ": truncated data block");

  std::vector<float> values(n_values);
  for (auto& v : values) v = r.f32();
  std::vector<int> labels(n_samples);
  for (auto& y : labels) y = r.u16();

  Montage montage;
  SplitTag tag = SplitTag::unsplit;
  if (r.remaining() > 0) {
    if (r.raw(4) != "MONT") throw FormatError(path.string() + ": bad trailer tag");
    const std::uint8_t t = r.u8();
    if (t > 3) throw FormatError("bad split tag");
    tag = static_cast<SplitTag>(t);
    montage.name = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      montage.channel_names.push_back(r.str());
      const double x = r.f64();
      const double y = r.f64();
      montage.positions.push_back({x, y});
      montage.regions.push_back(split_string(r.str(), '|'));
    }
  } else if (n_channels == 14) {
    montage = Montage::emotiv14();
  } else if (n_channels == 16) {
    montage = Montage::tuh16();
  } else {
    montage = Montage::generic(n_channels);
  }
  if (montage.channel_count() != n_channels)
    throw MontageError(path.string() + ": header declares " + std::to_string(n_channels) +
                       " channels but montage has " + std::to_string(montage.channel_count()));
  return EegDataset(std::move(values), n_samples, n_timesteps, std::move(labels), static_cast<int>(n_classes),
                    rate_milli / 1000.0, std::move(montage), tag);
}

EegDataset load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.contains("sample_rate") || !j.contains("samples") || !j.contains("montage"))
    throw FormatError(path.string() + ": manifest needs sample_rate, montage and samples");
  const double rate = j.at("sample_rate").get<double>();
  Montage montage = montage_from_json(j.at("montage"));
  const auto base = path.parent_path();

  std::optional<std::size_t> expected_len;
  if (j.contains("duration")) expected_len = static_cast<std::size_t>(std::llround(j.at("duration").get<double>() * rate));

  std::vector<float> values;
  std::vector<int> labels;
  std::size_t n_timesteps = 0;
  int max_label = -1;
  for (const auto& entry : j.at("samples")) {
    const auto csv_path = base / entry.at("path").get<std::string>();
    const int label = entry.at("label").get<int>();
    if (label < 0) throw LabelError("negative label in manifest");
    max_label = std::max(max_label, label);

    std::ifstream in(csv_path);
    if (!in) throw FormatError("cannot open " + csv_path.string());
    std::string header;
    std::getline(in, header);
    std::vector<std::string> cols;
    for (auto& c : split_string(trim(header), ',')) cols.push_back(trim(c));
    in.close();
    if (cols.size() != montage.channel_count())
      throw MontageError(csv_path.string() + ": " + std::to_string(cols.size()) + " columns but montage has " +
                         std::to_string(montage.channel_count()) + " channels");
    std::vector<std::size_t> col_of(montage.channel_count());
    for (std::size_t ch = 0; ch < montage.channel_count(); ++ch) {
      const auto it = std::find(cols.begin(), cols.end(), montage.channel_names[ch]);
      if (it == cols.end()) throw MontageError(csv_path.string() + ": missing channel " + montage.channel_names[ch]);
      col_of[ch] = static_cast<std::size_t>(it - cols.begin());
    }

    // Re-read data rows, skipping the header.
    std::ifstream data(csv_path);
    std::string skip;
    std::getline(data, skip);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(data, line)) {
      line = trim(line);
      if (line.empty()) continue;
      std::vector<double> row;
      for (const auto& cell : split_string(line, ',')) {
        const std::string c = trim(cell);
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(c, &used);
        } catch (...) {
          used = 0;
        }
        if (used != c.size() || c.empty()) throw FormatError(csv_path.string() + ": non-numeric cell '" + c + "'");
        row.push_back(v);
      }
      if (row.size() != cols.size()) throw FormatError(csv_path.string() + ": ragged row");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(csv_path.string() + ": no data rows");
    if (n_timesteps == 0) n_timesteps = rows.size();
    if (rows.size() != n_timesteps) throw FormatError(csv_path.string() + ": sample length differs from others");
    if (expected_len && rows.size() != *expected_len)
      throw FormatError(csv_path.string() + ": " + std::to_string(rows.size()) + " rows but duration implies " +
                        std::to_string(*expected_len));
    for (std::size_t ch = 0; ch < montage.channel_count(); ++ch)
      for (const auto& row : rows) values.push_back(static_cast<float>(row[col_of[ch]]));
    labels.push_back(label);
  }
  if (labels.empty()) throw FormatError(path.string() + ": manifest lists no samples");
  const int n_classes = j.contains("n_classes") ? j.at("n_classes").get<int>() : std::max(2, max_label + 1);
  const std::size_t n_samples = labels.size();
  return EegDataset(std::move(values), n_samples, n_timesteps, std::move(labels), n_classes, rate,
                    std::move(montage), SplitTag::unsplit);
}

}  // namespace

void save_dataset(const EegDataset& d, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw("EEGD");
  w.u32(kEegdsVersion);
  w.u32(static_cast<std::uint32_t>(d.n_samples()));
  w.u32(static_cast<std::uint32_t>(d.n_channels()));
  w.u32(static_cast<std::uint32_t>(d.n_timesteps()));
  w.u32(static_cast<std::uint32_t>(std::llround(d.sample_rate() * 1000.0)));
  w.u32(static_cast<std::uint32_t>(d.n_classes()));
  for (float v : d.values()) w.f32(v);
  for (int y : d.labels()) w.u16(static_cast<std::uint16_t>(y));
  w.raw("MONT");
  w.u8(static_cast<std::uint8_t>(d.split_tag()));
  const auto& m = d.montage();
  w.str(m.name);
  w.u32(static_cast<std::uint32_t>(m.channel_count()));
  for (std::size_t i = 0; i < m.channel_count(); ++i) {
    w.str(m.channel_names[i]);
    w.f64(m.positions[i].x);
    w.f64(m.positions[i].y);
    w.str(join(m.regions[i], '|'));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

EegDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  if (!std::filesystem::exists(path)) throw FormatError("no such file: " + path.string());
  return format == DatasetFormat::eegds_binary ? load_binary(path) : load_manifest(path);
}

EegDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, path.extension() == ".json" ? DatasetFormat::csv_manifest : DatasetFormat::eegds_binary);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_partition(
    std::span<const int> labels, int n_classes, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw StratifyError("split fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);

  std::vector<std::size_t> first, second;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) throw StratifyError("class " + std::to_string(c) + " has fewer than 2 samples");
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    second.insert(second.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    first.insert(first.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

std::pair<EegDataset, EegDataset> split_train_val(const EegDataset& dataset, double val_fraction,
                                                  std::uint64_t seed) {
  auto [train_idx, val_idx] = stratified_partition(dataset.labels(), dataset.n_classes(), val_fraction, seed);
  return {dataset.subset(train_idx, SplitTag::train), dataset.subset(val_idx, SplitTag::val)};
}

// ---------------------------------------------------------------------------
// Synthetic EEG
// ---------------------------------------------------------------------------

SyntheticSpec SyntheticSpec::eyes_task(std::size_t n_samples, double snr) {
  SyntheticSpec s;
  s.n_samples = n_samples;
  s.boosts = {BandBoost{0, {"O1", "O2"}, Band::alpha, std::nullopt, snr},
              BandBoost{1, {}, Band::gamma, std::nullopt, snr}};
  return s;
}

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  nlohmann::json boosts = nlohmann::json::array();
  for (const auto& b : s.boosts) {
    nlohmann::json jb{{"label", b.label}, {"channels", b.channels}, {"band", band_name(b.band)}, {"snr", b.snr}};
    if (b.freq_hz) jb["freq_hz"] = *b.freq_hz;
    boosts.push_back(jb);
  }
  return {{"montage", montage_to_json(s.montage)}, {"sample_rate", s.sample_rate}, {"duration_s", s.duration_s},
          {"n_samples", s.n_samples}, {"n_classes", s.n_classes}, {"background_uv", s.background_uv},
          {"gain_jitter", s.gain_jitter}, {"boost_jitter", s.boost_jitter}, {"boosts", boosts}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    if (j.contains("preset")) {
      const auto preset = j.at("preset").get<std::string>();
      if (preset != "eyes") throw SpecError("unknown synthetic preset '" + preset + "'");
      s = SyntheticSpec::eyes_task(j.value("n_samples", std::size_t{600}), j.value("snr", 2.0));
    }
    if (j.contains("montage")) s.montage = montage_from_json(j.at("montage"));
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.n_samples = j.value("n_samples", s.n_samples);
    s.n_classes = j.value("n_classes", s.n_classes);
    s.background_uv = j.value("background_uv", s.background_uv);
    s.gain_jitter = j.value("gain_jitter", s.gain_jitter);
    s.boost_jitter = j.value("boost_jitter", s.boost_jitter);
    if (j.contains("boosts")) {
      s.boosts.clear();
      for (const auto& jb : j.at("boosts")) {
        BandBoost b;
        b.label = jb.at("label").get<int>();
        b.channels = jb.value("channels", std::vector<std::string>{});
        const auto band = parse_band(jb.at("band").get<std::string>());
        if (!band) throw SpecError("unknown band '" + jb.at("band").get<std::string>() + "'");
        b.band = *band;
        if (jb.contains("freq_hz")) b.freq_hz = jb.at("freq_hz").get<double>();
        b.snr = jb.value("snr", 2.0);
        s.boosts.push_back(std::move(b));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

EegDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.montage.validate();
  if (spec.n_classes < 2) throw SpecError("n_classes must be at least 2");
  if (!(spec.sample_rate > 0.0) || !(spec.duration_s > 0.0)) throw SpecError("rate and duration must be positive");
  if (spec.gain_jitter < 0.0 || spec.boost_jitter < 0.0 || spec.boost_jitter >= 1.0)
    throw SpecError("jitter parameters out of range");
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  if (n < 8) throw SpecError("synthetic samples need at least 8 timesteps");
  const std::size_t n_ch = spec.montage.channel_count();
  const double nyquist = spec.sample_rate / 2.0;

  // Per-bin background variance shares of the 1/f spectrum at this length.
  const std::size_t n_bins = n / 2 + 1;
  std::vector<double> bin_share(n_bins, 0.0);
  double total = 0.0;
  for (std::size_t k = 1; k < n_bins; ++k) {
    const double f = static_cast<double>(k) * spec.sample_rate / static_cast<double>(n);
    const bool nyq = (n % 2 == 0) && k == n / 2;
    bin_share[k] = (nyq ? 1.0 : 2.0) / f;
    total += bin_share[k];
  }
  for (auto& v : bin_share) v /= total;
  const double bg_var = spec.background_uv * spec.background_uv;

  struct ResolvedBoost {
    std::vector<bool> on_channel;
    double lo, hi;
    std::optional<double> freq;
    double tone_power;  // mean tone power before jitter
  };
  std::vector<std::vector<ResolvedBoost>> per_class(static_cast<std::size_t>(spec.n_classes));
  for (const auto& b : spec.boosts) {
    if (b.label < 0 || b.label >= spec.n_classes) throw SpecError("boost label out of range");
    if (b.snr < 0.0) throw SpecError("boost snr must be nonnegative");
    const auto& def = canonical_bands()[static_cast<std::size_t>(b.band)];
    ResolvedBoost r;
    r.on_channel.assign(n_ch, b.channels.empty());
    for (const auto& c : b.channels) {
      const auto idx = spec.montage.index_of(c);
      if (!idx) throw SpecError("boost channel '" + c + "' not in montage");
      r.on_channel[*idx] = true;
    }
    const double w = def.hi_hz - def.lo_hz;
    r.lo = def.lo_hz + 0.15 * w;
    r.hi = def.hi_hz - 0.15 * w;
    r.freq = b.freq_hz;
    const double top = b.freq_hz ? *b.freq_hz : r.hi;
    if (top >= nyquist) throw SpecError("boost frequency " + std::to_string(top) + " Hz at or above Nyquist");
    if (b.freq_hz && *b.freq_hz <= 0.0) throw SpecError("boost frequency must be positive");
    double band_share = 0.0;
    for (std::size_t k = 1; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * spec.sample_rate / static_cast<double>(n);
      if (f >= def.lo_hz && f < def.hi_hz) band_share += bin_share[k];
    }
    r.tone_power = b.snr * bg_var * band_share;
    per_class[static_cast<std::size_t>(b.label)].push_back(std::move(r));
  }

  std::vector<float> values(spec.n_samples * n_ch * n);
  std::vector<int> labels(spec.n_samples);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    const int label = static_cast<int>(s % static_cast<std::size_t>(spec.n_classes));
    labels[s] = label;
    Rng rng(derive_seed(seed, s));
    const double gain = std::exp(spec.gain_jitter * rng.normal());
    for (std::size_t ch = 0; ch < n_ch; ++ch) {
      std::vector<spectral::cplx> half(n_bins);
      for (std::size_t k = 1; k < n_bins; ++k) {
        const bool nyq = (n % 2 == 0) && k == n / 2;
        // E|X_k|^2 chosen so that bin k carries bin_share[k] of the variance.
        const double mag2 = bin_share[k] * bg_var * static_cast<double>(n) * static_cast<double>(n) / (nyq ? 1.0 : 2.0);
        if (nyq) {
          half[k] = {std::sqrt(mag2) * rng.normal(), 0.0};
        } else {
          const double sd = std::sqrt(mag2 / 2.0);
          half[k] = {sd * rng.normal(), sd * rng.normal()};
        }
      }
      std::vector<double> x = spectral::irfft(half, n);
      for (const auto& b : per_class[static_cast<std::size_t>(label)]) {
        if (!b.on_channel[ch]) continue;
        const double f = b.freq ? *b.freq : rng.uniform(b.lo, b.hi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double power = b.tone_power * rng.uniform(1.0 - spec.boost_jitter, 1.0 + spec.boost_jitter);
        const double amp = std::sqrt(2.0 * power);
        for (std::size_t t = 0; t < n; ++t)
          x[t] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / spec.sample_rate + phase);
      }
      float* dst = values.data() + (s * n_ch + ch) * n;
      for (std::size_t t = 0; t < n; ++t) dst[t] = static_cast<float>(gain * x[t]);
    }
  }
  return EegDataset(std::move(values), spec.n_samples, n, std::move(labels), spec.n_classes, spec.sample_rate,
                    spec.montage, SplitTag::unsplit);
}

}  // namespace knoweeg
