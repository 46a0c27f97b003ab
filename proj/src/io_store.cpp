#include "framec/io_store.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "framec/errors.hpp"

namespace framec {

using nlohmann::json;
namespace fs = std::filesystem;

ClassLabel label_from_int(int v) {
  if (v == 0) return ClassLabel::A;
  if (v == 1) return ClassLabel::B;
  throw FormatError("class label must be 0 or 1, got " + std::to_string(v));
}

namespace io {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

json meta_to_json(const RecordingMeta& m) {
  json j;
  j["recording_id"] = m.recording_id;
  j["well_id"] = m.well_id;
  j["class_label"] = to_int(m.class_label);
  j["sampling_rate_hz"] = m.sampling_rate_hz;
  j["n_channels"] = m.n_channels;
  j["n_samples"] = m.n_samples;
  j["duration_s"] = m.duration_s;
  j["maturation_day"] = m.maturation_day ? json(*m.maturation_day) : json(nullptr);
  j["units"] = m.units;
  return j;
}

RecordingMeta meta_from_json(const json& j) {
  RecordingMeta m;
  try {
    m.recording_id = j.at("recording_id").get<std::string>();
    m.well_id = j.at("well_id").get<std::string>();
    m.class_label = label_from_int(j.at("class_label").get<int>());
    m.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
    m.n_channels = j.at("n_channels").get<int>();
    m.n_samples = j.at("n_samples").get<std::int64_t>();
    m.duration_s = j.at("duration_s").get<double>();
    if (j.contains("maturation_day") && !j["maturation_day"].is_null())
      m.maturation_day = j["maturation_day"].get<int>();
    m.units = j.value("units", std::string("microvolt"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace

char well_row(const std::string& well_id) {
  if (well_id.empty()) throw FormatError("empty well id");
  const char r = well_id.front();
  if (r < 'A' || r > 'F') throw FormatError("well row must be A..F: '" + well_id + "'");
  return r;
}

void RecordingMeta::validate() const {
  if (recording_id.empty()) throw FormatError("recording_id is empty");
  well_row(well_id);
  if (!(sampling_rate_hz > 0.0) || !std::isfinite(sampling_rate_hz))
    throw FormatError("sampling_rate_hz must be positive");
  if (n_channels <= 0) throw FormatError("n_channels must be positive");
  if (n_samples <= 0) throw FormatError("n_samples must be positive");
  if (n_samples != static_cast<std::int64_t>(std::llround(sampling_rate_hz * duration_s)))
    throw FormatError("n_samples != round(sampling_rate_hz * duration_s)");
  if (units != "microvolt") throw FormatError("units must be 'microvolt'");
}

void Recording::validate() const {
  meta.validate();
  if (samples.size() != static_cast<std::size_t>(meta.n_channels) * meta.n_samples)
    throw FormatError("sample buffer does not match n_channels x n_samples");
  for (float v : samples)
    if (!std::isfinite(v)) throw FormatError("recording contains non-finite samples");
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_recording(const Recording& rec, const fs::path& dir) {
  rec.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  write_text_file(dir / "meta.json", meta_to_json(rec.meta).dump(2) + "\n");

  std::vector<std::uint32_t> words(rec.samples.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    words[i] = to_le(std::bit_cast<std::uint32_t>(rec.samples[i]));
  std::ofstream out(dir / "data.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + (dir / "data.bin").string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw DataError("write failed: " + (dir / "data.bin").string());
}

RecordingMeta read_meta(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) throw DataError("missing file: " + meta_path.string());
  json j;
  try {
    j = json::parse(read_text_file(meta_path));
  } catch (const json::parse_error& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  return meta_from_json(j);
}

Recording read_recording(const fs::path& dir) {
  Recording rec;
  rec.meta = read_meta(dir);
  const fs::path data_path = dir / "data.bin";
  if (!fs::exists(data_path)) throw DataError("missing file: " + data_path.string());

  const std::size_t n = static_cast<std::size_t>(rec.meta.n_channels) * rec.meta.n_samples;
  const auto size = fs::file_size(data_path);
  if (size != 4 * n)
    throw FormatError("data.bin length " + std::to_string(size) + " != expected " +
                      std::to_string(4 * n));

  std::vector<std::uint32_t> words(n);
  std::ifstream in(data_path, std::ios::binary);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(4 * n));
  if (!in) throw DataError("read failed: " + data_path.string());
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) rec.samples[i] = std::bit_cast<float>(to_le(words[i]));
  rec.validate();
  return rec;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.recording_id).second)
      throw FormatError("duplicate recording_id in manifest: " + e.recording_id);
    well_row(e.well_id);
  }
}

void write_manifest(const DatasetManifest& m, const fs::path& root) {
  m.validate();
  json j;
  j["generator_seed"] = m.generator_seed ? json(*m.generator_seed) : json(nullptr);
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"recording_id", e.recording_id},
                            {"path", e.path},
                            {"well_id", e.well_id},
                            {"class_label", to_int(e.class_label)}});
  }
  fs::create_directories(root);
  write_text_file(root / "manifest.json", j.dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.json";
  if (!fs::exists(p)) throw DataError("missing manifest: " + p.string());
  DatasetManifest m;
  try {
    const json j = json::parse(read_text_file(p));
    if (j.contains("generator_seed") && !j["generator_seed"].is_null())
      m.generator_seed = j["generator_seed"].get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("recording_id").get<std::string>(),
                           e.at("path").get<std::string>(), e.at("well_id").get<std::string>(),
                           label_from_int(e.at("class_label").get<int>())});
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size())
    throw ConfigError("table row has " + std::to_string(row.size()) + " cells, expected " +
                      std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::to_string(std::get<std::int64_t>(c));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    out += (i ? "," : "") + csv_field(t.columns[i]);
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(cell_text(row[i]));
    out += '\n';
  }
  return out;
}

std::string to_json(const Table& t) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::visit([&](const auto& v) { obj[t.columns[i]] = v; }, row[i]);
    }
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + "\n";
}

void export_table(const Table& t, const fs::path& path, TableFormat format) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text_file(path, format == TableFormat::csv ? to_csv(t) : to_json(t));
}

void export_table(const Table& t, const fs::path& path) {
  export_table(t, path, path.extension() == ".json" ? TableFormat::json : TableFormat::csv);
}

}  // namespace io
}  // namespace framec
