#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace framec {

enum class ClassLabel : int { A = 0, B = 1 };

inline int to_int(ClassLabel l) { return static_cast<int>(l); }
ClassLabel label_from_int(int v);

namespace io {

struct RecordingMeta {
  std::string recording_id;
  std::string well_id;  // row letter A-F followed by a column number, e.g. "C4"
  ClassLabel class_label = ClassLabel::A;
  double sampling_rate_hz = 12500.0;
  int n_channels = 1;
  std::int64_t n_samples = 0;
  double duration_s = 0.0;
  std::optional<int> maturation_day;
  std::string units = "microvolt";

  /// Throws FormatError when a field is out of range.
  void validate() const;
};

/// Row letter of a well id; throws FormatError unless it is one of A..F.
char well_row(const std::string& well_id);

/// Multi-channel voltage trace in microvolts, channel-major.
struct Recording {
  RecordingMeta meta;
  std::vector<float> samples;  // n_channels * n_samples

  std::span<const float> channel(int c) const {
    return {samples.data() + static_cast<std::size_t>(c) * meta.n_samples,
            static_cast<std::size_t>(meta.n_samples)};
  }
  std::span<float> channel(int c) {
    return {samples.data() + static_cast<std::size_t>(c) * meta.n_samples,
            static_cast<std::size_t>(meta.n_samples)};
  }

  /// Shape and finiteness checks on top of meta.validate().
  void validate() const;
};

/// Writes `<dir>/meta.json` and `<dir>/data.bin` (f32 little-endian, channel-major).
void write_recording(const Recording& rec, const std::filesystem::path& dir);
Recording read_recording(const std::filesystem::path& dir);
RecordingMeta read_meta(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string recording_id;
  std::string path;  // relative to the dataset root
  std::string well_id;
  ClassLabel class_label = ClassLabel::A;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::optional<std::uint64_t> generator_seed;

  void validate() const;
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Tabular export

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

enum class TableFormat { csv, json };

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);

std::string to_csv(const Table& t);
std::string to_json(const Table& t);
void export_table(const Table& t, const std::filesystem::path& path, TableFormat format);
/// Picks the format from the extension (".json" -> json, otherwise csv).
void export_table(const Table& t, const std::filesystem::path& path);

/// Raw byte I/O helpers shared by the stores.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace io
}  // namespace framec
