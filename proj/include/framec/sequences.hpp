#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framec/features.hpp"

namespace framec::seq {

enum class Variant { V1_waveform, V2_features, V3_combined, baseline_binned };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Names of the handcrafted rows that can be ablated.
inline const std::vector<std::string>& handcrafted_feature_names() {
  static const std::vector<std::string> names{"amplitude",      "isi",
                                              "duration",       "burst_duration",
                                              "n_spikes_per_burst", "bsr"};
  return names;
}

struct SequenceConfig {
  Variant variant = Variant::V3_combined;
  int len_spikes = 500;
  int len_bursts = 50;
  bool include_bursts = false;
  double bin_width_s = 0.001;
  std::vector<std::string> drop_features;  // handcrafted rows removed (ablation)

  void validate() const;
};

/// Feature-by-time matrix stored time-major: column t is contiguous.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return data[static_cast<std::size_t>(c) * rows + r]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(c) * rows + r]; }
  std::span<const float> column(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * rows, static_cast<std::size_t>(rows)};
  }
};

struct FeatureSequence {
  Matrix spikes;                    // d_spike x len_spikes
  int spike_valid = 0;
  std::vector<std::string> spike_rows;
  std::optional<Matrix> bursts;     // 3 x len_bursts (minus dropped rows)
  int burst_valid = 0;
  std::vector<std::string> burst_rows;
  ClassLabel label = ClassLabel::A;
  std::string well_id;
  std::string parent_id;
  double start_s = 0.0;
};

/// Everything extracted from one segment; sequences of any variant are built from it.
struct SegmentData {
  std::string parent_id;
  std::string well_id;
  ClassLabel label = ClassLabel::A;
  double start_s = 0.0;
  double window_s = 0.0;
  double sampling_rate_hz = 0.0;
  std::vector<spikes::SpikeEvent> events;           // sorted by time
  std::vector<features::SpikeFeatures> features;    // aligned with events
  std::vector<features::Burst> bursts;
};

/// Row names for a variant after dropping `cfg.drop_features`.
std::vector<std::string> spike_row_names(const SequenceConfig& cfg);
std::vector<std::string> burst_row_names(const SequenceConfig& cfg);

/// Columns ordered by spike time; earliest len_spikes kept; zero padded.
FeatureSequence build_sequence(const SegmentData& seg, const SequenceConfig& cfg);

/// ceil(window / bin) bins, 1 where at least one spike peak falls in the bin.
std::vector<std::uint8_t> build_binned_baseline(std::span<const spikes::SpikeEvent> events,
                                                double window_s, const SequenceConfig& cfg);

/// Removes the named handcrafted rows from an already built sequence.
FeatureSequence drop_rows(const FeatureSequence& s, std::span<const std::string> names);

struct NormStats {
  std::vector<double> spike_mean, spike_std;
  std::vector<double> burst_mean, burst_std;
};

inline constexpr double kStdFloor = 1e-8;

/// Mean/std over valid columns only (population std, floored).
NormStats fit_norm_stats(std::span<const FeatureSequence> train);
FeatureSequence apply_norm(const FeatureSequence& s, const NormStats& stats);
FeatureSequence invert_norm(const FeatureSequence& s, const NormStats& stats);

/// Row-major flattening of the spike (then burst) matrix, for external embedding tools.
std::vector<float> flatten(const FeatureSequence& s);

}  // namespace framec::seq
