#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "framec/io_store.hpp"
#include "framec/spikes.hpp"

namespace framec::synth {

struct CellClassParams {
  double template_half_width_s = 0.0004;
  double template_peak_uV = -150.0;
  double firing_rate_hz = 5.0;
  double burst_prob = 0.05;
  int burst_n_spikes = 5;
  double burst_isi_s = 0.005;

  void validate() const;
};

struct GenConfig {
  int n_channels = 8;
  double duration_s = 300.0;
  double sampling_rate_hz = 12500.0;
  double noise_sigma_uV = 20.0;
  // Per-channel template scale drawn uniformly from [1 - spread, 1 + spread].
  double amplitude_spread = 0.5;
  std::uint64_t seed = 0;
  CellClassParams class_a;
  CellClassParams class_b;

  GenConfig();
  void validate() const;
  const CellClassParams& params(ClassLabel label) const {
    return label == ClassLabel::A ? class_a : class_b;
  }
};

inline constexpr double kRefractory_s = 0.003;

struct GroundTruth {
  std::vector<std::vector<double>> spike_times_s;  // per channel, ascending
  ClassLabel class_label = ClassLabel::A;

  std::size_t total_spikes() const;
};

/// Biphasic difference-of-Gaussians spike with waveform[50] == peak_uV and a
/// half-amplitude width matching half_width_s. Throws ConfigError when the
/// width is under two samples.
spikes::Waveform make_template(double half_width_s, double peak_uV, double sampling_rate_hz);

/// Spike times of one channel: Poisson events, optional burst expansion,
/// then absolute refractory enforcement.
template <class Rng>
std::vector<double> spike_train(const CellClassParams& p, double duration_s, Rng& rng);

/// Deterministic given (cfg.seed, recording_id).
std::pair<io::Recording, GroundTruth> generate_recording(const GenConfig& cfg, ClassLabel label,
                                                         const std::string& recording_id,
                                                         const std::string& well_id);
std::pair<io::Recording, GroundTruth> generate_recording(const GenConfig& cfg, ClassLabel label);

/// Row for the j-th well of a class: classes are offset in the A,E,B,F,C,D
/// cycle so both wellwise sides receive both classes once there are 2 wells.
char well_row_for(ClassLabel label, int well_index);

/// Writes 2 * wells_per_class recordings (+ truth.json each) and manifest.json.
io::DatasetManifest generate_dataset(const GenConfig& cfg, int wells_per_class,
                                     const std::filesystem::path& out_dir);

void write_truth(const GroundTruth& truth, const std::filesystem::path& dir);
GroundTruth read_truth(const std::filesystem::path& dir);

/// splitmix64 finaliser; used to derive independent RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_string(const std::string& s);

}  // namespace framec::synth
