#pragma once

#include <span>
#include <string>
#include <vector>

#include "framec/spikes.hpp"

namespace framec::features {

struct SpikeFeatures {
  double amplitude_uV = 0.0;
  double isi_s = 0.0;
  double duration_s = 0.0;
};

struct BurstConfig {
  double min_isi_s = 0.008;
  int min_spikes = 4;
  bool bsr_inverse = false;  // n_spikes / duration instead of duration / n_spikes

  void validate() const;
};

struct Burst {
  int channel = 0;
  int first_spike_idx = 0;  // index into the event list passed to detect_bursts
  int n_spikes = 0;
  double start_s = 0.0;
  double duration_s = 0.0;
  double bsr = 0.0;
};

/// Median of the pre-spike samples [0, 20).
double waveform_baseline(const spikes::Waveform& w);

/// |w[50] - baseline|.
double spike_amplitude(const spikes::Waveform& w);

/// Full width at half amplitude around the peak, linearly interpolated and
/// clamped to the waveform window; 0 for a zero-amplitude waveform.
double spike_duration(const spikes::Waveform& w, double sampling_rate_hz);

/// Per-channel time to the next spike; the last spike of each channel gets
/// the time remaining to `segment_end_s`. Output is aligned with `events`.
std::vector<double> inter_spike_intervals(std::span<const spikes::SpikeEvent> events,
                                          double segment_end_s);

/// Amplitude, ISI and duration for every event.
std::vector<SpikeFeatures> spike_features(std::span<const spikes::SpikeEvent> events,
                                          double segment_end_s, double sampling_rate_hz);

/// Maximal per-channel runs with every successive ISI < min_isi_s and at
/// least min_spikes members. Sorted by (start time, channel).
std::vector<Burst> detect_bursts(std::span<const spikes::SpikeEvent> events, const BurstConfig& cfg);

/// Sum of counts / (electrodes * duration), in Hz per electrode.
double mean_firing_rate(std::span<const std::int64_t> spike_counts, double duration_s);

}  // namespace framec::features
