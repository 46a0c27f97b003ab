#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "framec/dsp.hpp"

namespace framec::spikes {

inline constexpr int kWaveformLength = 100;
inline constexpr int kPeakOffset = 50;

using Waveform = std::array<float, kWaveformLength>;

enum class Polarity { negative, positive };

struct SpikeEvent {
  int channel = 0;
  std::int64_t peak_index = 0;  // segment-local sample
  double peak_time_s = 0.0;     // segment-local seconds
  Waveform waveform{};
  Polarity polarity = Polarity::negative;
};

struct DetectionConfig {
  double threshold_multiplier = 5.0;
  double dead_time_s = 0.001;
  double peak_search_window_s = 0.001;

  void validate() const;
};

/// Samples [peak-50, peak+50); nullopt when the window leaves the signal.
std::optional<Waveform> extract_waveform(std::span<const float> channel, std::int64_t peak_index);

/// Two-sided threshold crossing per channel; merged events sorted by
/// (peak_time_s, channel). `sigma_per_channel` is usually the MAD noise level
/// of the filtered segment. A channel with sigma 0 yields no events.
std::vector<SpikeEvent> detect_spikes(const dsp::Segment& seg, const DetectionConfig& cfg,
                                      std::span<const double> sigma_per_channel);

/// Single-channel core used by detect_spikes; returns peak sample indices.
std::vector<std::int64_t> detect_channel_peaks(std::span<const float> x, double threshold,
                                               std::int64_t dead_samples,
                                               std::int64_t search_samples);

}  // namespace framec::spikes
