#include "framec/spikes.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "framec/errors.hpp"

namespace framec::spikes {

void DetectionConfig::validate() const {
  if (!(threshold_multiplier > 0.0)) throw ConfigError("threshold_multiplier must be positive");
  if (!(dead_time_s >= 0.0)) throw ConfigError("dead_time_s must be >= 0");
  if (!(peak_search_window_s >= 0.0)) throw ConfigError("peak_search_window_s must be >= 0");
}

std::optional<Waveform> extract_waveform(std::span<const float> channel, std::int64_t peak_index) {
  const auto len = static_cast<std::int64_t>(channel.size());
  if (peak_index < kPeakOffset || peak_index > len - (kWaveformLength - kPeakOffset + 1))
    return std::nullopt;
  Waveform w;
  std::copy_n(channel.begin() + (peak_index - kPeakOffset), kWaveformLength, w.begin());
  return w;
}

std::vector<std::int64_t> detect_channel_peaks(std::span<const float> x, double threshold,
                                               std::int64_t dead_samples,
                                               std::int64_t search_samples) {
  std::vector<std::int64_t> peaks;
  const auto n = static_cast<std::int64_t>(x.size());
  std::int64_t last_peak = -1;
  bool below = true;
  for (std::int64_t t = 0; t < n; ++t) {
    const double a = std::abs(static_cast<double>(x[t]));
    if (a < threshold) {
      below = true;
      continue;
    }
    if (!below) continue;
    below = false;
    if (last_peak >= 0 && t - last_peak <= dead_samples) continue;

    std::int64_t peak = t;
    double best = a;
    const std::int64_t end = std::min(n - 1, t + search_samples);
    for (std::int64_t u = t + 1; u <= end; ++u) {
      const double v = std::abs(static_cast<double>(x[u]));
      if (v > best) {
        best = v;
        peak = u;
      }
    }
    peaks.push_back(peak);
    last_peak = peak;
  }
  return peaks;
}

std::vector<SpikeEvent> detect_spikes(const dsp::Segment& seg, const DetectionConfig& cfg,
                                      std::span<const double> sigma_per_channel) {
  cfg.validate();
  const int nch = seg.n_channels();
  if (static_cast<int>(sigma_per_channel.size()) != nch)
    throw ConfigError("sigma_per_channel length does not match channel count");
  const double fs = seg.sampling_rate_hz;
  const auto dead = static_cast<std::int64_t>(std::llround(cfg.dead_time_s * fs));
  const auto search = static_cast<std::int64_t>(std::llround(cfg.peak_search_window_s * fs));

  std::vector<SpikeEvent> events;
  for (int c = 0; c < nch; ++c) {
    const double sigma = sigma_per_channel[c];
    if (!(sigma > 0.0)) continue;
    const auto x = seg.channel(c);
    for (const std::int64_t p : detect_channel_peaks(x, cfg.threshold_multiplier * sigma, dead, search)) {
      auto w = extract_waveform(x, p);
      if (!w) continue;
      SpikeEvent e;
      e.channel = c;
      e.peak_index = p;
      e.peak_time_s = static_cast<double>(p) / fs;
      e.waveform = *w;
      e.polarity = x[p] < 0.0f ? Polarity::negative : Polarity::positive;
      events.push_back(e);
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SpikeEvent& a, const SpikeEvent& b) {
    return std::tie(a.peak_index, a.channel) < std::tie(b.peak_index, b.channel);
  });
  return events;
}

}  // namespace framec::spikes
