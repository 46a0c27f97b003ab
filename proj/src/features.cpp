#include "framec/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "framec/errors.hpp"

namespace framec::features {

using spikes::kPeakOffset;
using spikes::kWaveformLength;

void BurstConfig::validate() const {
  if (!(min_isi_s > 0.0)) throw ConfigError("burst min_isi_s must be positive");
  if (min_spikes < 2) throw ConfigError("burst min_spikes must be >= 2");
}

double waveform_baseline(const spikes::Waveform& w) {
  std::array<double, 20> pre;
  std::copy_n(w.begin(), pre.size(), pre.begin());
  std::sort(pre.begin(), pre.end());
  return 0.5 * (pre[9] + pre[10]);
}

double spike_amplitude(const spikes::Waveform& w) {
  return std::abs(static_cast<double>(w[kPeakOffset]) - waveform_baseline(w));
}

double spike_duration(const spikes::Waveform& w, double fs) {
  const double base = waveform_baseline(w);
  const double amp = std::abs(static_cast<double>(w[kPeakOffset]) - base);
  if (amp <= 0.0) return 0.0;
  const double half = 0.5 * amp;
  auto dev = [&](int i) { return std::abs(static_cast<double>(w[i]) - base); };

  double left = 0.0;
  for (int i = kPeakOffset - 1; i >= 0; --i) {
    if (dev(i) < half) {
      // crossing between i and i + 1
      left = i + (half - dev(i)) / (dev(i + 1) - dev(i));
      break;
    }
  }
  double right = kWaveformLength - 1;
  for (int i = kPeakOffset + 1; i < kWaveformLength; ++i) {
    if (dev(i) < half) {
      right = (i - 1) + (dev(i - 1) - half) / (dev(i - 1) - dev(i));
      break;
    }
  }
  return (right - left) / fs;
}

std::vector<double> inter_spike_intervals(std::span<const spikes::SpikeEvent> events,
                                          double segment_end_s) {
  std::vector<double> isi(events.size(), 0.0);
  std::map<int, std::size_t> last;  // channel -> index of previous event
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto it = last.find(events[i].channel);
    if (it != last.end()) isi[it->second] = events[i].peak_time_s - events[it->second].peak_time_s;
    last[events[i].channel] = i;
  }
  for (const auto& [ch, i] : last) isi[i] = std::max(0.0, segment_end_s - events[i].peak_time_s);
  return isi;
}

std::vector<SpikeFeatures> spike_features(std::span<const spikes::SpikeEvent> events,
                                          double segment_end_s, double fs) {
  const auto isi = inter_spike_intervals(events, segment_end_s);
  std::vector<SpikeFeatures> out(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    out[i].amplitude_uV = spike_amplitude(events[i].waveform);
    out[i].isi_s = isi[i];
    out[i].duration_s = spike_duration(events[i].waveform, fs);
  }
  return out;
}

std::vector<Burst> detect_bursts(std::span<const spikes::SpikeEvent> events, const BurstConfig& cfg) {
  cfg.validate();
  std::map<int, std::vector<int>> by_channel;
  for (std::size_t i = 0; i < events.size(); ++i)
    by_channel[events[i].channel].push_back(static_cast<int>(i));

  std::vector<Burst> bursts;
  auto close_run = [&](int ch, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
    const int n = static_cast<int>(end - begin);
    if (n < cfg.min_spikes) return;
    Burst b;
    b.channel = ch;
    b.first_spike_idx = idx[begin];
    b.n_spikes = n;
    b.start_s = events[idx[begin]].peak_time_s;
    b.duration_s = events[idx[end - 1]].peak_time_s - b.start_s;
    b.bsr = cfg.bsr_inverse ? (b.duration_s > 0.0 ? n / b.duration_s : 0.0) : b.duration_s / n;
    bursts.push_back(b);
  };
  for (const auto& [ch, idx] : by_channel) {
    std::size_t begin = 0;
    for (std::size_t k = 1; k <= idx.size(); ++k) {
      const bool breaks =
          k == idx.size() ||
          !(events[idx[k]].peak_time_s - events[idx[k - 1]].peak_time_s < cfg.min_isi_s);
      if (breaks) {
        close_run(ch, idx, begin, k);
        begin = k;
      }
    }
  }
  std::sort(bursts.begin(), bursts.end(), [](const Burst& a, const Burst& b) {
    return std::tie(a.start_s, a.channel) < std::tie(b.start_s, b.channel);
  });
  return bursts;
}

double mean_firing_rate(std::span<const std::int64_t> spike_counts, double duration_s) {
  if (!(duration_s > 0.0)) throw DataError("mean firing rate needs a positive duration");
  if (spike_counts.empty()) throw DataError("mean firing rate needs at least one electrode");
  const auto total = std::accumulate(spike_counts.begin(), spike_counts.end(), std::int64_t{0});
  return static_cast<double>(total) / (static_cast<double>(spike_counts.size()) * duration_s);
}

}  // namespace framec::features
