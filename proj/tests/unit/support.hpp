#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "framec/dsp.hpp"
#include "framec/io_store.hpp"
#include "framec/spikes.hpp"

namespace test_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("framec_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline framec::io::Recording make_recording(int n_channels, std::int64_t n_samples, double fs = 12500.0,
                                            const std::string& id = "rec", const std::string& well = "A1") {
  framec::io::Recording r;
  r.meta.recording_id = id;
  r.meta.well_id = well;
  r.meta.sampling_rate_hz = fs;
  r.meta.n_channels = n_channels;
  r.meta.n_samples = n_samples;
  r.meta.duration_s = static_cast<double>(n_samples) / fs;
  r.samples.assign(static_cast<std::size_t>(n_channels) * n_samples, 0.0f);
  return r;
}

inline void add_noise(framec::io::Recording& r, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& v : r.samples) v += static_cast<float>(n(rng));
}

// Single segment covering the whole recording.
inline framec::dsp::Segment whole(const framec::io::Recording& r) {
  framec::dsp::Segment s;
  s.parent_id = r.meta.recording_id;
  s.well_id = r.meta.well_id;
  s.class_label = r.meta.class_label;
  s.window_s = r.meta.duration_s;
  s.sampling_rate_hz = r.meta.sampling_rate_hz;
  s.length = r.meta.n_samples;
  s.source = std::make_shared<const framec::io::Recording>(r);
  return s;
}

inline framec::spikes::SpikeEvent event(int channel, double t, double fs = 12500.0) {
  framec::spikes::SpikeEvent e;
  e.channel = channel;
  e.peak_time_s = t;
  e.peak_index = std::llround(t * fs);
  return e;
}

}  // namespace test_support
