#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "framec/io_store.hpp"

namespace framec::dsp {

struct FilterSpec {
  int order = 4;
  double low_cut_hz = 300.0;
  double high_cut_hz = 2000.0;
  bool zero_phase = true;  // forward-backward pass (squared magnitude, no delay)

  /// Throws ConfigError unless 0 < low < high < fs/2 and order >= 1.
  void validate(double sampling_rate_hz) const;
};

/// One second-order section, a0 normalised to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

/// Butterworth bandpass as cascaded biquads. The analog low-pass prototype of
/// the given order is mapped to a bandpass (doubling the pole count) at
/// pre-warped band edges and discretised with the bilinear transform; overall
/// gain is unity at the geometric band centre.
class BandpassFilter {
 public:
  BandpassFilter(const FilterSpec& spec, double sampling_rate_hz);

  const std::vector<Biquad>& sections() const { return sections_; }

  /// |H(e^{jw})| at frequency f in Hz.
  double magnitude(double freq_hz) const;

  /// Causal single pass, zero initial state.
  void apply(std::span<const float> in, std::span<float> out) const;
  void apply(std::span<const double> in, std::span<double> out) const;
  /// Forward then time-reversed pass.
  void apply_zero_phase(std::span<const float> in, std::span<float> out) const;

 private:
  std::vector<Biquad> sections_;
  double fs_;
};

/// Filters every channel independently (causal unless spec.zero_phase);
/// returns a recording of the same shape.
io::Recording bandpass_filter(const io::Recording& rec, const FilterSpec& spec);

/// Robust noise level median(|x - median(x)|) / 0.6745. Needs >= 1000 samples.
double estimate_noise_sigma(std::span<const float> channel);

struct SplitSpec {
  double window_s = 10.0;
  double step_s = 10.0;

  double alpha() const { return window_s / step_s; }
  void validate() const;
};

/// A window into a (shared, immutable) recording.
struct Segment {
  std::string parent_id;
  std::string well_id;
  ClassLabel class_label = ClassLabel::A;
  double start_s = 0.0;
  double window_s = 0.0;
  double sampling_rate_hz = 0.0;
  std::int64_t start_index = 0;
  std::int64_t length = 0;  // samples per channel
  std::shared_ptr<const io::Recording> source;

  int n_channels() const { return source->meta.n_channels; }
  std::span<const float> channel(int c) const {
    return source->channel(c).subspan(static_cast<std::size_t>(start_index),
                                      static_cast<std::size_t>(length));
  }
};

/// Closed-form count floor((duration - window) / step) + 1, in whole samples.
std::int64_t segment_count(std::int64_t n_samples, double sampling_rate_hz, const SplitSpec& spec);

/// Windows starting at 0, step, 2*step, ...; windows past the end are dropped.
std::vector<Segment> time_split(std::shared_ptr<const io::Recording> rec, const SplitSpec& spec);

}  // namespace framec::dsp
