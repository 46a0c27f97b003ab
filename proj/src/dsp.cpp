#include "framec/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "framec/errors.hpp"

namespace framec::dsp {

using cplx = std::complex<double>;

void FilterSpec::validate(double fs) const {
  if (order < 1) throw ConfigError("filter order must be >= 1");
  if (!(low_cut_hz > 0.0 && low_cut_hz < high_cut_hz))
    throw ConfigError("filter cutoffs must satisfy 0 < low < high");
  if (!(high_cut_hz < fs / 2.0)) throw ConfigError("filter high cutoff must be below Nyquist");
}

BandpassFilter::BandpassFilter(const FilterSpec& spec, double fs) : fs_(fs) {
  spec.validate(fs);
  const double pi = std::numbers::pi;
  // Pre-warped analog band edges.
  const double wl = 2.0 * fs * std::tan(pi * spec.low_cut_hz / fs);
  const double wh = 2.0 * fs * std::tan(pi * spec.high_cut_hz / fs);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  // Each upper-half-plane prototype pole p maps to the two roots of
  // s^2 - p*bw*s + w0^2; every root pairs with its conjugate into one section.
  // A real prototype pole (odd order) yields one section from both roots.
  const double k2 = 2.0 * fs;
  auto to_z = [k2](cplx s) { return (k2 + s) / (k2 - s); };
  auto push_section = [this](double a1, double a2) {
    // Zeros at z = +1 and z = -1 (analog zeros at 0 and infinity).
    sections_.push_back(Biquad{1.0, 0.0, -1.0, a1, a2});
  };
  const int n = spec.order;
  for (int k = 0; k < n; ++k) {
    const double theta = pi * (2.0 * k + 1.0 + n) / (2.0 * n);
    const cplx p = std::polar(1.0, theta);
    if (p.imag() < -1e-12) continue;
    const cplx b = -p * bw;
    const cplx disc = std::sqrt(b * b - 4.0 * w0sq);
    const cplx r1 = (-b + disc) / 2.0;
    const cplx r2 = (-b - disc) / 2.0;
    if (std::abs(p.imag()) <= 1e-12) {
      const cplx z1 = to_z(r1), z2 = to_z(r2);
      push_section(-(z1 + z2).real(), (z1 * z2).real());
    } else {
      for (const cplx r : {r1, r2}) {
        const cplx z = to_z(r);
        push_section(-2.0 * z.real(), std::norm(z));
      }
    }
  }

  // Normalise to unit gain at the digital image of the analog centre frequency.
  const double f0 = fs / pi * std::atan(std::sqrt(w0sq) / k2);
  const double g = magnitude(f0);
  const double per_section = std::pow(g, -1.0 / static_cast<double>(sections_.size()));
  for (auto& q : sections_) {
    q.b0 *= per_section;
    q.b1 *= per_section;
    q.b2 *= per_section;
  }
}

double BandpassFilter::magnitude(double freq_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs_;
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  cplx h = 1.0;
  for (const auto& q : sections_) h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  return std::abs(h);
}

namespace {

void run_sections(const std::vector<Biquad>& sections, std::vector<double>& buf) {
  const std::size_t n = buf.size();
  for (const auto& q : sections) {
    // Direct form II transposed.
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = buf[i];
      const double y = q.b0 * x + s1;
      s1 = q.b1 * x - q.a1 * y + s2;
      s2 = q.b2 * x - q.a2 * y;
      buf[i] = y;
    }
  }
}

template <class In, class Out>
void run_cascade(const std::vector<Biquad>& sections, std::span<const In> in, std::span<Out> out) {
  std::vector<double> buf(in.begin(), in.end());
  run_sections(sections, buf);
  std::copy(buf.begin(), buf.end(), out.begin());
}

}  // namespace

void BandpassFilter::apply(std::span<const float> in, std::span<float> out) const {
  run_cascade(sections_, in, out);
}

void BandpassFilter::apply(std::span<const double> in, std::span<double> out) const {
  run_cascade(sections_, in, out);
}

void BandpassFilter::apply_zero_phase(std::span<const float> in, std::span<float> out) const {
  std::vector<double> buf(in.begin(), in.end());
  run_sections(sections_, buf);
  std::reverse(buf.begin(), buf.end());
  run_sections(sections_, buf);
  std::reverse(buf.begin(), buf.end());
  std::copy(buf.begin(), buf.end(), out.begin());
}

io::Recording bandpass_filter(const io::Recording& rec, const FilterSpec& spec) {
  const BandpassFilter filter(spec, rec.meta.sampling_rate_hz);
  io::Recording out;
  out.meta = rec.meta;
  out.samples.resize(rec.samples.size());
  for (int c = 0; c < rec.meta.n_channels; ++c) {
    if (spec.zero_phase) filter.apply_zero_phase(rec.channel(c), out.channel(c));
    else filter.apply(rec.channel(c), out.channel(c));
  }
  return out;
}

double estimate_noise_sigma(std::span<const float> channel) {
  if (channel.size() < 1000)
    throw DataError("noise estimation needs at least 1000 samples, got " +
                    std::to_string(channel.size()));
  auto median_inplace = [](std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
  };
  std::vector<double> v(channel.begin(), channel.end());
  const double med = median_inplace(v);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(static_cast<double>(channel[i]) - med);
  return median_inplace(v) / 0.6745;
}

void SplitSpec::validate() const {
  if (!(window_s > 0.0)) throw ConfigError("window_s must be positive");
  if (!(step_s > 0.0 && step_s <= window_s)) throw ConfigError("step_s must satisfy 0 < step <= window");
}

std::int64_t segment_count(std::int64_t n_samples, double fs, const SplitSpec& spec) {
  spec.validate();
  const auto win = static_cast<std::int64_t>(std::llround(spec.window_s * fs));
  const auto step = static_cast<std::int64_t>(std::llround(spec.step_s * fs));
  if (step < 1) throw ConfigError("step_s is shorter than one sample");
  if (win > n_samples) throw DataError("window longer than recording");
  return (n_samples - win) / step + 1;
}

std::vector<Segment> time_split(std::shared_ptr<const io::Recording> rec, const SplitSpec& spec) {
  const double fs = rec->meta.sampling_rate_hz;
  const std::int64_t count = segment_count(rec->meta.n_samples, fs, spec);
  const auto win = static_cast<std::int64_t>(std::llround(spec.window_s * fs));
  const auto step = static_cast<std::int64_t>(std::llround(spec.step_s * fs));
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    Segment s;
    s.parent_id = rec->meta.recording_id;
    s.well_id = rec->meta.well_id;
    s.class_label = rec->meta.class_label;
    s.start_index = k * step;
    s.start_s = static_cast<double>(k * step) / fs;
    s.window_s = spec.window_s;
    s.sampling_rate_hz = fs;
    s.length = win;
    s.source = rec;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace framec::dsp
