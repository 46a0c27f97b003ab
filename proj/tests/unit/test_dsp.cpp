#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "framec/dsp.hpp"
#include "framec/errors.hpp"
#include "support.hpp"

using namespace framec;

namespace {

constexpr double kFs = 12500.0;

// Closed-form digital Butterworth bandpass magnitude: the analog response
// evaluated at the bilinear-warped frequency.
double butterworth_bp_oracle(double f, double lo, double hi, int order, double fs) {
  const double pi = std::numbers::pi;
  const double w = 2.0 * fs * std::tan(pi * f / fs);
  const double wl = 2.0 * fs * std::tan(pi * lo / fs);
  const double wh = 2.0 * fs * std::tan(pi * hi / fs);
  const double x = (w * w - wl * wh) / ((wh - wl) * w);
  return 1.0 / std::sqrt(1.0 + std::pow(x * x, order));
}

// Steady-state gain of a sinusoid pushed through `run`.
template <class Run>
double measured_gain(double f, Run run) {
  const int n = 5 * static_cast<int>(kFs);
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * i / kFs);
  run(x, y);
  double sx = 0, sy = 0;
  for (int i = n / 2; i < n - n / 5; ++i) {
    sx += x[i] * x[i];
    sy += y[i] * y[i];
  }
  return std::sqrt(sy / sx);
}

double db(double g) { return 20.0 * std::log10(g); }

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("magnitude matches the analytic Butterworth response") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  CHECK(f.sections().size() == 4);
  for (double hz = 20.0; hz < kFs / 2; hz *= 1.07) {
    CHECK(f.magnitude(hz) == doctest::Approx(butterworth_bp_oracle(hz, 300, 2000, 4, kFs)).epsilon(1e-9));
  }
}

TEST_CASE("measured gains at the cutoffs and mid band") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  auto causal = [&](const std::vector<double>& x, std::vector<double>& y) { f.apply(x, y); };
  CHECK(db(measured_gain(300.0, causal)) == doctest::Approx(-3.0103).epsilon(0.01));
  CHECK(db(measured_gain(2000.0, causal)) == doctest::Approx(-3.0103).epsilon(0.01));
  CHECK(std::abs(db(measured_gain(775.0, causal))) < 0.05);
  CHECK(db(measured_gain(50.0, causal)) < -60.0);
  CHECK(db(measured_gain(5000.0, causal)) < -40.0);
}

TEST_CASE("zero-phase pass squares the magnitude") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  auto zp = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::vector<float> xf(x.begin(), x.end()), yf(x.size());
    f.apply_zero_phase(xf, yf);
    std::copy(yf.begin(), yf.end(), y.begin());
  };
  CHECK(db(measured_gain(300.0, zp)) == doctest::Approx(-6.0206).epsilon(0.01));
  CHECK(std::abs(db(measured_gain(775.0, zp))) < 0.05);
}

TEST_CASE("zero-phase impulse response is symmetric") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  const int n = 20001, c = n / 2;
  std::vector<float> x(n, 0.0f), y(n);
  x[c] = 1.0f;
  f.apply_zero_phase(x, y);
  double peak = 0;
  for (float v : y) peak = std::max(peak, std::abs(static_cast<double>(v)));
  for (int k = 1; k < 200; ++k) CHECK(std::abs(y[c + k] - y[c - k]) < 1e-5 * peak);
}

TEST_CASE("every section is stable") {
  for (auto [lo, hi] : {std::pair{300.0, 2000.0}, std::pair{10.0, 6000.0}, std::pair{1000.0, 1100.0}}) {
    dsp::BandpassFilter f(dsp::FilterSpec{4, lo, hi}, kFs);
    for (const auto& q : f.sections()) {
      // roots of z^2 + a1 z + a2
      const std::complex<double> disc = std::sqrt(std::complex<double>(q.a1 * q.a1 - 4.0 * q.a2));
      CHECK(std::abs((-q.a1 + disc) / 2.0) < 1.0);
      CHECK(std::abs((-q.a1 - disc) / 2.0) < 1.0);
    }
  }
}

TEST_CASE("odd orders still normalise to unity at the centre") {
  dsp::BandpassFilter f(dsp::FilterSpec{3, 300, 2000}, kFs);
  CHECK(f.sections().size() == 3);
  const double wl = std::tan(std::numbers::pi * 300 / kFs), wh = std::tan(std::numbers::pi * 2000 / kFs);
  const double fc = std::atan(std::sqrt(wl * wh)) * kFs / std::numbers::pi;
  CHECK(f.magnitude(fc) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.magnitude(300.0) == doctest::Approx(butterworth_bp_oracle(300, 300, 2000, 3, kFs)).epsilon(1e-9));
}

TEST_CASE("filter is linear and time invariant") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const int n = 4000;
  std::vector<double> a(n), b(n), mix(n), fa(n), fb(n), fmix(n);
  for (int i = 0; i < n; ++i) {
    a[i] = nd(rng);
    b[i] = nd(rng);
    mix[i] = 2.5 * a[i] - 0.75 * b[i];
  }
  f.apply(a, fa);
  f.apply(b, fb);
  f.apply(mix, fmix);
  for (int i = 0; i < n; ++i) CHECK(fmix[i] == doctest::Approx(2.5 * fa[i] - 0.75 * fb[i]).epsilon(1e-9).scale(1.0));

  std::vector<double> shifted(n, 0.0), fs(n);
  std::copy(a.begin(), a.end() - 37, shifted.begin() + 37);
  f.apply(shifted, fs);
  for (int i = 37; i < n; ++i) CHECK(fs[i] == doctest::Approx(fa[i - 37]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("impulse response decays") {
  dsp::BandpassFilter f(dsp::FilterSpec{}, kFs);
  std::vector<double> x(12500, 0.0), y(12500);
  x[0] = 1.0;
  f.apply(x, y);
  double tail = 0;
  for (int i = 10000; i < 12500; ++i) tail = std::max(tail, std::abs(y[i]));
  CHECK(tail < 1e-10);
}

TEST_CASE("bandpass_filter keeps shape and filters channels independently") {
  auto rec = test_support::make_recording(2, 3000);
  for (int i = 0; i < 3000; ++i) rec.channel(0)[i] = static_cast<float>(std::sin(2 * std::numbers::pi * 775 * i / kFs));
  const auto out = dsp::bandpass_filter(rec, dsp::FilterSpec{});
  CHECK(out.samples.size() == rec.samples.size());
  CHECK(out.meta.recording_id == rec.meta.recording_id);
  for (float v : out.channel(1)) CHECK(v == 0.0f);
}

TEST_CASE("filter spec validation") {
  CHECK_THROWS_AS(dsp::FilterSpec({4, 2000, 300}).validate(kFs), ConfigError);
  CHECK_THROWS_AS(dsp::FilterSpec({4, 300, 7000}).validate(kFs), ConfigError);
  CHECK_THROWS_AS(dsp::FilterSpec({0, 300, 2000}).validate(kFs), ConfigError);
  CHECK_THROWS_AS(dsp::FilterSpec({4, 0, 2000}).validate(kFs), ConfigError);
  CHECK_NOTHROW(dsp::FilterSpec{}.validate(kFs));
}

TEST_CASE("MAD noise estimate") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 20.0);
  std::vector<float> x(100000);
  for (auto& v : x) v = static_cast<float>(nd(rng) + 7.0);
  CHECK(dsp::estimate_noise_sigma(x) == doctest::Approx(20.0).epsilon(0.02));

  // a sparse set of large spikes barely moves the estimate
  for (std::size_t i = 0; i < x.size(); i += 500) x[i] = -400.0f;
  CHECK(dsp::estimate_noise_sigma(x) == doctest::Approx(20.0).epsilon(0.03));

  std::vector<float> zeros(5000, 0.0f);
  CHECK(dsp::estimate_noise_sigma(zeros) == 0.0);
  std::vector<float> few(999, 1.0f);
  CHECK_THROWS_AS(dsp::estimate_noise_sigma(few), DataError);
}

TEST_CASE("segment counts") {
  const std::int64_t n300 = 300 * 12500;
  CHECK(dsp::segment_count(n300, kFs, {10, 10}) == 30);
  CHECK(dsp::segment_count(n300, kFs, {10, 1}) == 291);
  CHECK(dsp::SplitSpec{10, 1}.alpha() == 10.0);
  CHECK(dsp::segment_count(10 * 12500, kFs, {10, 1}) == 1);
  CHECK_THROWS(dsp::segment_count(9 * 12500, kFs, {10, 1}));
  CHECK_THROWS_AS(dsp::SplitSpec({10, 11}).validate(), ConfigError);
  CHECK_THROWS_AS(dsp::SplitSpec({10, 0}).validate(), ConfigError);
}

TEST_CASE("segment count matches the closed form on random configurations") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double fs = std::uniform_int_distribution<int>(100, 20000)(rng);
    const std::int64_t n = std::uniform_int_distribution<std::int64_t>(1000, 200000)(rng);
    const std::int64_t win = std::uniform_int_distribution<std::int64_t>(1, n)(rng);
    const std::int64_t step = std::uniform_int_distribution<std::int64_t>(1, win)(rng);
    const dsp::SplitSpec spec{win / fs, step / fs};
    CHECK(dsp::segment_count(n, fs, spec) == (n - win) / step + 1);
  }
}

TEST_CASE("augmentation multiplies the segment count by alpha within one boundary segment") {
  const std::int64_t n = 300 * 12500;
  for (double alpha : {2.0, 5.0, 10.0}) {
    const auto base = dsp::segment_count(n, kFs, {10, 10});
    const auto aug = dsp::segment_count(n, kFs, {10, 10 / alpha});
    CHECK(std::abs(static_cast<double>(aug) - alpha * (base - 1) - 1) <= 1.0);
  }
}

TEST_CASE("time_split windows view the parent recording") {
  auto rec = test_support::make_recording(2, 12500 * 3, kFs, "r", "B2");
  rec.meta.class_label = ClassLabel::B;
  for (std::size_t i = 0; i < rec.samples.size(); ++i) rec.samples[i] = static_cast<float>(i);
  auto shared = std::make_shared<const io::Recording>(rec);
  const auto segs = dsp::time_split(shared, {1.0, 0.5});
  REQUIRE(segs.size() == 5);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& s = segs[k];
    CHECK(s.start_s == doctest::Approx(0.5 * k));
    CHECK(s.length == 12500);
    CHECK(s.well_id == "B2");
    CHECK(s.class_label == ClassLabel::B);
    CHECK(s.channel(1)[0] == rec.channel(1)[s.start_index]);
    CHECK(s.channel(0)[12499] == rec.channel(0)[s.start_index + 12499]);
  }
  CHECK_THROWS(dsp::time_split(shared, {4.0, 1.0}));
}

}  // TEST_SUITE
