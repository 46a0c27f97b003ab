#include <doctest.h>

#include <cmath>

#include "framec/dsp.hpp"
#include "framec/errors.hpp"
#include "framec/spikes.hpp"
#include "framec/synthgen.hpp"
#include "support.hpp"

using namespace framec;

namespace {

constexpr double kFs = 12500.0;

void inject(io::Recording& r, int channel, std::int64_t peak, const spikes::Waveform& tmpl) {
  auto ch = r.channel(channel);
  for (int k = 0; k < spikes::kWaveformLength; ++k) ch[peak - spikes::kPeakOffset + k] += tmpl[k];
}

}  // namespace

TEST_SUITE("spikes") {

TEST_CASE("all-zero segment yields no events") {
  const auto rec = test_support::make_recording(4, 12500);
  const std::vector<double> sigma(4, 0.0);
  CHECK(spikes::detect_spikes(test_support::whole(rec), {}, sigma).empty());
}

TEST_CASE("injected template in noise gives exactly one event near the truth") {
  auto rec = test_support::make_recording(1, 10 * 12500);
  test_support::add_noise(rec, 20.0, 8);
  const auto tmpl = synth::make_template(0.0004, -200.0, kFs);
  inject(rec, 0, 5 * 12500, tmpl);
  // theta = 5 * 20 = 100 uV
  const std::vector<double> sigma{20.0};
  const auto ev = spikes::detect_spikes(test_support::whole(rec), {}, sigma);
  REQUIRE(ev.size() == 1);
  CHECK(std::abs(ev[0].peak_time_s - 5.0) <= 0.001);
  CHECK(ev[0].polarity == spikes::Polarity::negative);
  CHECK(ev[0].waveform[spikes::kPeakOffset] == rec.channel(0)[ev[0].peak_index]);
}

TEST_CASE("extracted waveform correlates with the injected template") {
  auto rec = test_support::make_recording(1, 2 * 12500);
  test_support::add_noise(rec, 20.0, 4);
  const auto tmpl = synth::make_template(0.0009, -200.0, kFs);
  inject(rec, 0, 12500, tmpl);
  const std::vector<double> sigma{20.0};
  const auto ev = spikes::detect_spikes(test_support::whole(rec), {}, sigma);
  REQUIRE(ev.size() == 1);
  const auto& w = ev[0].waveform;
  const int shift = static_cast<int>(ev[0].peak_index - 12500);
  double sxy = 0, sxx = 0, syy = 0, mx = 0, my = 0;
  int n = 0;
  for (int k = 0; k < 100; ++k) {
    const int j = k + shift;
    if (j < 0 || j >= 100) continue;
    mx += w[k];
    my += tmpl[j];
    ++n;
  }
  mx /= n;
  my /= n;
  for (int k = 0; k < 100; ++k) {
    const int j = k + shift;
    if (j < 0 || j >= 100) continue;
    sxy += (w[k] - mx) * (tmpl[j] - my);
    sxx += (w[k] - mx) * (w[k] - mx);
    syy += (tmpl[j] - my) * (tmpl[j] - my);
  }
  CHECK(sxy / std::sqrt(sxx * syy) >= 0.9);
}

TEST_CASE("two spikes 0.5 ms apart collapse into one event") {
  auto rec = test_support::make_recording(1, 12500);
  rec.channel(0)[5000] = -300.0f;
  rec.channel(0)[5006] = -250.0f;  // 0.48 ms later
  const std::vector<double> sigma{20.0};
  const auto ev = spikes::detect_spikes(test_support::whole(rec), {}, sigma);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].peak_index == 5000);
}

TEST_CASE("peak is the largest magnitude within the search window") {
  std::vector<float> x(1000, 0.0f);
  x[300] = 120.0f;   // crossing
  x[305] = -180.0f;  // larger, opposite sign, inside 12 samples
  x[320] = 500.0f;   // outside the window, after the dead time
  const auto p = spikes::detect_channel_peaks(x, 100.0, 12, 12);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == 305);
  CHECK(p[1] == 320);
}

TEST_CASE("a crossing exactly one dead time after the peak is still suppressed") {
  std::vector<float> x(1000, 0.0f);
  x[300] = 150.0f;
  x[312] = 150.0f;
  x[313] = 0.0f;
  x[314] = 150.0f;
  const auto p = spikes::detect_channel_peaks(x, 100.0, 12, 0);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == 300);
  CHECK(p[1] == 314);
}

TEST_CASE("signal already above threshold at the start is not a crossing from below") {
  std::vector<float> x(100, 200.0f);
  x[50] = 0.0f;
  x[51] = 300.0f;
  const auto p = spikes::detect_channel_peaks(x, 100.0, 0, 0);
  REQUIRE(!p.empty());
  CHECK(p[0] == 0);  // first sample counts as a crossing from the implicit quiet state
}

TEST_CASE("waveform extraction bounds") {
  std::vector<float> x(300, 0.0f);
  x[100] = 1.0f;
  const auto w = spikes::extract_waveform(x, 100);
  REQUIRE(w);
  for (int k = 0; k < 100; ++k) CHECK((*w)[k] == (k == 50 ? 1.0f : 0.0f));
  CHECK_FALSE(spikes::extract_waveform(x, 49));
  CHECK(spikes::extract_waveform(x, 50));
  CHECK(spikes::extract_waveform(x, 249));
  CHECK_FALSE(spikes::extract_waveform(x, 250));
}

TEST_CASE("edge spikes are discarded and events are sorted by time then channel") {
  auto rec = test_support::make_recording(3, 12500);
  rec.channel(2)[20] = -300.0f;     // too close to the start
  rec.channel(2)[1000] = -300.0f;
  rec.channel(0)[1000] = 300.0f;
  rec.channel(1)[400] = -300.0f;
  rec.channel(0)[12480] = -300.0f;  // too close to the end
  const std::vector<double> sigma(3, 20.0);
  const auto ev = spikes::detect_spikes(test_support::whole(rec), {}, sigma);
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].channel == 1);
  CHECK(ev[1].channel == 0);
  CHECK(ev[1].polarity == spikes::Polarity::positive);
  CHECK(ev[2].channel == 2);
  CHECK(ev[2].peak_time_s == doctest::Approx(1000 / kFs));
  for (const auto& e : ev) {
    CHECK(e.peak_index >= 50);
    CHECK(e.peak_index <= 12500 - 51);
    CHECK(std::abs(e.waveform[50]) == doctest::Approx(300.0));
  }
}

TEST_CASE("event times are local to the segment") {
  auto rec = test_support::make_recording(1, 3 * 12500);
  rec.channel(0)[12500 + 625] = -300.0f;
  auto shared = std::make_shared<const io::Recording>(rec);
  const auto segs = dsp::time_split(shared, {1.0, 1.0});
  const std::vector<double> sigma{20.0};
  const auto ev = spikes::detect_spikes(segs[1], {}, sigma);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].peak_index == 625);
  CHECK(ev[0].peak_time_s == doctest::Approx(0.05));
}

TEST_CASE("false positive rate on filtered noise") {
  synth::GenConfig g;
  g.n_channels = 4;
  g.duration_s = 60.0;
  g.class_a.firing_rate_hz = 0.0;
  g.seed = 17;
  auto [raw, truth] = synth::generate_recording(g, ClassLabel::A);
  CHECK(truth.total_spikes() == 0);
  const auto filtered = dsp::bandpass_filter(raw, dsp::FilterSpec{});
  std::vector<double> sigma;
  for (int c = 0; c < filtered.meta.n_channels; ++c) sigma.push_back(dsp::estimate_noise_sigma(filtered.channel(c)));
  const auto ev = spikes::detect_spikes(test_support::whole(filtered), {}, sigma);
  const double rate = static_cast<double>(ev.size()) / (g.duration_s * g.n_channels);
  CHECK(rate < 0.1);
}

TEST_CASE("sigma list must match the channel count") {
  const auto rec = test_support::make_recording(2, 1000);
  const std::vector<double> sigma{1.0};
  CHECK_THROWS_AS(spikes::detect_spikes(test_support::whole(rec), {}, sigma), ConfigError);
  spikes::DetectionConfig bad;
  bad.threshold_multiplier = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
