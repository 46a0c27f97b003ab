#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "framec/errors.hpp"
#include "framec/features.hpp"
#include "framec/synthgen.hpp"
#include "support.hpp"

using namespace framec;
using test_support::event;

namespace {

constexpr double kFs = 12500.0;

spikes::Waveform triangle(double peak, int half_base) {
  spikes::Waveform w{};
  for (int k = -half_base; k <= half_base; ++k)
    w[50 + k] = static_cast<float>(peak * (1.0 - std::abs(k) / static_cast<double>(half_base)));
  return w;
}

std::vector<spikes::SpikeEvent> channel_train(int ch, const std::vector<double>& times) {
  std::vector<spikes::SpikeEvent> ev;
  for (double t : times) ev.push_back(event(ch, t));
  return ev;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("amplitude examples") {
  spikes::Waveform w{};
  w[50] = -150.0f;
  CHECK(features::spike_amplitude(w) == 150.0);

  spikes::Waveform off;
  off.fill(-50.0f);
  off[50] = -150.0f;
  CHECK(features::spike_amplitude(off) == 100.0);
}

TEST_CASE("amplitude of a noisy template stays within three baseline standard errors") {
  const double sigma = 20.0;
  const auto tmpl = synth::make_template(0.0004, -200.0, kFs);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, sigma);
  int inside = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    spikes::Waveform w = tmpl;
    for (int k = 0; k < 100; ++k)
      if (k != 50) w[k] += static_cast<float>(nd(rng));
    if (std::abs(features::spike_amplitude(w) - 200.0) <= 3.0 * sigma / std::sqrt(20.0)) ++inside;
  }
  CHECK(inside >= 0.95 * trials);
}

TEST_CASE("baseline is the median of the first twenty samples") {
  spikes::Waveform w{};
  for (int k = 0; k < 20; ++k) w[k] = static_cast<float>(k);
  w[50] = 100.0f;
  CHECK(features::waveform_baseline(w) == 9.5);
}

TEST_CASE("duration closed forms") {
  CHECK(features::spike_duration(triangle(-120.0, 10), kFs) == doctest::Approx(10 / kFs).epsilon(1e-9));
  CHECK(features::spike_duration(triangle(80.0, 6), kFs) == doctest::Approx(6 / kFs).epsilon(1e-9));

  spikes::Waveform rect{};
  for (int k = 49; k <= 52; ++k) rect[k] = -90.0f;
  CHECK(std::abs(features::spike_duration(rect, kFs) - 4 / kFs) <= 1 / kFs);

  spikes::Waveform flat{};
  CHECK(features::spike_duration(flat, kFs) == 0.0);
}

TEST_CASE("duration of a sampled gaussian is its full width at half maximum") {
  for (double s : {2.0, 3.5, 6.0}) {
    spikes::Waveform w{};
    for (int k = 0; k < 100; ++k) w[k] = static_cast<float>(-100.0 * std::exp(-(k - 50.0) * (k - 50.0) / (2 * s * s)));
    const double fwhm = 2.0 * std::sqrt(2.0 * std::log(2.0)) * s;
    CHECK(features::spike_duration(w, kFs) * kFs == doctest::Approx(fwhm).epsilon(0.03));
  }
}

TEST_CASE("duration clamps to the window edges") {
  spikes::Waveform w;
  w.fill(0.0f);
  for (int k = 30; k < 100; ++k) w[k] = -100.0f;
  // no crossing on the right: clamped to the last sample
  CHECK(features::spike_duration(w, kFs) == doctest::Approx((99 - 29.5) / kFs));
}

TEST_CASE("amplitude is offset invariant and duration is scale invariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double width = std::uniform_real_distribution<double>(0.0003, 0.001)(rng);
    spikes::Waveform w = synth::make_template(width, -150.0, kFs);
    for (auto& v : w) v += static_cast<float>(nd(rng));
    spikes::Waveform shifted = w, scaled = w;
    const double c = std::uniform_real_distribution<double>(-80, 80)(rng);
    const double k = std::uniform_real_distribution<double>(0.2, 5)(rng) * (trial % 2 ? 1 : -1);
    for (int i = 0; i < 100; ++i) {
      shifted[i] = static_cast<float>(w[i] + c);
      scaled[i] = static_cast<float>(w[i] * k);
    }
    CHECK(features::spike_amplitude(shifted) == doctest::Approx(features::spike_amplitude(w)).epsilon(1e-4));
    CHECK(features::spike_duration(scaled, kFs) == doctest::Approx(features::spike_duration(w, kFs)).epsilon(1e-4));
  }
}

TEST_CASE("ISI examples") {
  auto one = channel_train(0, {1.0, 1.5, 2.0});
  CHECK(features::inter_spike_intervals(one, 10.0) == std::vector<double>{0.5, 0.5, 8.0});

  auto single = channel_train(0, {3.0});
  CHECK(features::inter_spike_intervals(single, 10.0) == std::vector<double>{7.0});

  std::vector<spikes::SpikeEvent> mixed{event(0, 1.0), event(1, 1.1), event(0, 1.4)};
  const auto isi = features::inter_spike_intervals(mixed, 10.0);
  CHECK(isi[0] == doctest::Approx(0.4));
  CHECK(isi[1] == doctest::Approx(8.9));
  CHECK(isi[2] == doctest::Approx(8.6));

  CHECK(features::inter_spike_intervals({}, 10.0).empty());
}

TEST_CASE("spike_features aligns with the events") {
  std::vector<spikes::SpikeEvent> ev{event(0, 1.0), event(2, 2.0)};
  ev[0].waveform = triangle(-100.0, 10);
  ev[1].waveform = triangle(60.0, 4);
  const auto f = features::spike_features(ev, 5.0, kFs);
  REQUIRE(f.size() == 2);
  CHECK(f[0].amplitude_uV == 100.0);
  CHECK(f[1].amplitude_uV == 60.0);
  CHECK(f[0].isi_s == 4.0);
  CHECK(f[1].duration_s == doctest::Approx(4 / kFs));
}

TEST_CASE("burst examples") {
  const features::BurstConfig cfg;
  auto four = channel_train(3, {0.0, 0.005, 0.010, 0.015});
  const auto b = features::detect_bursts(four, cfg);
  REQUIRE(b.size() == 1);
  CHECK(b[0].channel == 3);
  CHECK(b[0].n_spikes == 4);
  CHECK(b[0].first_spike_idx == 0);
  CHECK(b[0].duration_s == doctest::Approx(0.015));
  CHECK(b[0].bsr == doctest::Approx(0.00375));

  CHECK(features::detect_bursts(channel_train(0, {0.0, 0.005, 0.010}), cfg).empty());
  CHECK(features::detect_bursts(channel_train(0, {0.0, 0.005, 0.014, 0.019, 0.024}), cfg).empty());

  features::BurstConfig inv;
  inv.bsr_inverse = true;
  CHECK(features::detect_bursts(four, inv)[0].bsr == doctest::Approx(4 / 0.015));
}

TEST_CASE("bursts are per channel and sorted by start") {
  std::vector<spikes::SpikeEvent> ev;
  for (int k = 0; k < 5; ++k) {
    ev.push_back(event(1, 0.100 + 0.004 * k));
    ev.push_back(event(0, 0.101 + 0.004 * k));
  }
  ev.push_back(event(0, 0.5));
  const auto b = features::detect_bursts(ev, {});
  REQUIRE(b.size() == 2);
  CHECK(b[0].channel == 1);
  CHECK(b[1].channel == 0);
  CHECK(b[1].first_spike_idx == 1);
  CHECK(b[0].n_spikes == 5);
  CHECK(b[1].n_spikes == 5);
}

TEST_CASE("burst properties on random trains") {
  std::mt19937_64 rng(21);
  const features::BurstConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<spikes::SpikeEvent> ev;
    std::vector<int> per_channel(3, 0);
    std::vector<double> t(3, 0.0);
    for (int i = 0; i < 300; ++i) {
      const int ch = std::uniform_int_distribution<int>(0, 2)(rng);
      // gaps well away from the 8 ms boundary so rounding cannot flip membership
      const double gap = std::bernoulli_distribution(0.6)(rng)
                             ? std::uniform_real_distribution<double>(0.001, 0.0075)(rng)
                             : std::uniform_real_distribution<double>(0.0085, 0.05)(rng);
      t[ch] += gap;
      ev.push_back(event(ch, t[ch]));
      ++per_channel[ch];
    }
    std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.peak_time_s < b.peak_time_s; });
    const auto bursts = features::detect_bursts(ev, cfg);

    std::vector<int> in_bursts(3, 0);
    for (const auto& b : bursts) {
      CHECK(b.n_spikes >= cfg.min_spikes);
      // bsr is duration / n; the product recovers the duration to rounding
      CHECK(b.bsr * b.n_spikes == doctest::Approx(b.duration_s).epsilon(4e-16).scale(0.0));
      in_bursts[b.channel] += b.n_spikes;
      // every intra-burst ISI is below the limit
      int seen = 0;
      double prev = -1;
      for (std::size_t i = b.first_spike_idx; i < ev.size() && seen < b.n_spikes; ++i) {
        if (ev[i].channel != b.channel) continue;
        if (seen > 0) CHECK(ev[i].peak_time_s - prev < cfg.min_isi_s);
        prev = ev[i].peak_time_s;
        ++seen;
      }
    }
    for (int c = 0; c < 3; ++c) CHECK(in_bursts[c] <= per_channel[c]);

    // uniform translation keeps membership
    auto moved = ev;
    const double shift = std::uniform_real_distribution<double>(0.0, 100.0)(rng);
    for (auto& e : moved) e.peak_time_s += shift;
    const auto bursts2 = features::detect_bursts(moved, cfg);
    REQUIRE(bursts2.size() == bursts.size());
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      CHECK(bursts2[i].first_spike_idx == bursts[i].first_spike_idx);
      CHECK(bursts2[i].n_spikes == bursts[i].n_spikes);
      CHECK(bursts2[i].channel == bursts[i].channel);
    }
  }
}

TEST_CASE("burst config validation") {
  features::BurstConfig c;
  c.min_spikes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.min_isi_s = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mean firing rate") {
  const std::vector<std::int64_t> zeros{0, 0, 0};
  CHECK(features::mean_firing_rate(zeros, 300.0) == 0.0);
  const std::vector<std::int64_t> counts{300, 600};
  CHECK(features::mean_firing_rate(counts, 300.0) == 1.5);
  CHECK_THROWS_AS(features::mean_firing_rate(counts, 0.0), DataError);
}

TEST_CASE("mean firing rate of the 5 Hz generator") {
  synth::GenConfig g;
  g.class_a.burst_prob = 0.0;
  g.seed = 5;
  const auto [rec, truth] = synth::generate_recording(g, ClassLabel::A);
  std::vector<std::int64_t> counts;
  for (const auto& ch : truth.spike_times_s) counts.push_back(static_cast<std::int64_t>(ch.size()));
  CHECK(std::abs(features::mean_firing_rate(counts, g.duration_s) - 5.0) <= 0.3);
}

}  // TEST_SUITE
