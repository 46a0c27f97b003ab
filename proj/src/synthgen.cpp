#include "framec/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "framec/errors.hpp"
#include "framec/features.hpp"

namespace framec::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void CellClassParams::validate() const {
  if (!(template_half_width_s > 0.0)) throw ConfigError("template_half_width_s must be positive");
  if (!(firing_rate_hz >= 0.0)) throw ConfigError("firing_rate_hz must be >= 0");
  if (!(burst_prob >= 0.0 && burst_prob <= 1.0)) throw ConfigError("burst_prob must lie in [0,1]");
  if (burst_n_spikes < 1) throw ConfigError("burst_n_spikes must be >= 1");
  if (!(burst_isi_s > 0.0)) throw ConfigError("burst_isi_s must be positive");
}

GenConfig::GenConfig() {
  class_a.template_half_width_s = 0.0004;
  class_b.template_half_width_s = 0.0009;
}

void GenConfig::validate() const {
  if (n_channels < 1) throw ConfigError("n_channels must be >= 1");
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(sampling_rate_hz > 0.0)) throw ConfigError("sampling_rate_hz must be positive");
  if (!(noise_sigma_uV >= 0.0)) throw ConfigError("noise_sigma_uV must be >= 0");
  if (!(amplitude_spread >= 0.0 && amplitude_spread < 1.0))
    throw ConfigError("amplitude_spread must lie in [0, 1)");
  class_a.validate();
  class_b.validate();
}

std::size_t GroundTruth::total_spikes() const {
  std::size_t n = 0;
  for (const auto& ch : spike_times_s) n += ch.size();
  return n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

spikes::Waveform dog_shape(double sigma_samples, double peak_uV) {
  // Negative lobe at the peak plus a tight positive rebound. The rebound keeps
  // band-passed side lobes of wide spikes under the 5 sigma threshold.
  constexpr double kReboundRatio = 0.51;
  const double s2 = 0.56 * sigma_samples;
  const double offset = 1.13 * sigma_samples;
  std::array<double, spikes::kWaveformLength> raw;
  for (int i = 0; i < spikes::kWaveformLength; ++i) {
    const double u = i - spikes::kPeakOffset;
    raw[i] = std::exp(-u * u / (2.0 * sigma_samples * sigma_samples)) -
             kReboundRatio * std::exp(-(u - offset) * (u - offset) / (2.0 * s2 * s2));
  }
  const double scale = peak_uV / raw[spikes::kPeakOffset];
  spikes::Waveform w;
  for (int i = 0; i < spikes::kWaveformLength; ++i) w[i] = static_cast<float>(raw[i] * scale);
  return w;
}

}  // namespace

spikes::Waveform make_template(double half_width_s, double peak_uV, double fs) {
  const double target = half_width_s * fs;  // samples
  if (!(target >= 2.0)) throw ConfigError("template half-width must span at least 2 samples");
  if (target > 40.0) throw ConfigError("template half-width does not fit the 100-sample window");
  // The measured half-width grows monotonically with the lobe sigma; bisect on it.
  auto measured = [&](double s) {
    return features::spike_duration(dog_shape(s, peak_uV == 0.0 ? -1.0 : peak_uV), fs) * fs;
  };
  double lo = 0.2, hi = 30.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (measured(mid) < target ? lo : hi) = mid;
  }
  return dog_shape(0.5 * (lo + hi), peak_uV);
}

template <class Rng>
std::vector<double> spike_train(const CellClassParams& p, double duration_s, Rng& rng) {
  std::vector<double> raw;
  if (p.firing_rate_hz > 0.0) {
    std::exponential_distribution<double> gap(p.firing_rate_hz);
    std::bernoulli_distribution burst(p.burst_prob);
    double t = gap(rng);
    while (t < duration_s) {
      if (burst(rng)) {
        for (int k = 0; k < p.burst_n_spikes; ++k) raw.push_back(t + k * p.burst_isi_s);
      } else {
        raw.push_back(t);
      }
      t += gap(rng);
    }
  }
  std::sort(raw.begin(), raw.end());
  std::vector<double> kept;
  for (double t : raw) {
    if (t >= duration_s) continue;
    if (!kept.empty() && t - kept.back() < kRefractory_s) continue;
    kept.push_back(t);
  }
  return kept;
}

template std::vector<double> spike_train(const CellClassParams&, double, std::mt19937_64&);

std::pair<io::Recording, GroundTruth> generate_recording(const GenConfig& cfg, ClassLabel label,
                                                         const std::string& recording_id,
                                                         const std::string& well_id) {
  cfg.validate();
  const CellClassParams& p = cfg.params(label);
  const double fs = cfg.sampling_rate_hz;

  io::Recording rec;
  rec.meta.recording_id = recording_id;
  rec.meta.well_id = well_id;
  rec.meta.class_label = label;
  rec.meta.sampling_rate_hz = fs;
  rec.meta.n_channels = cfg.n_channels;
  rec.meta.n_samples = std::llround(fs * cfg.duration_s);
  rec.meta.duration_s = cfg.duration_s;
  rec.samples.assign(static_cast<std::size_t>(cfg.n_channels) * rec.meta.n_samples, 0.0f);

  GroundTruth truth;
  truth.class_label = label;
  const spikes::Waveform tmpl = make_template(p.template_half_width_s, p.template_peak_uV, fs);
  const std::uint64_t base = mix_seed(cfg.seed, hash_string(recording_id));
  const std::int64_t n = rec.meta.n_samples;

  std::vector<double> buf(static_cast<std::size_t>(n));
  for (int c = 0; c < cfg.n_channels; ++c) {
    const auto salt = 3 * static_cast<std::uint64_t>(c);
    std::mt19937_64 spike_rng(mix_seed(base, salt));
    std::mt19937_64 noise_rng(mix_seed(base, salt + 1));
    std::mt19937_64 scale_rng(mix_seed(base, salt + 2));
    const double scale = std::uniform_real_distribution<double>(
        1.0 - cfg.amplitude_spread, 1.0 + cfg.amplitude_spread)(scale_rng);

    std::vector<double> times;
    for (double t : spike_train(p, cfg.duration_s, spike_rng)) {
      const std::int64_t idx = std::llround(t * fs);
      if (idx >= n) continue;
      times.push_back(static_cast<double>(idx) / fs);
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& v : buf) v = cfg.noise_sigma_uV * noise(noise_rng);
    for (double t : times) {
      const std::int64_t idx = std::llround(t * fs);
      for (int k = 0; k < spikes::kWaveformLength; ++k) {
        const std::int64_t j = idx - spikes::kPeakOffset + k;
        if (j >= 0 && j < n) buf[static_cast<std::size_t>(j)] += scale * tmpl[k];
      }
    }
    auto out = rec.channel(c);
    for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<float>(buf[i]);
    truth.spike_times_s.push_back(std::move(times));
  }
  return {std::move(rec), std::move(truth)};
}

std::pair<io::Recording, GroundTruth> generate_recording(const GenConfig& cfg, ClassLabel label) {
  return generate_recording(cfg, label, label == ClassLabel::A ? "rec_a" : "rec_b",
                            label == ClassLabel::A ? "A1" : "E1");
}

char well_row_for(ClassLabel label, int well_index) {
  static constexpr char kCycle[] = {'A', 'E', 'B', 'F', 'C', 'D'};
  return kCycle[(well_index + to_int(label)) % 6];
}

void write_truth(const GroundTruth& truth, const fs::path& dir) {
  json j;
  j["class_label"] = to_int(truth.class_label);
  j["spike_times_s"] = truth.spike_times_s;
  io::write_text_file(dir / "truth.json", j.dump() + "\n");
}

GroundTruth read_truth(const fs::path& dir) {
  GroundTruth t;
  try {
    const json j = json::parse(io::read_text_file(dir / "truth.json"));
    t.class_label = label_from_int(j.at("class_label").get<int>());
    t.spike_times_s = j.at("spike_times_s").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw FormatError("truth.json: " + std::string(e.what()));
  }
  return t;
}

io::DatasetManifest generate_dataset(const GenConfig& cfg, int wells_per_class,
                                     const fs::path& out_dir) {
  if (wells_per_class < 1) throw ConfigError("wells_per_class must be >= 1");
  cfg.validate();
  io::DatasetManifest manifest;
  manifest.generator_seed = cfg.seed;
  std::map<char, int> used_columns;
  int index = 0;
  for (int j = 0; j < wells_per_class; ++j) {
    for (ClassLabel label : {ClassLabel::A, ClassLabel::B}) {
      const char row = well_row_for(label, j);
      const std::string well = std::string(1, row) + std::to_string(++used_columns[row]);
      char id[32];
      std::snprintf(id, sizeof(id), "rec_%03d", index++);
      auto [rec, truth] = generate_recording(cfg, label, id, well);
      io::write_recording(rec, out_dir / id);
      write_truth(truth, out_dir / id);
      manifest.entries.push_back({id, id, well, label});
    }
  }
  io::write_manifest(manifest, out_dir);
  return manifest;
}

}  // namespace framec::synth
