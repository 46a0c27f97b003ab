#include "framec/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <atomic>
#include <thread>

#include "framec/errors.hpp"

namespace framec::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  c.generator.seed = seed;
  c.model.seed = seed;
  c.split_plan.seed = seed;
  return c;
}

void ExperimentConfig::validate() const {
  split.validate();
  detection.validate();
  burst.validate();
  sequence.validate();
  generator.validate();
  model.validate();
  split_plan.validate();
  filter.validate(generator.sampling_rate_hz);
  if (wells_per_class < 1) throw ConfigError("wells_per_class must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (compare_archs.empty()) throw ConfigError("compare_archs must not be empty");
}

std::vector<std::string> ExperimentConfig::warnings() const {
  std::vector<std::string> w;
  const double rate = std::max(generator.class_a.firing_rate_hz, generator.class_b.firing_rate_hz);
  const double expected = rate * generator.n_channels * split.window_s;
  if (expected > sequence.len_spikes)
    w.push_back("expected ~" + std::to_string(static_cast<long long>(expected)) +
                " spikes per window exceeds len_spikes=" + std::to_string(sequence.len_spikes) +
                "; later spikes will be truncated");
  if (sequence.include_bursts && sequence.variant == seq::Variant::V1_waveform)
    w.push_back("include_bursts has no handcrafted spike rows to accompany it under V1");
  return w;
}

namespace {

/// Reads known keys into fields and rejects anything else.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json rows_json(const std::set<char>& rows) {
  json a = json::array();
  for (char r : rows) a.push_back(std::string(1, r));
  return a;
}

std::set<char> rows_from(const std::vector<std::string>& v) {
  std::set<char> out;
  for (const auto& s : v) {
    if (s.size() != 1 || s[0] < 'A' || s[0] > 'F') throw ConfigError("well rows must be single letters A..F");
    out.insert(s[0]);
  }
  return out;
}

json cell_json(const synth::CellClassParams& p) {
  return {{"template_half_width_s", p.template_half_width_s}, {"template_peak_uV", p.template_peak_uV},
          {"firing_rate_hz", p.firing_rate_hz},               {"burst_prob", p.burst_prob},
          {"burst_n_spikes", p.burst_n_spikes},               {"burst_isi_s", p.burst_isi_s}};
}

void read_cell(const json& j, const std::string& where, synth::CellClassParams& p) {
  ObjectReader r(j, where);
  r.get("template_half_width_s", p.template_half_width_s);
  r.get("template_peak_uV", p.template_peak_uV);
  r.get("firing_rate_hz", p.firing_rate_hz);
  r.get("burst_prob", p.burst_prob);
  r.get("burst_n_spikes", p.burst_n_spikes);
  r.get("burst_isi_s", p.burst_isi_s);
  r.finish();
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["wells_per_class"] = c.wells_per_class;
  j["filter"] = {{"order", c.filter.order}, {"low_cut_hz", c.filter.low_cut_hz}, {"high_cut_hz", c.filter.high_cut_hz}, {"zero_phase", c.filter.zero_phase}};
  j["split"] = {{"window_s", c.split.window_s}, {"step_s", c.split.step_s}};
  j["detection"] = {{"threshold_multiplier", c.detection.threshold_multiplier},
                    {"dead_time_s", c.detection.dead_time_s},
                    {"peak_search_window_s", c.detection.peak_search_window_s}};
  j["burst"] = {{"min_isi_s", c.burst.min_isi_s}, {"min_spikes", c.burst.min_spikes}, {"bsr_inverse", c.burst.bsr_inverse}};
  j["sequence"] = {{"variant", seq::to_string(c.sequence.variant)},
                   {"len_spikes", c.sequence.len_spikes},
                   {"len_bursts", c.sequence.len_bursts},
                   {"include_bursts", c.sequence.include_bursts},
                   {"bin_width_s", c.sequence.bin_width_s},
                   {"drop_features", c.sequence.drop_features}};
  j["generator"] = {{"n_channels", c.generator.n_channels},
                    {"duration_s", c.generator.duration_s},
                    {"sampling_rate_hz", c.generator.sampling_rate_hz},
                    {"noise_sigma_uV", c.generator.noise_sigma_uV},
                    {"amplitude_spread", c.generator.amplitude_spread},
                    {"class_a", cell_json(c.generator.class_a)},
                    {"class_b", cell_json(c.generator.class_b)}};
  json m = model::to_json(c.model);
  m.erase("seed");
  m.erase("input_dim");
  m.erase("burst_dim");
  j["model"] = m;
  j["split_plan"] = {{"mode", c.split_plan.mode == eval::SplitMode::wellwise ? "wellwise" : "random"},
                     {"train_rows", rows_json(c.split_plan.train_rows)},
                     {"test_rows", rows_json(c.split_plan.test_rows)},
                     {"random_frac", c.split_plan.random_frac}};
  j["importance"] = {{"mode", eval::to_string(c.importance_mode)}, {"features", c.importance_features}};
  json archs = json::array();
  for (auto a : c.compare_archs) archs.push_back(model::to_string(a));
  j["compare_archs"] = archs;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "config");
  r.get("seed", c.seed);
  r.get("jobs", c.jobs);
  r.get("wells_per_class", c.wells_per_class);
  if (const json* f = r.child("filter")) {
    ObjectReader s(*f, "filter");
    s.get("order", c.filter.order);
    s.get("low_cut_hz", c.filter.low_cut_hz);
    s.get("high_cut_hz", c.filter.high_cut_hz);
    s.get("zero_phase", c.filter.zero_phase);
    s.finish();
  }
  if (const json* f = r.child("split")) {
    ObjectReader s(*f, "split");
    s.get("window_s", c.split.window_s);
    s.get("step_s", c.split.step_s);
    s.finish();
  }
  if (const json* f = r.child("detection")) {
    ObjectReader s(*f, "detection");
    s.get("threshold_multiplier", c.detection.threshold_multiplier);
    s.get("dead_time_s", c.detection.dead_time_s);
    s.get("peak_search_window_s", c.detection.peak_search_window_s);
    s.finish();
  }
  if (const json* f = r.child("burst")) {
    ObjectReader s(*f, "burst");
    s.get("min_isi_s", c.burst.min_isi_s);
    s.get("min_spikes", c.burst.min_spikes);
    s.get("bsr_inverse", c.burst.bsr_inverse);
    s.finish();
  }
  if (const json* f = r.child("sequence")) {
    ObjectReader s(*f, "sequence");
    std::string variant = seq::to_string(c.sequence.variant);
    s.get("variant", variant);
    c.sequence.variant = seq::variant_from_string(variant);
    s.get("len_spikes", c.sequence.len_spikes);
    s.get("len_bursts", c.sequence.len_bursts);
    s.get("include_bursts", c.sequence.include_bursts);
    s.get("bin_width_s", c.sequence.bin_width_s);
    s.get("drop_features", c.sequence.drop_features);
    s.finish();
  }
  if (const json* f = r.child("generator")) {
    ObjectReader s(*f, "generator");
    s.get("n_channels", c.generator.n_channels);
    s.get("duration_s", c.generator.duration_s);
    s.get("sampling_rate_hz", c.generator.sampling_rate_hz);
    s.get("noise_sigma_uV", c.generator.noise_sigma_uV);
    s.get("amplitude_spread", c.generator.amplitude_spread);
    if (const json* a = s.child("class_a")) read_cell(*a, "generator.class_a", c.generator.class_a);
    if (const json* b = s.child("class_b")) read_cell(*b, "generator.class_b", c.generator.class_b);
    s.finish();
  }
  if (const json* f = r.child("model")) {
    ObjectReader s(*f, "model");
    std::string arch = model::to_string(c.model.arch);
    s.get("arch", arch);
    c.model.arch = model::arch_from_string(arch);
    s.get("hidden", c.model.hidden);
    s.get("cnn_channels", c.model.cnn_channels);
    s.get("cnn_kernel", c.model.cnn_kernel);
    s.get("lr", c.model.lr);
    s.get("batch_size", c.model.batch_size);
    s.get("epochs", c.model.epochs);
    s.get("beta1", c.model.beta1);
    s.get("beta2", c.model.beta2);
    s.get("eps", c.model.eps);
    s.finish();
  }
  if (const json* f = r.child("split_plan")) {
    ObjectReader s(*f, "split_plan");
    std::string mode = "wellwise";
    s.get("mode", mode);
    if (mode == "wellwise") c.split_plan.mode = eval::SplitMode::wellwise;
    else if (mode == "random") c.split_plan.mode = eval::SplitMode::random;
    else throw ConfigError("split_plan.mode must be wellwise or random");
    std::vector<std::string> rows;
    if (f->contains("train_rows")) {
      s.get("train_rows", rows);
      c.split_plan.train_rows = rows_from(rows);
    }
    if (f->contains("test_rows")) {
      s.get("test_rows", rows);
      c.split_plan.test_rows = rows_from(rows);
    }
    s.get("random_frac", c.split_plan.random_frac);
    s.finish();
  }
  if (const json* f = r.child("importance")) {
    ObjectReader s(*f, "importance");
    std::string mode = eval::to_string(c.importance_mode);
    s.get("mode", mode);
    c.importance_mode = eval::importance_mode_from_string(mode);
    s.get("features", c.importance_features);
    s.finish();
  }
  if (const json* f = r.child("compare_archs")) {
    std::vector<std::string> archs;
    try {
      archs = f->get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("compare_archs: ") + e.what());
    }
    c.compare_archs.clear();
    for (const auto& a : archs) c.compare_archs.push_back(model::arch_from_string(a));
  }
  r.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg.resolved());
  j.erase("jobs");  // results do not depend on parallelism
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(synth::hash_string(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Preprocessing

std::vector<seq::SegmentData> preprocess_recording(const io::Recording& raw, const ExperimentConfig& cfg) {
  auto filtered = std::make_shared<const io::Recording>(dsp::bandpass_filter(raw, cfg.filter));
  const auto segments = dsp::time_split(filtered, cfg.split);
  std::vector<seq::SegmentData> out;
  out.reserve(segments.size());
  std::vector<double> sigma(static_cast<std::size_t>(raw.meta.n_channels));
  for (const auto& s : segments) {
    for (int c = 0; c < s.n_channels(); ++c) sigma[c] = dsp::estimate_noise_sigma(s.channel(c));
    seq::SegmentData d;
    d.parent_id = s.parent_id;
    d.well_id = s.well_id;
    d.label = s.class_label;
    d.start_s = s.start_s;
    d.window_s = s.window_s;
    d.sampling_rate_hz = s.sampling_rate_hz;
    d.events = spikes::detect_spikes(s, cfg.detection, sigma);
    d.features = features::spike_features(d.events, static_cast<double>(s.length) / s.sampling_rate_hz,
                                          s.sampling_rate_hz);
    d.bursts = features::detect_bursts(d.events, cfg.burst);
    out.push_back(std::move(d));
  }
  return out;
}

io::DatasetManifest SegmentStore::as_manifest() const {
  io::DatasetManifest m;
  for (const auto& r : recordings) m.entries.push_back({r.recording_id, r.recording_id, r.well_id, r.label});
  return m;
}

namespace {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string buf) : buf_(std::move(buf)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("events.bin is truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

constexpr int kStoreVersion = 1;

}  // namespace

void write_store(const SegmentStore& store, const fs::path& dir) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = kStoreVersion;
  j["config"] = store.config;
  j["config_hash"] = store.config_hash;
  j["recordings"] = json::array();
  for (const auto& r : store.recordings)
    j["recordings"].push_back({{"recording_id", r.recording_id}, {"well_id", r.well_id}, {"class_label", to_int(r.label)}});
  j["segments"] = json::array();
  ByteWriter w;
  for (const auto& s : store.segments) {
    j["segments"].push_back({{"parent_id", s.parent_id},
                             {"well_id", s.well_id},
                             {"class_label", to_int(s.label)},
                             {"start_s", s.start_s},
                             {"window_s", s.window_s},
                             {"sampling_rate_hz", s.sampling_rate_hz},
                             {"n_spikes", s.events.size()},
                             {"n_bursts", s.bursts.size()}});
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      const auto& e = s.events[i];
      w.u32(static_cast<std::uint32_t>(e.channel));
      w.u64(static_cast<std::uint64_t>(e.peak_index));
      w.u32(e.polarity == spikes::Polarity::negative ? 0u : 1u);
      w.f64(s.features[i].amplitude_uV);
      w.f64(s.features[i].isi_s);
      w.f64(s.features[i].duration_s);
      for (float v : e.waveform) w.f32(v);
    }
    for (const auto& b : s.bursts) {
      w.u32(static_cast<std::uint32_t>(b.channel));
      w.u32(static_cast<std::uint32_t>(b.first_spike_idx));
      w.u32(static_cast<std::uint32_t>(b.n_spikes));
      w.f64(b.start_s);
      w.f64(b.duration_s);
      w.f64(b.bsr);
    }
  }
  io::write_text_file(dir / "store.json", j.dump(1) + "\n");
  io::write_text_file(dir / "events.bin", w.bytes());
}

SegmentStore read_store(const fs::path& dir) {
  if (!fs::exists(dir / "store.json")) throw DataError("no segment store at " + dir.string());
  SegmentStore store;
  try {
    const json j = json::parse(io::read_text_file(dir / "store.json"));
    if (j.at("format_version").get<int>() != kStoreVersion) throw FormatError("unsupported store version");
    store.config = j.at("config");
    store.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& r : j.at("recordings"))
      store.recordings.push_back({r.at("recording_id").get<std::string>(), r.at("well_id").get<std::string>(),
                                  label_from_int(r.at("class_label").get<int>())});
    ByteReader rd(io::read_text_file(dir / "events.bin"));
    for (const auto& js : j.at("segments")) {
      seq::SegmentData s;
      s.parent_id = js.at("parent_id").get<std::string>();
      s.well_id = js.at("well_id").get<std::string>();
      s.label = label_from_int(js.at("class_label").get<int>());
      s.start_s = js.at("start_s").get<double>();
      s.window_s = js.at("window_s").get<double>();
      s.sampling_rate_hz = js.at("sampling_rate_hz").get<double>();
      const auto n_spikes = js.at("n_spikes").get<std::size_t>();
      const auto n_bursts = js.at("n_bursts").get<std::size_t>();
      for (std::size_t i = 0; i < n_spikes; ++i) {
        spikes::SpikeEvent e;
        e.channel = static_cast<int>(rd.u32());
        e.peak_index = static_cast<std::int64_t>(rd.u64());
        e.peak_time_s = static_cast<double>(e.peak_index) / s.sampling_rate_hz;
        e.polarity = rd.u32() == 0 ? spikes::Polarity::negative : spikes::Polarity::positive;
        features::SpikeFeatures f;
        f.amplitude_uV = rd.f64();
        f.isi_s = rd.f64();
        f.duration_s = rd.f64();
        for (float& v : e.waveform) v = rd.f32();
        s.events.push_back(e);
        s.features.push_back(f);
      }
      for (std::size_t i = 0; i < n_bursts; ++i) {
        features::Burst b;
        b.channel = static_cast<int>(rd.u32());
        b.first_spike_idx = static_cast<int>(rd.u32());
        b.n_spikes = static_cast<int>(rd.u32());
        b.start_s = rd.f64();
        b.duration_s = rd.f64();
        b.bsr = rd.f64();
        s.bursts.push_back(b);
      }
      store.segments.push_back(std::move(s));
    }
    if (!rd.done()) throw FormatError("events.bin has trailing bytes");
  } catch (const json::exception& e) {
    throw FormatError(std::string("store.json: ") + e.what());
  }
  return store;
}

std::vector<seq::FeatureSequence> build_sequences(std::span<const seq::SegmentData> segments,
                                                  const seq::SequenceConfig& cfg) {
  std::vector<seq::FeatureSequence> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(seq::build_sequence(s, cfg));
  return out;
}

TrainTest split_sequences(const SegmentStore& store, std::vector<seq::FeatureSequence> seqs,
                          const eval::SplitPlan& plan) {
  const auto split = eval::split_dataset(store.as_manifest(), plan);
  const std::set<std::string> train_ids(split.train_ids.begin(), split.train_ids.end());
  TrainTest tt;
  for (auto& s : seqs) (train_ids.contains(s.parent_id) ? tt.train : tt.test).push_back(std::move(s));
  return tt;
}

std::vector<std::string> available_features(const seq::SequenceConfig& cfg) {
  std::vector<std::string> out;
  const auto spike = seq::spike_row_names(cfg);
  const auto burst = seq::burst_row_names(cfg);
  for (const auto& f : seq::handcrafted_feature_names())
    if (std::find(spike.begin(), spike.end(), f) != spike.end() ||
        std::find(burst.begin(), burst.end(), f) != burst.end())
      out.push_back(f);
  return out;
}

// ---------------------------------------------------------------------------
// Tables

io::Table importance_table(const eval::ImportanceReport& rep, std::uint64_t seed, const std::string& hash) {
  io::Table t{{"feature", "acc_all", "acc_without", "importance", "mode", "seed", "config_hash"}, {}};
  const auto s = static_cast<std::int64_t>(seed);
  for (const auto& r : rep.ranked())
    t.add_row({r.feature, r.acc_all, r.acc_without, r.importance, eval::to_string(rep.mode), s, hash});
  t.add_row({std::string("all"), rep.acc_all, rep.acc_all, 0.0, eval::to_string(rep.mode), s, hash});
  return t;
}

io::Table train_report_table(const model::TrainReport& rep, const std::string& hash) {
  io::Table t{{"epoch", "loss", "train_accuracy", "seed", "config_hash"}, {}};
  for (std::size_t e = 0; e < rep.epochs.size(); ++e)
    t.add_row({static_cast<std::int64_t>(e + 1), rep.epochs[e].loss, rep.epochs[e].accuracy,
               static_cast<std::int64_t>(rep.seed), hash});
  return t;
}

io::Table flattened_table(std::span<const seq::FeatureSequence> seqs) {
  io::Table t{{"recording_id", "well_id", "class_label", "start_s"}, {}};
  if (seqs.empty()) return t;
  const std::size_t k = seq::flatten(seqs.front()).size();
  for (std::size_t i = 0; i < k; ++i) t.columns.push_back("v" + std::to_string(i));
  for (const auto& s : seqs) {
    std::vector<io::Cell> row{s.parent_id, s.well_id, static_cast<std::int64_t>(to_int(s.label)), s.start_s};
    for (float v : seq::flatten(s)) row.emplace_back(static_cast<double>(v));
    t.add_row(std::move(row));
  }
  return t;
}

io::Table spike_feature_table(std::span<const seq::SegmentData> segments) {
  io::Table t{{"recording_id", "segment_start_s", "channel", "peak_time_s", "amplitude_uV", "isi_s", "duration_s"}, {}};
  for (const auto& s : segments)
    for (std::size_t i = 0; i < s.events.size(); ++i)
      t.add_row({s.parent_id, s.start_s, static_cast<std::int64_t>(s.events[i].channel), s.events[i].peak_time_s,
                 s.features[i].amplitude_uV, s.features[i].isi_s, s.features[i].duration_s});
  return t;
}

io::Table burst_feature_table(std::span<const seq::SegmentData> segments) {
  io::Table t{{"recording_id", "segment_start_s", "channel", "start_s", "duration_s", "n_spikes", "bsr"}, {}};
  for (const auto& s : segments)
    for (const auto& b : s.bursts)
      t.add_row({s.parent_id, s.start_s, static_cast<std::int64_t>(b.channel), b.start_s, b.duration_s,
                 static_cast<std::int64_t>(b.n_spikes), b.bsr});
  return t;
}

// ---------------------------------------------------------------------------
// Commands

io::DatasetManifest cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  const auto manifest = synth::generate_dataset(cfg.generator, cfg.wells_per_class, out_dir);
  int n0 = 0, n1 = 0;
  for (const auto& e : manifest.entries) (to_int(e.class_label) ? n1 : n0)++;
  log << "simulated " << manifest.entries.size() << " recordings (" << n0 << " class 0, " << n1
      << " class 1) into " << out_dir.string() << "\n";
  for (const auto& e : manifest.entries)
    log << "  " << e.recording_id << "  well " << e.well_id << "  label " << to_int(e.class_label) << "\n";
  return manifest;
}

PreprocessSummary cmd_preprocess(const ExperimentConfig& config, const fs::path& dataset_dir,
                                 const fs::path& store_dir, std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  for (const auto& w : cfg.warnings()) log << "warning: " << w << "\n";
  const auto manifest = io::read_manifest(dataset_dir);

  std::vector<std::vector<seq::SegmentData>> per_rec(manifest.entries.size());
  std::vector<std::string> errors(manifest.entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.entries.size(); i = next++) {
      try {
        const auto rec = io::read_recording(dataset_dir / manifest.entries[i].path);
        per_rec[i] = preprocess_recording(rec, cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(1, manifest.entries.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw DataError(manifest.entries[i].recording_id + ": " + errors[i]);

  SegmentStore store;
  store.config = to_json(cfg);
  store.config_hash = config_hash(cfg);
  PreprocessSummary sum;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    store.recordings.push_back({e.recording_id, e.well_id, e.class_label});
    std::size_t spikes = 0, bursts = 0;
    for (auto& s : per_rec[i]) {
      spikes += s.events.size();
      bursts += s.bursts.size();
      store.segments.push_back(std::move(s));
    }
    log << e.recording_id << ": " << per_rec[i].size() << " segments, " << spikes << " spikes, " << bursts
        << " bursts\n";
    sum.segments += per_rec[i].size();
    sum.spikes += spikes;
    sum.bursts += bursts;
  }
  sum.recordings = manifest.entries.size();
  sum.d_spike = static_cast<int>(seq::spike_row_names(cfg.sequence).size());
  write_store(store, store_dir);
  log << "store: " << sum.segments << " segments, " << sum.spikes << " spikes, " << sum.bursts
      << " bursts, variant " << seq::to_string(cfg.sequence.variant) << " d_spike " << sum.d_spike << "\n";
  return sum;
}

namespace {

json norm_json(const seq::NormStats& n) {
  return {{"spike_mean", n.spike_mean}, {"spike_std", n.spike_std}, {"burst_mean", n.burst_mean}, {"burst_std", n.burst_std}};
}

seq::NormStats norm_from_json(const json& j) {
  seq::NormStats n;
  n.spike_mean = j.at("spike_mean").get<std::vector<double>>();
  n.spike_std = j.at("spike_std").get<std::vector<double>>();
  n.burst_mean = j.at("burst_mean").get<std::vector<double>>();
  n.burst_std = j.at("burst_std").get<std::vector<double>>();
  return n;
}

TrainTest load_split(const ExperimentConfig& cfg, const SegmentStore& store, const seq::SequenceConfig& sc) {
  return split_sequences(store, build_sequences(store.segments, sc), cfg.split_plan);
}

}  // namespace

model::TrainReport cmd_train(const ExperimentConfig& config, const fs::path& store_dir, const fs::path& out_dir,
                             std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  const SegmentStore store = read_store(store_dir);
  const TrainTest tt = load_split(cfg, store, cfg.sequence);
  if (tt.train.empty()) throw DataError("split leaves no training segments");
  const std::string hash = config_hash(cfg);

  const seq::NormStats norm = seq::fit_norm_stats(tt.train);
  std::vector<seq::FeatureSequence> tr, te;
  for (const auto& s : tt.train) tr.push_back(seq::apply_norm(s, norm));
  for (const auto& s : tt.test) te.push_back(seq::apply_norm(s, norm));
  model::ModelConfig mc = cfg.model;
  mc.input_dim = tr.front().spikes.rows;
  mc.burst_dim = tr.front().bursts ? tr.front().bursts->rows : 0;
  log << "training " << model::to_string(mc.arch) << " on " << tr.size() << " segments (" << te.size()
      << " held out), d_spike " << mc.input_dim << "\n";
  auto result = model::train(mc, tr, te);

  json extra = {{"config_hash", hash},
                {"seed", cfg.seed},
                {"variant", seq::to_string(cfg.sequence.variant)},
                {"norm", norm_json(norm)}};
  fs::create_directories(out_dir);
  model::save_checkpoint(result.model, extra, out_dir / "model.ckpt");
  const auto table = train_report_table(result.report, hash);
  io::export_table(table, out_dir / "train_report.csv");
  io::export_table(table, out_dir / "train_report.json");
  log << "final train accuracy " << io::format_number(result.report.final_train_accuracy)
      << ", held-out accuracy " << io::format_number(result.report.val_accuracy) << "\n";
  return result.report;
}

io::Table cmd_evaluate(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& store_dir,
                       const fs::path& out_path, std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  json extra;
  const model::Model m = model::load_checkpoint(checkpoint, &extra);
  const SegmentStore store = read_store(store_dir);
  const TrainTest tt = load_split(cfg, store, cfg.sequence);
  if (tt.test.empty()) throw DataError("test set is empty");
  const seq::NormStats norm = norm_from_json(extra.at("norm"));

  std::vector<seq::FeatureSequence> te;
  for (const auto& s : tt.test) te.push_back(seq::apply_norm(s, norm));
  const auto probs = model::predict(m, te);  // throws DataError on dimension mismatch
  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < te.size(); ++i) {
    preds.push_back(probs[i] >= 0.5);
    labels.push_back(to_int(te[i].label));
  }
  const double seg_acc = eval::accuracy(preds, labels);
  const auto votes = eval::vote_recordings(te, probs);
  const double rec_acc = eval::voted_accuracy(votes);

  const std::string hash = config_hash(cfg);
  io::Table t{{"variant", "arch", "segment_accuracy", "recording_accuracy", "n_segments", "n_recordings", "seed",
               "config_hash"},
              {}};
  t.add_row({seq::to_string(cfg.sequence.variant), model::to_string(m.config().arch), seg_acc, rec_acc,
             static_cast<std::int64_t>(te.size()), static_cast<std::int64_t>(votes.size()),
             static_cast<std::int64_t>(cfg.seed), hash});
  if (!out_path.empty()) io::export_table(t, out_path);
  log << "segment accuracy " << io::format_number(seg_acc) << ", voted recording accuracy "
      << io::format_number(rec_acc) << " over " << votes.size() << " recordings\n";
  return t;
}

io::Table cmd_importance(const ExperimentConfig& config, const fs::path& store_dir, const fs::path& out_path,
                         std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  if (cfg.sequence.variant != seq::Variant::V2_features && cfg.sequence.variant != seq::Variant::V3_combined)
    throw ConfigError("feature importance needs a variant with handcrafted features (V2 or V3), got " +
                      seq::to_string(cfg.sequence.variant));
  const SegmentStore store = read_store(store_dir);
  seq::SequenceConfig sc = cfg.sequence;
  sc.drop_features.clear();
  const TrainTest tt = load_split(cfg, store, sc);
  const auto features = cfg.importance_features.empty() ? available_features(sc) : cfg.importance_features;
  log << "feature importance (" << eval::to_string(cfg.importance_mode) << ") over " << features.size()
      << " features\n";
  const auto rep = eval::feature_importance(cfg.model, tt.train, tt.test, features, cfg.importance_mode, cfg.seed);
  const auto t = importance_table(rep, cfg.seed, config_hash(cfg));
  if (!out_path.empty()) io::export_table(t, out_path);
  for (const auto& r : rep.ranked()) log << "  " << r.feature << "  " << io::format_number(r.importance) << "\n";
  return t;
}

io::Table cmd_compare(const ExperimentConfig& config, const fs::path& store_dir, const fs::path& out_path,
                      std::ostream& log) {
  const ExperimentConfig cfg = config.resolved();
  cfg.validate();
  const SegmentStore store = read_store(store_dir);
  const std::string hash = config_hash(cfg);

  // The binned baseline is always a CNN pipeline, so a cnn1d column is always present.
  std::vector<model::Arch> archs = cfg.compare_archs;
  if (std::find(archs.begin(), archs.end(), model::Arch::cnn1d) == archs.end()) archs.push_back(model::Arch::cnn1d);
  io::Table t{{"method"}, {}};
  for (auto a : archs) t.columns.push_back(model::to_string(a));
  t.columns.push_back("seed");
  t.columns.push_back("config_hash");

  const std::vector<std::pair<std::string, seq::Variant>> methods{{"baseline_binned", seq::Variant::baseline_binned},
                                                                  {"V1", seq::Variant::V1_waveform},
                                                                  {"V2", seq::Variant::V2_features},
                                                                  {"V3", seq::Variant::V3_combined}};
  for (const auto& [name, variant] : methods) {
    seq::SequenceConfig sc = cfg.sequence;
    sc.variant = variant;
    const TrainTest tt = load_split(cfg, store, sc);
    std::vector<io::Cell> row{name};
    for (auto arch : archs) {
      if (variant == seq::Variant::baseline_binned && arch != model::Arch::cnn1d) {
        row.emplace_back(std::string("N/A"));
        continue;
      }
      model::ModelConfig mc = cfg.model;
      mc.arch = arch;
      const double acc = eval::fit_and_score(mc, tt.train, tt.test).test_accuracy;
      log << name << " / " << model::to_string(arch) << ": " << io::format_number(acc) << "\n";
      row.emplace_back(acc);
    }
    row.emplace_back(static_cast<std::int64_t>(cfg.seed));
    row.emplace_back(hash);
    t.add_row(std::move(row));
  }
  if (!out_path.empty()) io::export_table(t, out_path);
  return t;
}

}  // namespace framec::pipeline
