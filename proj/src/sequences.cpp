#include "framec/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "framec/errors.hpp"

namespace framec::seq {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::V1_waveform: return "V1";
    case Variant::V2_features: return "V2";
    case Variant::V3_combined: return "V3";
    case Variant::baseline_binned: return "baseline_binned";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "V1" || s == "V1_waveform") return Variant::V1_waveform;
  if (s == "V2" || s == "V2_features") return Variant::V2_features;
  if (s == "V3" || s == "V3_combined") return Variant::V3_combined;
  if (s == "baseline" || s == "baseline_binned") return Variant::baseline_binned;
  throw ConfigError("unknown variant '" + s + "'");
}

void SequenceConfig::validate() const {
  if (len_spikes <= 0 || len_bursts <= 0) throw ConfigError("sequence lengths must be positive");
  if (!(bin_width_s > 0.0)) throw ConfigError("bin_width_s must be positive");
  const auto& known = handcrafted_feature_names();
  for (const auto& f : drop_features)
    if (std::find(known.begin(), known.end(), f) == known.end())
      throw ConfigError("unknown feature '" + f + "'");
}

namespace {

bool dropped(const SequenceConfig& cfg, const std::string& name) {
  return std::find(cfg.drop_features.begin(), cfg.drop_features.end(), name) !=
         cfg.drop_features.end();
}

}  // namespace

std::vector<std::string> spike_row_names(const SequenceConfig& cfg) {
  std::vector<std::string> rows;
  if (cfg.variant == Variant::baseline_binned) return {"spike"};
  if (cfg.variant == Variant::V1_waveform || cfg.variant == Variant::V3_combined)
    for (int i = 0; i < spikes::kWaveformLength; ++i) rows.push_back("w" + std::to_string(i));
  if (cfg.variant == Variant::V2_features || cfg.variant == Variant::V3_combined)
    for (const char* f : {"amplitude", "isi", "duration"})
      if (!dropped(cfg, f)) rows.emplace_back(f);
  return rows;
}

std::vector<std::string> burst_row_names(const SequenceConfig& cfg) {
  std::vector<std::string> rows;
  if (!cfg.include_bursts || cfg.variant == Variant::baseline_binned) return rows;
  for (const char* f : {"burst_duration", "n_spikes_per_burst", "bsr"})
    if (!dropped(cfg, f)) rows.emplace_back(f);
  return rows;
}

std::vector<std::uint8_t> build_binned_baseline(std::span<const spikes::SpikeEvent> events,
                                                double window_s, const SequenceConfig& cfg) {
  if (!(cfg.bin_width_s > 0.0)) throw ConfigError("bin_width_s must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(window_s / cfg.bin_width_s - 1e-9));
  std::vector<std::uint8_t> bins(n, 0);
  for (const auto& e : events) {
    const auto b = static_cast<std::int64_t>(std::floor(e.peak_time_s / cfg.bin_width_s + 1e-9));
    if (b >= 0 && static_cast<std::size_t>(b) < n) bins[static_cast<std::size_t>(b)] = 1;
  }
  return bins;
}

FeatureSequence build_sequence(const SegmentData& seg, const SequenceConfig& cfg) {
  cfg.validate();
  FeatureSequence out;
  out.label = seg.label;
  out.well_id = seg.well_id;
  out.parent_id = seg.parent_id;
  out.start_s = seg.start_s;
  out.spike_rows = spike_row_names(cfg);

  if (cfg.variant == Variant::baseline_binned) {
    const auto bins = build_binned_baseline(seg.events, seg.window_s, cfg);
    out.spikes = Matrix(1, static_cast<int>(bins.size()));
    for (std::size_t i = 0; i < bins.size(); ++i) out.spikes.data[i] = bins[i];
    out.spike_valid = out.spikes.cols;
    return out;
  }

  if (seg.features.size() != seg.events.size())
    throw DataError("segment features are not aligned with its events");
  const int d = static_cast<int>(out.spike_rows.size());
  out.spikes = Matrix(d, cfg.len_spikes);
  out.spike_valid = std::min<int>(static_cast<int>(seg.events.size()), cfg.len_spikes);
  const bool waveform = cfg.variant != Variant::V2_features;
  for (int t = 0; t < out.spike_valid; ++t) {
    int r = 0;
    if (waveform)
      for (float v : seg.events[t].waveform) out.spikes.at(r++, t) = v;
    if (cfg.variant != Variant::V1_waveform) {
      const auto& f = seg.features[t];
      if (!dropped(cfg, "amplitude")) out.spikes.at(r++, t) = static_cast<float>(f.amplitude_uV);
      if (!dropped(cfg, "isi")) out.spikes.at(r++, t) = static_cast<float>(f.isi_s);
      if (!dropped(cfg, "duration")) out.spikes.at(r++, t) = static_cast<float>(f.duration_s);
    }
  }

  out.burst_rows = burst_row_names(cfg);
  if (cfg.include_bursts) {
    Matrix m(static_cast<int>(out.burst_rows.size()), cfg.len_bursts);
    out.burst_valid = std::min<int>(static_cast<int>(seg.bursts.size()), cfg.len_bursts);
    for (int t = 0; t < out.burst_valid; ++t) {
      const auto& b = seg.bursts[t];
      int r = 0;
      if (!dropped(cfg, "burst_duration")) m.at(r++, t) = static_cast<float>(b.duration_s);
      if (!dropped(cfg, "n_spikes_per_burst")) m.at(r++, t) = static_cast<float>(b.n_spikes);
      if (!dropped(cfg, "bsr")) m.at(r++, t) = static_cast<float>(b.bsr);
    }
    out.bursts = std::move(m);
  }
  return out;
}

namespace {

Matrix drop_matrix_rows(const Matrix& m, const std::vector<std::string>& names,
                        const std::set<std::string>& drop, std::vector<std::string>& kept_names) {
  std::vector<int> keep;
  kept_names.clear();
  for (int r = 0; r < m.rows; ++r)
    if (!drop.contains(names[r])) {
      keep.push_back(r);
      kept_names.push_back(names[r]);
    }
  Matrix out(static_cast<int>(keep.size()), m.cols);
  for (int c = 0; c < m.cols; ++c)
    for (std::size_t k = 0; k < keep.size(); ++k) out.at(static_cast<int>(k), c) = m.at(keep[k], c);
  return out;
}

}  // namespace

FeatureSequence drop_rows(const FeatureSequence& s, std::span<const std::string> names) {
  std::set<std::string> drop(names.begin(), names.end());
  for (const auto& n : drop) {
    const bool present = std::find(s.spike_rows.begin(), s.spike_rows.end(), n) != s.spike_rows.end() ||
                         std::find(s.burst_rows.begin(), s.burst_rows.end(), n) != s.burst_rows.end();
    if (!present) throw ConfigError("feature '" + n + "' is not present in this sequence");
  }
  FeatureSequence out = s;
  out.spikes = drop_matrix_rows(s.spikes, s.spike_rows, drop, out.spike_rows);
  if (s.bursts) out.bursts = drop_matrix_rows(*s.bursts, s.burst_rows, drop, out.burst_rows);
  return out;
}

namespace {

void accumulate_stats(const Matrix& m, int valid, std::vector<double>& sum, std::vector<double>& count) {
  for (int c = 0; c < valid; ++c)
    for (int r = 0; r < m.rows; ++r) sum[r] += m.at(r, c);
  for (int r = 0; r < m.rows; ++r) count[r] += valid;
}

void finish_stats(std::span<const FeatureSequence> train, bool burst, std::vector<double>& mean,
                  std::vector<double>& stdev) {
  const int rows = burst ? train.front().bursts->rows : train.front().spikes.rows;
  std::vector<double> sum(rows, 0.0), count(rows, 0.0);
  for (const auto& s : train) {
    const Matrix& m = burst ? *s.bursts : s.spikes;
    if (m.rows != rows) throw DataError("training sequences have inconsistent dimensions");
    accumulate_stats(m, burst ? s.burst_valid : s.spike_valid, sum, count);
  }
  mean.assign(rows, 0.0);
  for (int r = 0; r < rows; ++r) mean[r] = count[r] > 0 ? sum[r] / count[r] : 0.0;
  std::vector<double> ss(rows, 0.0);
  for (const auto& s : train) {
    const Matrix& m = burst ? *s.bursts : s.spikes;
    const int valid = burst ? s.burst_valid : s.spike_valid;
    for (int c = 0; c < valid; ++c)
      for (int r = 0; r < rows; ++r) {
        const double dv = m.at(r, c) - mean[r];
        ss[r] += dv * dv;
      }
  }
  stdev.assign(rows, kStdFloor);
  for (int r = 0; r < rows; ++r)
    if (count[r] > 0) stdev[r] = std::max(kStdFloor, std::sqrt(ss[r] / count[r]));
}

template <class Fn>
Matrix transform_valid(const Matrix& m, int valid, const std::vector<double>& mean,
                       const std::vector<double>& stdev, Fn fn) {
  if (static_cast<int>(mean.size()) != m.rows)
    throw DataError("normalisation statistics do not match sequence dimension");
  Matrix out = m;
  for (int c = 0; c < valid; ++c)
    for (int r = 0; r < m.rows; ++r) out.at(r, c) = static_cast<float>(fn(m.at(r, c), mean[r], stdev[r]));
  return out;
}

}  // namespace

NormStats fit_norm_stats(std::span<const FeatureSequence> train) {
  if (train.empty()) throw DataError("cannot fit normalisation on an empty training set");
  NormStats st;
  finish_stats(train, false, st.spike_mean, st.spike_std);
  if (train.front().bursts) finish_stats(train, true, st.burst_mean, st.burst_std);
  return st;
}

FeatureSequence apply_norm(const FeatureSequence& s, const NormStats& st) {
  auto z = [](double x, double m, double sd) { return (x - m) / sd; };
  FeatureSequence out = s;
  out.spikes = transform_valid(s.spikes, s.spike_valid, st.spike_mean, st.spike_std, z);
  if (s.bursts) out.bursts = transform_valid(*s.bursts, s.burst_valid, st.burst_mean, st.burst_std, z);
  return out;
}

FeatureSequence invert_norm(const FeatureSequence& s, const NormStats& st) {
  auto inv = [](double x, double m, double sd) { return x * sd + m; };
  FeatureSequence out = s;
  out.spikes = transform_valid(s.spikes, s.spike_valid, st.spike_mean, st.spike_std, inv);
  if (s.bursts) out.bursts = transform_valid(*s.bursts, s.burst_valid, st.burst_mean, st.burst_std, inv);
  return out;
}

std::vector<float> flatten(const FeatureSequence& s) {
  std::vector<float> out;
  auto append = [&](const Matrix& m) {
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) out.push_back(m.at(r, c));
  };
  append(s.spikes);
  if (s.bursts) append(*s.bursts);
  return out;
}

}  // namespace framec::seq
