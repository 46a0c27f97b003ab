#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "framec/dsp.hpp"
#include "framec/eval.hpp"
#include "framec/features.hpp"
#include "framec/io_store.hpp"
#include "framec/models.hpp"
#include "framec/sequences.hpp"
#include "framec/spikes.hpp"
#include "framec/synthgen.hpp"

namespace framec::pipeline {

/// Every stage's configuration plus the global seed. The global seed is
/// copied into the generator, model and split seeds by `resolved()`.
struct ExperimentConfig {
  dsp::FilterSpec filter;
  dsp::SplitSpec split;
  spikes::DetectionConfig detection;
  features::BurstConfig burst;
  seq::SequenceConfig sequence;
  synth::GenConfig generator;
  model::ModelConfig model;
  eval::SplitPlan split_plan;
  int wells_per_class = 2;
  std::uint64_t seed = 0;
  int jobs = 1;
  eval::ImportanceMode importance_mode = eval::ImportanceMode::retrain_ablation;
  std::vector<std::string> importance_features;  // empty: every handcrafted feature of the variant
  std::vector<model::Arch> compare_archs{model::Arch::lstm, model::Arch::cnn1d};

  ExperimentConfig resolved() const;
  void validate() const;
  /// Non-fatal consistency notes (e.g. len_spikes vs expected spike count).
  std::vector<std::string> warnings() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// 16 hex digits of FNV-1a over the canonical JSON of the resolved config.
std::string config_hash(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Preprocessing and the segment store

/// filter -> split -> per-segment noise sigma -> detect -> features -> bursts.
std::vector<seq::SegmentData> preprocess_recording(const io::Recording& raw, const ExperimentConfig& cfg);

struct StoreRecording {
  std::string recording_id;
  std::string well_id;
  ClassLabel label = ClassLabel::A;
};

struct SegmentStore {
  nlohmann::json config;  // resolved config echo
  std::string config_hash;
  std::vector<StoreRecording> recordings;
  std::vector<seq::SegmentData> segments;

  io::DatasetManifest as_manifest() const;
};

/// `<dir>/store.json` plus `<dir>/events.bin` (little-endian records).
void write_store(const SegmentStore& store, const std::filesystem::path& dir);
SegmentStore read_store(const std::filesystem::path& dir);

std::vector<seq::FeatureSequence> build_sequences(std::span<const seq::SegmentData> segments,
                                                  const seq::SequenceConfig& cfg);

struct TrainTest {
  std::vector<seq::FeatureSequence> train;
  std::vector<seq::FeatureSequence> test;
};

/// Applies the split plan to the store's recordings and partitions sequences.
TrainTest split_sequences(const SegmentStore& store, std::vector<seq::FeatureSequence> seqs,
                          const eval::SplitPlan& plan);

/// Handcrafted features present under a sequence config.
std::vector<std::string> available_features(const seq::SequenceConfig& cfg);

// ---------------------------------------------------------------------------
// Commands; each writes its artifacts and a short log to `log`.

io::DatasetManifest cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 std::ostream& log);

struct PreprocessSummary {
  std::size_t recordings = 0;
  std::size_t segments = 0;
  std::size_t spikes = 0;
  std::size_t bursts = 0;
  int d_spike = 0;
};

PreprocessSummary cmd_preprocess(const ExperimentConfig& cfg, const std::filesystem::path& dataset_dir,
                                 const std::filesystem::path& store_dir, std::ostream& log);

/// Writes `<out_dir>/model.ckpt` and `<out_dir>/train_report.{csv,json}`.
model::TrainReport cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& store_dir,
                             const std::filesystem::path& out_dir, std::ostream& log);

io::Table cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& store_dir, const std::filesystem::path& out_path,
                       std::ostream& log);

io::Table cmd_importance(const ExperimentConfig& cfg, const std::filesystem::path& store_dir,
                         const std::filesystem::path& out_path, std::ostream& log);

io::Table cmd_compare(const ExperimentConfig& cfg, const std::filesystem::path& store_dir,
                      const std::filesystem::path& out_path, std::ostream& log);

/// Table builders shared by the commands (and usable on in-memory results).
io::Table importance_table(const eval::ImportanceReport& rep, std::uint64_t seed, const std::string& hash);
io::Table train_report_table(const model::TrainReport& rep, const std::string& hash);

/// One flattened sequence per row: recording, well, label, start, values...
io::Table flattened_table(std::span<const seq::FeatureSequence> seqs);
/// One row per spike: recording, segment start, channel, time, amplitude, isi, duration.
io::Table spike_feature_table(std::span<const seq::SegmentData> segments);
io::Table burst_feature_table(std::span<const seq::SegmentData> segments);

}  // namespace framec::pipeline
