#pragma once

#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "framec/io_store.hpp"
#include "framec/models.hpp"
#include "framec/sequences.hpp"

namespace framec::eval {

enum class SplitMode { wellwise, random };

struct SplitPlan {
  SplitMode mode = SplitMode::wellwise;
  std::set<char> train_rows{'A', 'B', 'C', 'D'};
  std::set<char> test_rows{'E', 'F'};
  double random_frac = 0.5;  // fraction of recordings used for training
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplit {
  std::vector<std::string> train_ids;  // recording ids, manifest order
  std::vector<std::string> test_ids;
};

/// Whole recordings go to one side; wellwise assigns by well row letter.
DatasetSplit split_dataset(const io::DatasetManifest& manifest, const SplitPlan& plan);

double accuracy(std::span<const int> preds, std::span<const int> labels);

/// Majority of per-segment labels (p >= 0.5 -> 1); a tie goes to 1 iff the
/// mean probability is >= 0.5.
int vote_recording(std::span<const double> segment_probs);

struct RecordingVote {
  std::string recording_id;
  int label = 0;
  int predicted = 0;
  int n_segments = 0;
};

/// Groups segment probabilities by parent recording (first-seen order) and votes.
std::vector<RecordingVote> vote_recordings(std::span<const seq::FeatureSequence> segments,
                                           std::span<const double> probs);
double voted_accuracy(std::span<const RecordingVote> votes);

enum class ImportanceMode { retrain_ablation, permutation };

std::string to_string(ImportanceMode m);
ImportanceMode importance_mode_from_string(const std::string& s);

struct ImportanceRow {
  std::string feature;
  double acc_all = 0.0;
  double acc_without = 0.0;
  double importance = 0.0;  // acc_all - acc_without
};

ImportanceRow make_importance_row(std::string feature, double acc_all, double acc_without);

struct ImportanceReport {
  ImportanceMode mode = ImportanceMode::retrain_ablation;
  double acc_all = 0.0;
  std::vector<ImportanceRow> rows;

  /// Rows sorted by importance, largest first (stable on ties).
  std::vector<ImportanceRow> ranked() const;
};

/// Generic ablation driver: `accuracy_without({})` is acc_all, then one call per feature.
ImportanceReport importance_by_ablation(
    std::span<const std::string> features,
    const std::function<double(const std::vector<std::string>& dropped)>& accuracy_without);

/// Train/test accuracy for a fixed model configuration on raw (un-normalised)
/// sequences: norm stats from train only, then segment-level test accuracy.
struct FitResult {
  model::TrainResult trained;
  seq::NormStats norm;
  std::vector<double> test_probs;
  double test_accuracy = 0.0;
};

FitResult fit_and_score(model::ModelConfig cfg, std::span<const seq::FeatureSequence> train,
                        std::span<const seq::FeatureSequence> test);

/// Shuffles the valid values of one row across all test segments.
std::vector<seq::FeatureSequence> permute_feature(std::span<const seq::FeatureSequence> seqs,
                                                  const std::string& feature, std::uint64_t seed);

/// Feature importance on full-featured raw sequences. retrain_ablation
/// retrains with each feature's row removed under the identical seed;
/// permutation keeps the full model and shuffles the feature in the test set.
ImportanceReport feature_importance(const model::ModelConfig& cfg,
                                    std::span<const seq::FeatureSequence> train,
                                    std::span<const seq::FeatureSequence> test,
                                    std::span<const std::string> features, ImportanceMode mode,
                                    std::uint64_t permutation_seed = 0);

}  // namespace framec::eval
