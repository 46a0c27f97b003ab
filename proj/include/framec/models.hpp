#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "framec/sequences.hpp"

namespace framec::model {

enum class Arch { lstm, cnn1d, logistic };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::lstm;
  int input_dim = 103;
  int burst_dim = 0;  // 0 disables the burst stream
  int hidden = 64;
  int cnn_channels = 32;
  int cnn_kernel = 7;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Named view of a parameter block, used for checkpoints and diagnostics.
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class Encoder;

/// Per-stream encoder(s) -> concatenation -> affine -> sigmoid. The spike
/// stream is always present; a burst stream is added when burst_dim > 0.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  const ModelConfig& config() const { return cfg_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::vector<Tensor> tensors() const;

  /// Probability of class 1.
  double forward(const seq::FeatureSequence& s) const;
  double logit(const seq::FeatureSequence& s) const;

  /// Adds scale * d loss / d params into `grad`; returns the sample loss.
  double accumulate_gradient(const seq::FeatureSequence& s, int label, double scale,
                             std::span<double> grad) const;

  /// Rounds every parameter to the nearest float, matching checkpoint storage.
  void round_to_float();

 private:
  void check_input(const seq::FeatureSequence& s) const;

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Encoder>> encoders_;
  std::vector<std::size_t> encoder_offsets_;
  std::size_t head_offset_ = 0;
  int feature_dim_ = 0;
  std::vector<double> params_;
  std::vector<ParamBlock> blocks_;
};

/// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double prob, int label);

inline constexpr double kProbClamp = 1e-7;

struct BatchResult {
  double loss = 0.0;            // mean over the batch
  std::vector<double> grad;     // d mean loss / d params
};

/// Exact gradient of the mean batch loss; reduction in sample order.
BatchResult batch_loss_and_grad(const Model& m, std::span<const seq::FeatureSequence> batch,
                                double loss_scale = 1.0);

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_train_accuracy = 0.0;
  double val_accuracy = 0.0;  // NaN when no validation set
  std::uint64_t seed = 0;
  ModelConfig config;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

/// Adam over seeded shuffled mini-batches; deterministic for a given seed.
/// Throws DataError for an empty or single-class training set and
/// NumericalError on a non-finite loss or gradient.
TrainResult train(const ModelConfig& cfg, std::span<const seq::FeatureSequence> train_set,
                  std::span<const seq::FeatureSequence> val_set);

std::vector<double> predict(const Model& m, std::span<const seq::FeatureSequence> seqs);

/// Fisher-Yates shuffle driven by a splitmix-derived stream; stable across platforms.
void seeded_shuffle(std::vector<std::size_t>& idx, std::uint64_t seed);

/// Versioned binary checkpoint: header, config/extra JSON, f32 LE tensors.
void save_checkpoint(const Model& m, const nlohmann::json& extra, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace framec::model
