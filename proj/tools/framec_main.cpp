// framec: simulate, preprocess, train, evaluate, importance, compare, export.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "framec/errors.hpp"
#include "framec/pipeline.hpp"

namespace fs = std::filesystem;
using framec::pipeline::ExperimentConfig;

namespace {

/// Flags shared by every subcommand; each overrides the config file when given.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> variant;
  std::optional<std::string> arch;
  std::optional<int> epochs;
  std::optional<int> hidden;
  std::optional<int> cnn_channels;
  std::optional<int> cnn_kernel;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<int> len_spikes;
  std::optional<int> len_bursts;
  std::optional<bool> include_bursts;
  std::optional<double> window_s;
  std::optional<double> step_s;
  std::optional<double> threshold;
  std::optional<int> wells_per_class;
  std::optional<double> duration_s;
  std::optional<int> n_channels;
  std::optional<double> noise_sigma;
  std::optional<std::string> importance_mode;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--jobs", f.jobs, "Parallel workers for per-recording work");
  cmd->add_option("--variant", f.variant, "V1 | V2 | V3 | baseline_binned");
  cmd->add_option("--arch", f.arch, "lstm | cnn1d | logistic");
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--hidden", f.hidden);
  cmd->add_option("--cnn-channels", f.cnn_channels);
  cmd->add_option("--cnn-kernel", f.cnn_kernel);
  cmd->add_option("--lr", f.lr);
  cmd->add_option("--batch-size", f.batch_size);
  cmd->add_option("--len-spikes", f.len_spikes);
  cmd->add_option("--len-bursts", f.len_bursts);
  cmd->add_option("--include-bursts", f.include_bursts);
  cmd->add_option("--window", f.window_s, "Split window in seconds");
  cmd->add_option("--step", f.step_s, "Split step in seconds (window/step = augmentation factor)");
  cmd->add_option("--threshold", f.threshold, "Detection threshold in noise sigmas");
  cmd->add_option("--wells-per-class", f.wells_per_class);
  cmd->add_option("--duration", f.duration_s, "Simulated recording length in seconds");
  cmd->add_option("--channels", f.n_channels, "Simulated channel count");
  cmd->add_option("--noise", f.noise_sigma, "Simulated noise sigma in microvolts");
  cmd->add_option("--importance-mode", f.importance_mode, "retrain_ablation | permutation");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : framec::pipeline::load_config(f.config_path);
  if (f.seed) c.seed = *f.seed;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.variant) c.sequence.variant = framec::seq::variant_from_string(*f.variant);
  if (f.arch) c.model.arch = framec::model::arch_from_string(*f.arch);
  if (f.epochs) c.model.epochs = *f.epochs;
  if (f.hidden) c.model.hidden = *f.hidden;
  if (f.cnn_channels) c.model.cnn_channels = *f.cnn_channels;
  if (f.cnn_kernel) c.model.cnn_kernel = *f.cnn_kernel;
  if (f.lr) c.model.lr = *f.lr;
  if (f.batch_size) c.model.batch_size = *f.batch_size;
  if (f.len_spikes) c.sequence.len_spikes = *f.len_spikes;
  if (f.len_bursts) c.sequence.len_bursts = *f.len_bursts;
  if (f.include_bursts) c.sequence.include_bursts = *f.include_bursts;
  if (f.window_s) {
    c.split.window_s = *f.window_s;
    if (!f.step_s) c.split.step_s = *f.window_s;
  }
  if (f.step_s) c.split.step_s = *f.step_s;
  if (f.threshold) c.detection.threshold_multiplier = *f.threshold;
  if (f.wells_per_class) c.wells_per_class = *f.wells_per_class;
  if (f.duration_s) c.generator.duration_s = *f.duration_s;
  if (f.n_channels) c.generator.n_channels = *f.n_channels;
  if (f.noise_sigma) c.generator.noise_sigma_uV = *f.noise_sigma;
  if (f.importance_mode) c.importance_mode = framec::eval::importance_mode_from_string(*f.importance_mode);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"framec: knowledge-augmented MEA recording classification"};
  app.require_subcommand(1);
  CommonFlags flags;

  std::string out_dir, dataset_dir, store_dir, checkpoint, out_path, export_what = "features";

  auto* simulate = app.add_subcommand("simulate", "Generate a labelled synthetic dataset");
  add_common(simulate, flags);
  simulate->add_option("-o,--out", out_dir, "Dataset directory")->required();

  auto* preprocess = app.add_subcommand("preprocess", "Filter, split, detect and extract features");
  add_common(preprocess, flags);
  preprocess->add_option("-d,--dataset", dataset_dir, "Dataset directory with manifest.json")->required();
  preprocess->add_option("-s,--store", store_dir, "Output segment store directory")->required();

  auto* train = app.add_subcommand("train", "Train a classifier on the wellwise training split");
  add_common(train, flags);
  train->add_option("-s,--store", store_dir)->required();
  train->add_option("-o,--out", out_dir, "Directory for model.ckpt and train_report")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Segment and voted recording accuracy on the test split");
  add_common(evaluate, flags);
  evaluate->add_option("-s,--store", store_dir)->required();
  evaluate->add_option("-m,--checkpoint", checkpoint)->required();
  evaluate->add_option("-o,--out", out_path, "Metrics table (.csv or .json)")->required();

  auto* importance = app.add_subcommand("importance", "Handcrafted-feature importance");
  add_common(importance, flags);
  importance->add_option("-s,--store", store_dir)->required();
  importance->add_option("-o,--out", out_path, "Importance table (.csv or .json)")->required();

  auto* compare = app.add_subcommand("compare", "Baseline vs V1/V2/V3 comparison table");
  add_common(compare, flags);
  compare->add_option("-s,--store", store_dir)->required();
  compare->add_option("-o,--out", out_path, "Comparison table (.csv or .json)")->required();

  auto* exporter = app.add_subcommand("export", "Export store contents as tables");
  add_common(exporter, flags);
  exporter->add_option("-s,--store", store_dir)->required();
  exporter->add_option("--what", export_what, "features | bursts | flat")
      ->check(CLI::IsMember({"features", "bursts", "flat"}));
  exporter->add_option("-o,--out", out_path)->required();

  auto* show_config = app.add_subcommand("config", "Print the resolved configuration as JSON");
  add_common(show_config, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = build_config(flags);
    std::ostream& log = std::cerr;
    if (*simulate) {
      framec::pipeline::cmd_simulate(cfg, out_dir, log);
    } else if (*preprocess) {
      framec::pipeline::cmd_preprocess(cfg, dataset_dir, store_dir, log);
    } else if (*train) {
      framec::pipeline::cmd_train(cfg, store_dir, out_dir, log);
    } else if (*evaluate) {
      const auto t = framec::pipeline::cmd_evaluate(cfg, checkpoint, store_dir, out_path, log);
      std::cout << framec::io::to_csv(t);
    } else if (*importance) {
      const auto t = framec::pipeline::cmd_importance(cfg, store_dir, out_path, log);
      std::cout << framec::io::to_csv(t);
    } else if (*compare) {
      const auto t = framec::pipeline::cmd_compare(cfg, store_dir, out_path, log);
      std::cout << framec::io::to_csv(t);
    } else if (*exporter) {
      const auto store = framec::pipeline::read_store(store_dir);
      framec::io::Table t;
      if (export_what == "features") {
        t = framec::pipeline::spike_feature_table(store.segments);
      } else if (export_what == "bursts") {
        t = framec::pipeline::burst_feature_table(store.segments);
      } else {
        t = framec::pipeline::flattened_table(framec::pipeline::build_sequences(store.segments, cfg.resolved().sequence));
      }
      framec::io::export_table(t, out_path);
    } else if (*show_config) {
      std::cout << framec::pipeline::to_json(cfg.resolved()).dump(2) << "\n";
    }
  } catch (const framec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const framec::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const framec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
