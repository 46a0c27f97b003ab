#include <doctest.h>

#include <sstream>

#include "framec/errors.hpp"
#include "framec/pipeline.hpp"
#include "support.hpp"

using namespace framec;
using pipeline::ExperimentConfig;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.seed = 5;
  c.generator.n_channels = 2;
  c.generator.duration_s = 20.0;
  c.wells_per_class = 2;
  c.sequence.len_spikes = 100;
  c.model.hidden = 4;
  c.model.cnn_channels = 4;
  c.model.cnn_kernel = 3;
  c.model.epochs = 2;
  c.model.batch_size = 4;
  return c;
}

// Simulated and preprocessed once for the whole suite.
struct Prepared {
  test_support::TempDir dir;
  pipeline::PreprocessSummary summary;

  Prepared() {
    std::ostringstream log;
    pipeline::cmd_simulate(tiny(), dir / "data", log);
    summary = pipeline::cmd_preprocess(tiny(), dir / "data", dir / "store", log);
  }
  std::filesystem::path data() const { return dir / "data"; }
  std::filesystem::path store() const { return dir / "store"; }
};

const Prepared& prepared() {
  static const Prepared p;
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config json round trip") {
  ExperimentConfig c = tiny();
  c.sequence.variant = seq::Variant::V2_features;
  c.sequence.drop_features = {"isi"};
  c.generator.class_b.burst_prob = 0.2;
  c.split_plan.mode = eval::SplitMode::random;
  c.importance_mode = eval::ImportanceMode::permutation;
  c.compare_archs = {model::Arch::logistic};
  c.filter.zero_phase = false;
  const auto j = pipeline::to_json(c);
  const auto back = pipeline::config_from_json(j);
  CHECK(pipeline::to_json(back) == j);
  CHECK(back.sequence.drop_features == std::vector<std::string>{"isi"});
  CHECK(back.generator.class_b.burst_prob == 0.2);
  CHECK_FALSE(back.filter.zero_phase);
}

TEST_CASE("missing keys keep defaults and unknown keys are rejected") {
  const auto c = pipeline::config_from_json(nlohmann::json{{"seed", 9}});
  CHECK(c.seed == 9);
  CHECK(c.split.window_s == ExperimentConfig{}.split.window_s);
  CHECK_THROWS_AS(pipeline::config_from_json(nlohmann::json{{"sead", 9}}), ConfigError);
  CHECK_THROWS_AS(pipeline::config_from_json(nlohmann::json{{"model", {{"hiden", 3}}}}), ConfigError);
  CHECK_THROWS_AS(pipeline::config_from_json(nlohmann::json{{"model", {{"hidden", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(pipeline::load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config hash ignores jobs and tracks everything else") {
  ExperimentConfig a = tiny(), b = tiny();
  b.jobs = 4;
  CHECK(pipeline::config_hash(a) == pipeline::config_hash(b));
  CHECK(pipeline::config_hash(a).size() == 16);
  b.model.lr = 2e-3;
  CHECK(pipeline::config_hash(a) != pipeline::config_hash(b));
}

TEST_CASE("resolved copies the global seed") {
  ExperimentConfig c;
  c.seed = 77;
  const auto r = c.resolved();
  CHECK(r.generator.seed == 77);
  CHECK(r.model.seed == 77);
  CHECK(r.split_plan.seed == 77);
}

TEST_CASE("truncation warning") {
  ExperimentConfig c;
  c.sequence.len_spikes = 10;
  CHECK_FALSE(c.warnings().empty());
  CHECK(ExperimentConfig{}.warnings().empty());
}

TEST_CASE("preprocess summary and store round trip") {
  const auto& p = prepared();
  CHECK(p.summary.recordings == 4);
  CHECK(p.summary.segments == 8);
  CHECK(p.summary.spikes > 100);
  CHECK(p.summary.d_spike == 103);

  const auto store = pipeline::read_store(p.store());
  CHECK(store.recordings.size() == 4);
  CHECK(store.segments.size() == 8);
  CHECK(store.config_hash == pipeline::config_hash(tiny()));

  test_support::TempDir again;
  pipeline::write_store(store, again.path());
  const auto back = pipeline::read_store(again.path());
  REQUIRE(back.segments.size() == store.segments.size());
  for (std::size_t i = 0; i < back.segments.size(); ++i) {
    const auto& a = store.segments[i];
    const auto& b = back.segments[i];
    CHECK(a.parent_id == b.parent_id);
    CHECK(a.start_s == b.start_s);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t k = 0; k < a.events.size(); ++k) {
      CHECK(a.events[k].peak_time_s == b.events[k].peak_time_s);
      CHECK(a.events[k].waveform == b.events[k].waveform);
      CHECK(a.features[k].duration_s == b.features[k].duration_s);
    }
    CHECK(a.bursts.size() == b.bursts.size());
  }
  CHECK(io::read_text_file(again / "events.bin") == io::read_text_file(p.store() / "events.bin"));
}

TEST_CASE("parallel preprocessing writes an identical store") {
  const auto& p = prepared();
  test_support::TempDir dir;
  auto cfg = tiny();
  cfg.jobs = 3;
  std::ostringstream log;
  pipeline::cmd_preprocess(cfg, p.data(), dir / "store", log);
  CHECK(io::read_text_file(dir / "store" / "events.bin") == io::read_text_file(p.store() / "events.bin"));
}

TEST_CASE("corrupt stores are data errors") {
  test_support::TempDir dir;
  CHECK_THROWS_AS(pipeline::read_store(dir.path()), DataError);
  const auto store = pipeline::read_store(prepared().store());
  pipeline::write_store(store, dir.path());
  std::filesystem::resize_file(dir / "events.bin", std::filesystem::file_size(dir / "events.bin") - 3);
  CHECK_THROWS_AS(pipeline::read_store(dir.path()), FormatError);
}

TEST_CASE("wellwise split of the store keeps recordings whole") {
  const auto store = pipeline::read_store(prepared().store());
  const auto tt = pipeline::split_sequences(store, pipeline::build_sequences(store.segments, tiny().sequence),
                                            tiny().split_plan);
  CHECK(tt.train.size() == 4);
  CHECK(tt.test.size() == 4);
  for (const auto& s : tt.train) CHECK(std::string("ABCD").find(s.well_id[0]) != std::string::npos);
  for (const auto& s : tt.test) CHECK(std::string("EF").find(s.well_id[0]) != std::string::npos);
}

TEST_CASE("available features per variant") {
  seq::SequenceConfig c;
  c.variant = seq::Variant::V1_waveform;
  CHECK(pipeline::available_features(c).empty());
  c.variant = seq::Variant::V3_combined;
  CHECK(pipeline::available_features(c) == std::vector<std::string>{"amplitude", "isi", "duration"});
  c.include_bursts = true;
  CHECK(pipeline::available_features(c).size() == 6);
}

TEST_CASE("train then evaluate") {
  const auto& p = prepared();
  test_support::TempDir out;
  std::ostringstream log;
  const auto report = pipeline::cmd_train(tiny(), p.store(), out / "run", log);
  CHECK(report.epochs.size() == 2);
  CHECK(std::filesystem::exists(out / "run" / "model.ckpt"));
  CHECK(std::filesystem::exists(out / "run" / "train_report.json"));
  const auto csv = io::read_text_file(out / "run" / "train_report.csv");
  CHECK(csv.rfind("epoch,loss,train_accuracy,seed,config_hash\n", 0) == 0);

  const auto t = pipeline::cmd_evaluate(tiny(), out / "run" / "model.ckpt", p.store(), out / "eval.csv", log);
  REQUIRE(t.rows.size() == 1);
  CHECK(std::get<std::int64_t>(t.rows[0][4]) == 4);
  CHECK(std::get<std::int64_t>(t.rows[0][5]) == 2);
  const double acc = std::get<double>(t.rows[0][2]);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  auto v1 = tiny();
  v1.sequence.variant = seq::Variant::V1_waveform;
  CHECK_THROWS_AS(pipeline::cmd_evaluate(v1, out / "run" / "model.ckpt", p.store(), out / "e.csv", log), DataError);
}

TEST_CASE("importance table layout") {
  auto cfg = tiny();
  cfg.importance_mode = eval::ImportanceMode::permutation;
  test_support::TempDir out;
  std::ostringstream log;
  const auto t = pipeline::cmd_importance(cfg, prepared().store(), out / "imp.json", log);
  CHECK(t.columns == std::vector<std::string>{"feature", "acc_all", "acc_without", "importance", "mode", "seed",
                                              "config_hash"});
  CHECK(t.rows.size() == 4);
  CHECK(std::get<std::string>(t.rows.back()[0]) == "all");

  cfg.sequence.variant = seq::Variant::V1_waveform;
  CHECK_THROWS_AS(pipeline::cmd_importance(cfg, prepared().store(), out / "x.csv", log), ConfigError);
}

TEST_CASE("comparison table has N/A for non-CNN baselines") {
  auto cfg = tiny();
  cfg.model.epochs = 1;
  std::ostringstream log;
  const auto t = pipeline::cmd_compare(cfg, prepared().store(), {}, log);
  CHECK(t.columns == std::vector<std::string>{"method", "lstm", "cnn1d", "seed", "config_hash"});
  REQUIRE(t.rows.size() == 4);
  CHECK(std::get<std::string>(t.rows[0][0]) == "baseline_binned");
  CHECK(std::get<std::string>(t.rows[0][1]) == "N/A");
  CHECK(std::holds_alternative<double>(t.rows[0][2]));
  CHECK(std::get<std::string>(t.rows[3][0]) == "V3");
}

TEST_CASE("export tables") {
  const auto store = pipeline::read_store(prepared().store());
  const auto spikes = pipeline::spike_feature_table(store.segments);
  CHECK(spikes.rows.size() == prepared().summary.spikes);
  const auto bursts = pipeline::burst_feature_table(store.segments);
  CHECK(bursts.rows.size() == prepared().summary.bursts);
  auto sc = tiny().sequence;
  sc.variant = seq::Variant::V2_features;
  const auto flat = pipeline::flattened_table(pipeline::build_sequences(store.segments, sc));
  CHECK(flat.rows.size() == 8);
  CHECK(flat.columns.size() == 4 + 3 * 100);
}

}  // TEST_SUITE
