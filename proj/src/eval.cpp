#include "framec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "framec/errors.hpp"
#include "framec/synthgen.hpp"

namespace framec::eval {

void SplitPlan::validate() const {
  if (mode == SplitMode::wellwise) {
    for (char r : train_rows)
      if (test_rows.contains(r)) throw ConfigError(std::string("row ") + r + " is in both train and test rows");
  } else if (!(random_frac > 0.0 && random_frac < 1.0)) {
    throw ConfigError("random_frac must lie in (0, 1)");
  }
}

DatasetSplit split_dataset(const io::DatasetManifest& manifest, const SplitPlan& plan) {
  plan.validate();
  DatasetSplit out;
  if (plan.mode == SplitMode::wellwise) {
    for (const auto& e : manifest.entries) {
      const char row = io::well_row(e.well_id);
      if (plan.train_rows.contains(row)) {
        out.train_ids.push_back(e.recording_id);
      } else if (plan.test_rows.contains(row)) {
        out.test_ids.push_back(e.recording_id);
      } else {
        throw ConfigError(std::string("well row ") + row + " is in neither train nor test rows");
      }
    }
    return out;
  }
  std::vector<std::size_t> idx(manifest.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  model::seeded_shuffle(idx, plan.seed);
  const auto n_train = static_cast<std::size_t>(std::llround(plan.random_frac * static_cast<double>(idx.size())));
  std::vector<bool> is_train(idx.size(), false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[idx[k]] = true;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (is_train[i] ? out.train_ids : out.test_ids).push_back(manifest.entries[i].recording_id);
  return out;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw DataError("prediction and label counts differ");
  if (preds.empty()) throw DataError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

int vote_recording(std::span<const double> probs) {
  if (probs.empty()) throw DataError("cannot vote on zero segments");
  std::size_t pos = 0;
  double sum = 0.0;
  for (double p : probs) {
    pos += p >= 0.5;
    sum += p;
  }
  const std::size_t neg = probs.size() - pos;
  if (pos != neg) return pos > neg ? 1 : 0;
  return sum / static_cast<double>(probs.size()) >= 0.5 ? 1 : 0;
}

std::vector<RecordingVote> vote_recordings(std::span<const seq::FeatureSequence> segments,
                                           std::span<const double> probs) {
  if (segments.size() != probs.size()) throw DataError("segment and probability counts differ");
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> grouped;
  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& id = segments[i].parent_id;
    if (!grouped.contains(id)) order.push_back(id);
    grouped[id].push_back(probs[i]);
    labels[id] = to_int(segments[i].label);
  }
  std::vector<RecordingVote> out;
  for (const auto& id : order)
    out.push_back({id, labels[id], vote_recording(grouped[id]), static_cast<int>(grouped[id].size())});
  return out;
}

double voted_accuracy(std::span<const RecordingVote> votes) {
  std::vector<int> p, l;
  for (const auto& v : votes) {
    p.push_back(v.predicted);
    l.push_back(v.label);
  }
  return accuracy(p, l);
}

std::string to_string(ImportanceMode m) {
  return m == ImportanceMode::retrain_ablation ? "retrain_ablation" : "permutation";
}

ImportanceMode importance_mode_from_string(const std::string& s) {
  if (s == "retrain_ablation" || s == "retrain") return ImportanceMode::retrain_ablation;
  if (s == "permutation") return ImportanceMode::permutation;
  throw ConfigError("unknown importance mode '" + s + "'");
}

ImportanceRow make_importance_row(std::string feature, double acc_all, double acc_without) {
  return {std::move(feature), acc_all, acc_without, acc_all - acc_without};
}

std::vector<ImportanceRow> ImportanceReport::ranked() const {
  auto out = rows;
  std::stable_sort(out.begin(), out.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) { return a.importance > b.importance; });
  return out;
}

ImportanceReport importance_by_ablation(
    std::span<const std::string> features,
    const std::function<double(const std::vector<std::string>&)>& accuracy_without) {
  ImportanceReport rep;
  rep.acc_all = accuracy_without({});
  for (const auto& f : features) rep.rows.push_back(make_importance_row(f, rep.acc_all, accuracy_without({f})));
  return rep;
}

FitResult fit_and_score(model::ModelConfig cfg, std::span<const seq::FeatureSequence> train,
                        std::span<const seq::FeatureSequence> test) {
  if (train.empty()) throw DataError("training set is empty");
  if (test.empty()) throw DataError("test set is empty");
  FitResult r{model::TrainResult{model::Model(model::ModelConfig{}), {}}, {}, {}, 0.0};
  r.norm = seq::fit_norm_stats(train);
  std::vector<seq::FeatureSequence> tr, te;
  tr.reserve(train.size());
  te.reserve(test.size());
  for (const auto& s : train) tr.push_back(seq::apply_norm(s, r.norm));
  for (const auto& s : test) te.push_back(seq::apply_norm(s, r.norm));
  cfg.input_dim = tr.front().spikes.rows;
  cfg.burst_dim = tr.front().bursts ? tr.front().bursts->rows : 0;
  r.trained = model::train(cfg, tr, {});
  r.test_probs = model::predict(r.trained.model, te);
  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < te.size(); ++i) {
    preds.push_back(r.test_probs[i] >= 0.5);
    labels.push_back(to_int(te[i].label));
  }
  r.test_accuracy = accuracy(preds, labels);
  return r;
}

std::vector<seq::FeatureSequence> permute_feature(std::span<const seq::FeatureSequence> seqs,
                                                  const std::string& feature, std::uint64_t seed) {
  std::vector<seq::FeatureSequence> out(seqs.begin(), seqs.end());
  if (out.empty()) return out;
  auto row_of = [&](const std::vector<std::string>& names) {
    const auto it = std::find(names.begin(), names.end(), feature);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
  };
  const bool burst = row_of(out.front().spike_rows) < 0;
  const int row = burst ? row_of(out.front().burst_rows) : row_of(out.front().spike_rows);
  if (row < 0) throw ConfigError("feature '" + feature + "' is not present in the sequences");

  std::vector<float*> slots;
  for (auto& s : out) {
    seq::Matrix* m = burst ? (s.bursts ? &*s.bursts : nullptr) : &s.spikes;
    if (!m) continue;
    const int valid = burst ? s.burst_valid : s.spike_valid;
    for (int c = 0; c < valid; ++c) slots.push_back(&m->at(row, c));
  }
  std::vector<float> values;
  values.reserve(slots.size());
  for (float* p : slots) values.push_back(*p);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  model::seeded_shuffle(idx, seed);
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = values[idx[i]];
  return out;
}

ImportanceReport feature_importance(const model::ModelConfig& cfg,
                                    std::span<const seq::FeatureSequence> train,
                                    std::span<const seq::FeatureSequence> test,
                                    std::span<const std::string> features, ImportanceMode mode,
                                    std::uint64_t permutation_seed) {
  if (train.empty() || test.empty()) throw DataError("feature importance needs train and test data");
  for (const auto& f : features) {
    const auto& a = train.front().spike_rows;
    const auto& b = train.front().burst_rows;
    if (std::find(a.begin(), a.end(), f) == a.end() && std::find(b.begin(), b.end(), f) == b.end())
      throw ConfigError("feature '" + f + "' is not present in this variant");
  }

  if (mode == ImportanceMode::retrain_ablation) {
    ImportanceReport rep = importance_by_ablation(features, [&](const std::vector<std::string>& dropped) {
      if (dropped.empty()) return fit_and_score(cfg, train, test).test_accuracy;
      std::vector<seq::FeatureSequence> tr, te;
      for (const auto& s : train) tr.push_back(seq::drop_rows(s, dropped));
      for (const auto& s : test) te.push_back(seq::drop_rows(s, dropped));
      return fit_and_score(cfg, tr, te).test_accuracy;
    });
    rep.mode = mode;
    return rep;
  }

  // Permutation: one model, test features shuffled after normalisation.
  const FitResult full = fit_and_score(cfg, train, test);
  std::vector<seq::FeatureSequence> te;
  for (const auto& s : test) te.push_back(seq::apply_norm(s, full.norm));
  ImportanceReport rep;
  rep.mode = mode;
  rep.acc_all = full.test_accuracy;
  std::uint64_t salt = 0;
  for (const auto& f : features) {
    const auto permuted = permute_feature(te, f, synth::mix_seed(permutation_seed, salt++));
    const auto probs = model::predict(full.trained.model, permuted);
    std::vector<int> preds, labels;
    for (std::size_t i = 0; i < permuted.size(); ++i) {
      preds.push_back(probs[i] >= 0.5);
      labels.push_back(to_int(permuted[i].label));
    }
    rep.rows.push_back(make_importance_row(f, rep.acc_all, accuracy(preds, labels)));
  }
  return rep;
}

}  // namespace framec::eval
