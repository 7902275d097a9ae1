// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "g2s/app/dataset.hpp"
#include "g2s/app/synthetic.hpp"
#include "g2s/infer/predict.hpp"
#include "g2s/model/graph2smiles.hpp"
#include "g2s/train/trainer.hpp"

namespace g2s::app {

/// Encoded splits that share one target vocabulary.
struct ExperimentData {
  model::Vocab vocab;
  std::vector<Example> train, valid, test;
};

inline ExperimentData synth_experiment_data(const SynthDataset& ds) {
  ExperimentData d;
  d.vocab = target_vocab(ds.train);
  d.train = synth_examples(ds.train, d.vocab);
  d.valid = synth_examples(ds.valid, d.vocab);
  d.test = synth_examples(ds.test, d.vocab);
  return d;
}

/// Reads vocab.txt and {train,valid,test}.bin as written by preprocess.
/// Missing valid or test files give empty splits.
inline ExperimentData load_experiment_data(const std::filesystem::path& dir) {
  ExperimentData d;
  d.vocab = model::Vocab::load((dir / "vocab.txt").string());
  d.train = make_examples(read_examples(dir / "train.bin"));
  if (std::filesystem::exists(dir / "valid.bin")) d.valid = make_examples(read_examples(dir / "valid.bin"));
  if (std::filesystem::exists(dir / "test.bin")) d.test = make_examples(read_examples(dir / "test.bin"));
  return d;
}

struct ExperimentResult {
  std::string name;
  long steps = 0;
  long best_step = 0;
  double best_valid_top1 = -1.0;
  std::vector<int> n_values;
  std::vector<double> test_topn;  // parallel to n_values
  double train_seconds = 0.0;
  double eval_seconds = 0.0;

  double top1() const { return test_topn.empty() ? 0.0 : test_topn.front(); }
};

inline void to_json(nlohmann::json& j, const ExperimentResult& r) {
  j = nlohmann::json{{"name", r.name},
                     {"steps", r.steps},
                     {"best_step", r.best_step},
                     {"best_valid_top1", r.best_valid_top1},
                     {"n_values", r.n_values},
                     {"test_topn", r.test_topn},
                     {"train_seconds", r.train_seconds},
                     {"eval_seconds", r.eval_seconds}};
}

inline void from_json(const nlohmann::json& j, ExperimentResult& r) {
  j.at("name").get_to(r.name);
  j.at("steps").get_to(r.steps);
  j.at("best_step").get_to(r.best_step);
  j.at("best_valid_top1").get_to(r.best_valid_top1);
  j.at("n_values").get_to(r.n_values);
  j.at("test_topn").get_to(r.test_topn);
  j.at("train_seconds").get_to(r.train_seconds);
  j.at("eval_seconds").get_to(r.eval_seconds);
}

/// The full model and its two ablations: no positional bias, no global encoder.
inline std::vector<std::pair<std::string, model::ModelConfig>> ablation_configs(const model::ModelConfig& full) {
  auto no_pe = full;
  no_pe.relative_positions = false;
  auto no_global = full;
  no_global.global_layers = 0;
  return {{"full", full}, {"no-pe", no_pe}, {"no-global", no_global}};
}

struct ExperimentOptions {
  int beam_size = 30;
  int max_len = 128;
  std::vector<int> n_values = {1, 3, 5, 10};
  long log_every = 50;
  std::function<void(const std::string&)> log;
};

/// Trains from scratch, restores the best validation checkpoint and scores
/// beam search on the test split. Writes checkpoints, metrics.jsonl and
/// result.json under `out_dir`. The model takes its dropout from `tc`.
inline ExperimentResult run_experiment(const std::string& name, model::ModelConfig mc, const train::TrainConfig& tc,
                                       const ExperimentData& data, const std::filesystem::path& out_dir,
                                       const ExperimentOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  mc.vocab_size = static_cast<int>(data.vocab.size());
  mc.dropout = tc.dropout;
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "config.json");
    os << nlohmann::json{{"model", mc}, {"train", tc}}.dump(2) << '\n';
  }
  model::Graph2Smiles<float> m(mc, tc.seed);
  train::TrainerOptions topt;
  topt.out_dir = out_dir;
  topt.valid_max_len = opt.max_len;
  topt.log_every = opt.log_every;
  topt.log = opt.log;
  const auto t0 = clock::now();
  const auto tr = train::train_model(m, data.train, data.valid, data.vocab, tc, topt);
  const auto t1 = clock::now();
  m.load(tr.best_checkpoint.string());
  const auto preds = infer::beam_predictions(m, data.test, data.vocab, opt.beam_size, opt.max_len);
  ExperimentResult r;
  r.name = name;
  r.steps = tr.steps;
  r.best_step = tr.best_step;
  r.best_valid_top1 = tr.best_valid_top1;
  r.n_values = opt.n_values;
  r.test_topn = infer::beam_accuracy(preds, data.test, opt.n_values);
  r.train_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.eval_seconds = std::chrono::duration<double>(clock::now() - t1).count();
  std::ofstream os(out_dir / "result.json");
  os << nlohmann::json(r).dump(2) << '\n';
  return r;
}

}  // namespace g2s::app
