// SPDX-License-Identifier: Apache-2.0
// Command line front end: preprocess, synth, train, predict, score, ablate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "g2s/app/dataset.hpp"
#include "g2s/app/experiment.hpp"
#include "g2s/app/synthetic.hpp"
#include "g2s/infer/beam_search.hpp"
#include "g2s/infer/predict.hpp"
#include "g2s/model/graph2smiles.hpp"
#include "g2s/train/trainer.hpp"

using namespace g2s;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Thrown for unusable argument values found after parsing; maps to exit 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  if (line.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

// {"model": {...}, "train": {...}}; either part may be omitted.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
};

RunConfig read_run_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  const auto j = read_json(path);
  for (const auto& [key, value] : j.items()) {
    if (key == "model") value.get_to(c.model);
    else if (key == "train") value.get_to(c.train);
    else throw UsageError(path + ": unknown top-level key " + key);
  }
  return c;
}

void print_log(const std::string& line) { std::cout << line << std::endl; }

// ---------------------------------------------------------------- subcommands

struct PreprocessArgs {
  std::string train, valid, test, out, direction = "forward";
  bool separate_reagents = false;
};

int run_preprocess(const PreprocessArgs& a) {
  std::vector<std::pair<std::string, fs::path>> splits = {{"train", a.train}};
  if (!a.valid.empty()) splits.emplace_back("valid", a.valid);
  if (!a.test.empty()) splits.emplace_back("test", a.test);
  const auto summary = app::preprocess(splits, a.out, app::direction_from(a.direction), !a.separate_reagents);
  for (const auto& e : summary.errors) std::cerr << e << '\n';
  std::cout << "kept " << summary.lines_kept << " reactions, rejected " << summary.errors.size() << '\n';
  return 0;
}

struct SynthArgs {
  std::string task = "halide_swap", out;
  int n_train = 2000, n_valid = 200, n_test = 200, max_atoms = 10;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  app::SynthTaskSpec spec;
  spec.task = app::synth_task_from(a.task);
  spec.n_train = a.n_train;
  spec.n_valid = a.n_valid;
  spec.n_test = a.n_test;
  spec.max_atoms = a.max_atoms;
  spec.seed = a.seed;
  app::write_synthetic(app::generate_synthetic(spec), a.out);
  write_json(fs::path(a.out) / "spec.json", spec);
  std::cout << "wrote " << spec.n_train << "/" << spec.n_valid << "/" << spec.n_test << " records to " << a.out
            << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, config, out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_train(const TrainArgs& a) {
  auto cfg = read_run_config(a.config);
  if (a.seed_given) cfg.train.seed = a.seed;
  const auto data = app::load_experiment_data(a.data);
  cfg.model.vocab_size = static_cast<int>(data.vocab.size());
  cfg.model.dropout = cfg.train.dropout;
  cfg.model.validate();
  cfg.train.validate();
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "config.json", json{{"model", cfg.model}, {"train", cfg.train}});
  data.vocab.save((fs::path(a.out) / "vocab.txt").string());
  model::Graph2Smiles<float> m(cfg.model, cfg.train.seed);
  train::TrainerOptions opt;
  opt.out_dir = a.out;
  opt.log = print_log;
  const auto res = train::train_model(m, data.train, data.valid, data.vocab, cfg.train, opt);
  std::cout << "trained " << res.steps << " steps; best validation top-1 " << res.best_valid_top1 << " at step "
            << res.best_step << '\n';
  return 0;
}

struct PredictArgs {
  std::string model_dir, checkpoint, data, split = "test", input, out, scores, truth_out;
  int beam = 30, max_len = 128;
};

int run_predict(const PredictArgs& a) {
  if (a.data.empty() == a.input.empty()) throw UsageError("give exactly one of --data or --input");
  const fs::path dir = a.model_dir;
  RunConfig cfg = read_run_config((dir / "config.json").string());
  const auto vocab = model::Vocab::load((dir / "vocab.txt").string());
  model::Graph2Smiles<float> m(cfg.model, 0);
  m.load(a.checkpoint.empty() ? (dir / "best.ckpt").string() : a.checkpoint);

  std::vector<app::Example> xs;
  if (!a.data.empty()) {
    xs = app::make_examples(app::read_examples(fs::path(a.data) / (a.split + ".bin")));
  } else {
    const auto lines = read_lines(a.input);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      app::EncodedExample x;
      x.source = lines[i];
      try {
        xs.push_back(app::make_example(x));
      } catch (const std::exception& e) {
        throw std::runtime_error(a.input + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
  const auto preds = infer::beam_predictions(m, xs, vocab, a.beam, a.max_len);
  std::ofstream out(a.out), scores(a.scores.empty() ? a.out + ".scores" : a.scores);
  if (!out || !scores) throw std::runtime_error("cannot write predictions next to " + a.out);
  for (const auto& row : preds) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out << (k ? "\t" : "") << row[k].smiles;
      scores << (k ? "\t" : "") << row[k].score;
    }
    out << '\n';
    scores << '\n';
  }
  if (!a.truth_out.empty()) {
    std::ofstream truth(a.truth_out);
    for (const auto& x : xs) truth << x.target << '\n';
  }
  std::cout << "wrote candidates for " << preds.size() << " inputs to " << a.out << '\n';
  return 0;
}

struct ScoreArgs {
  std::string pred, truth;
  std::vector<int> n = {1, 3, 5, 10};
};

int run_score(const ScoreArgs& a) {
  const auto pred_lines = read_lines(a.pred);
  const auto truth = read_lines(a.truth);
  if (pred_lines.size() != truth.size())
    throw std::runtime_error("prediction and truth files differ in line count (" + std::to_string(pred_lines.size()) +
                             " vs " + std::to_string(truth.size()) + ")");
  std::vector<std::vector<std::string>> preds;
  for (const auto& line : pred_lines) preds.push_back(infer::filter_valid(split_tabs(line)));
  const auto acc = infer::topn_accuracy(preds, truth, a.n);
  for (std::size_t i = 0; i < a.n.size(); ++i) std::printf("top-%d\t%.4f\n", a.n[i], acc[i]);
  return 0;
}

struct AblateArgs {
  std::string data, config, out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_ablate(const AblateArgs& a) {
  auto cfg = read_run_config(a.config);
  if (a.seed_given) cfg.train.seed = a.seed;
  cfg.train.validate();
  const auto data = app::load_experiment_data(a.data);
  if (data.test.empty()) throw UsageError(a.data + " has no test.bin");
  app::ExperimentOptions opt;
  opt.log = print_log;
  std::vector<app::ExperimentResult> results;
  for (const auto& [name, mc] : app::ablation_configs(cfg.model))
    results.push_back(app::run_experiment(name, mc, cfg.train, data, fs::path(a.out) / name, opt));
  std::printf("%-10s", "model");
  for (int n : opt.n_values) std::printf("  top-%-3d", n);
  std::printf("\n");
  for (const auto& r : results) {
    std::printf("%-10s", r.name.c_str());
    for (double v : r.test_topn) std::printf("  %6.1f%%", 100.0 * v);
    std::printf("\n");
  }
  json all = json::array();
  for (const auto& r : results) all.push_back(r);
  write_json(fs::path(a.out) / "ablation.json", all);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Graph-to-SMILES reaction model"};
  cli.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = cli.add_subcommand("preprocess", "build vocab.txt and tokenized .bin files from reaction text");
  c_pre->add_option("--train", pre.train, "training reactions, one reactants>reagents>products per line")
      ->required()
      ->check(CLI::ExistingFile);
  c_pre->add_option("--valid", pre.valid)->check(CLI::ExistingFile);
  c_pre->add_option("--test", pre.test)->check(CLI::ExistingFile);
  c_pre->add_option("--out", pre.out, "output directory")->required();
  c_pre->add_option("--direction", pre.direction)->check(CLI::IsMember({"forward", "retro"}));
  c_pre->add_flag("--separate-reagents", pre.separate_reagents, "keep reagents out of the source graph");

  SynthArgs syn;
  auto* c_syn = cli.add_subcommand("synth", "generate a synthetic reaction dataset");
  c_syn->add_option("--task", syn.task)->check(CLI::IsMember({"canonicalize", "halide_swap"}));
  c_syn->add_option("--n-train", syn.n_train)->check(CLI::NonNegativeNumber);
  c_syn->add_option("--n-valid", syn.n_valid)->check(CLI::NonNegativeNumber);
  c_syn->add_option("--n-test", syn.n_test)->check(CLI::NonNegativeNumber);
  c_syn->add_option("--max-atoms", syn.max_atoms);
  c_syn->add_option("--seed", syn.seed);
  c_syn->add_option("--out", syn.out, "output directory for train.txt, valid.txt, test.txt")->required();

  TrainArgs tr;
  auto* c_tr = cli.add_subcommand("train", "train a model on preprocessed data");
  c_tr->add_option("--data", tr.data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
  c_tr->add_option("--config", tr.config, "JSON with optional \"model\" and \"train\" objects")
      ->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "run directory")->required();
  auto* tr_seed = c_tr->add_option("--seed", tr.seed, "overrides train.seed");

  PredictArgs pr;
  auto* c_pr = cli.add_subcommand("predict", "beam search over a split or a file of source SMILES");
  c_pr->add_option("--model-dir", pr.model_dir, "run directory written by train")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_pr->add_option("--checkpoint", pr.checkpoint, "defaults to <model-dir>/best.ckpt")->check(CLI::ExistingFile);
  c_pr->add_option("--data", pr.data, "directory written by preprocess")->check(CLI::ExistingDirectory);
  c_pr->add_option("--split", pr.split);
  c_pr->add_option("--input", pr.input, "one source SMILES per line")->check(CLI::ExistingFile);
  c_pr->add_option("--out", pr.out, "tab-separated candidates, one line per input")->required();
  c_pr->add_option("--scores", pr.scores, "parallel log-probabilities; defaults to <out>.scores");
  c_pr->add_option("--truth-out", pr.truth_out, "also write the split's targets here");
  c_pr->add_option("--beam", pr.beam)->check(CLI::PositiveNumber);
  c_pr->add_option("--max-len", pr.max_len)->check(CLI::PositiveNumber);

  ScoreArgs sc;
  auto* c_sc = cli.add_subcommand("score", "top-n accuracy of predictions against targets");
  c_sc->add_option("--pred", sc.pred)->required()->check(CLI::ExistingFile);
  c_sc->add_option("--truth", sc.truth)->required()->check(CLI::ExistingFile);
  c_sc->add_option("--n", sc.n)->delimiter(',')->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* c_ab = cli.add_subcommand("ablate", "train and compare full, no-pe and no-global models");
  c_ab->add_option("--data", ab.data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
  c_ab->add_option("--config", ab.config)->check(CLI::ExistingFile);
  c_ab->add_option("--out", ab.out)->required();
  auto* ab_seed = c_ab->add_option("--seed", ab.seed, "overrides train.seed");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }
  tr.seed_given = tr_seed->count() > 0;
  ab.seed_given = ab_seed->count() > 0;

  try {
    if (*c_pre) return run_preprocess(pre);
    if (*c_syn) return run_synth(syn);
    if (*c_tr) return run_train(tr);
    if (*c_pr) return run_predict(pr);
    if (*c_sc) return run_score(sc);
    if (*c_ab) return run_ablate(ab);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const model::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const train::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
