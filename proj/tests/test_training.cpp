// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "g2s/app/synthetic.hpp"
#include "g2s/train/trainer.hpp"

using namespace g2s;
namespace fs = std::filesystem;

namespace {

struct Tiny {
  app::SynthDataset ds;
  model::Vocab vocab;
  std::vector<app::Example> train, valid;

  Tiny() {
    app::SynthTaskSpec spec;
    spec.n_train = 8;
    spec.n_valid = 4;
    spec.n_test = 0;
    spec.max_atoms = 6;
    spec.seed = 1;
    ds = app::generate_synthetic(spec);
    vocab = app::target_vocab(ds.train);
    train = app::synth_examples(ds.train, vocab);
    valid = app::synth_examples(ds.valid, vocab);
  }

  model::ModelConfig model_config() const {
    model::ModelConfig c;
    c.vocab_size = static_cast<int>(vocab.size());
    c.d_model = 16;
    c.heads = 2;
    c.ffn = 32;
    c.local_steps = 2;
    c.global_layers = 1;
    c.decoder_layers = 1;
    c.dropout = 0.1;
    return c;
  }
};

const Tiny& tiny() {
  static const Tiny t;
  return t;
}

train::TrainConfig train_config() {
  train::TrainConfig c;
  c.max_tokens = 64;
  c.accum_steps = 2;
  c.total_steps = 12;
  c.warmup_steps = 4;
  c.checkpoint_every = 6;
  c.seed = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("g2s_test_training_" + name);
  fs::remove_all(d);
  return d;
}

template <class T>
std::vector<double> gradients(model::Graph2Smiles<T>& m) {
  std::vector<double> g;
  for (const auto& p : m.params().all())
    for (T x : p.tensor.grad()) g.push_back(static_cast<double>(x));
  return g;
}

}  // namespace

TEST(Noam, ReferenceValue) {
  EXPECT_NEAR(train::noam_lr(8000, 256, 2.0, 8000), 2.0 / 16.0 / std::sqrt(8000.0), 1e-15);
  EXPECT_NEAR(train::noam_lr(8000, 256, 2.0, 8000), 1.3975e-3, 1e-7);
}

TEST(Noam, BranchesMeetAtWarmup) {
  const long w = 400;
  const double s = static_cast<double>(w);
  EXPECT_DOUBLE_EQ(1.0 / std::sqrt(s), s * std::pow(s, -1.5));
  EXPECT_LT(train::noam_lr(2 * w, 128, 1.0, w), train::noam_lr(w, 128, 1.0, w));
  EXPECT_LT(train::noam_lr(w / 2, 128, 1.0, w), train::noam_lr(w, 128, 1.0, w));
  EXPECT_THROW(train::noam_lr(0, 128, 1.0, w), std::invalid_argument);
}

TEST(TrainConfig, StrictJson) {
  train::TrainConfig c;
  EXPECT_NO_THROW(nlohmann::json({{"max_tokens", 128}, {"seed", 3}}).get_to(c));
  EXPECT_EQ(c.max_tokens, 128);
  EXPECT_THROW(nlohmann::json({{"max_tokens", 128}, {"batch", 3}}).get_to(c), train::ConfigError);
  model::ModelConfig mc;
  EXPECT_THROW(nlohmann::json({{"layers", 3}}).get_to(mc), model::ConfigError);
}

TEST(TrainConfig, StepsMustExceedWarmup) {
  auto c = train_config();
  c.total_steps = c.warmup_steps;
  EXPECT_THROW(c.validate(), train::ConfigError);
  c.warmup_steps = 0;
  EXPECT_THROW(c.validate(), train::ConfigError);
}

TEST(Training, AccumulationMatchesOneLargeBatch) {
  const auto& t = tiny();
  model::Graph2Smiles<double> m(t.model_config(), 2);
  std::mt19937_64 rng(0);
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5, 6, 7};
  m.params().zero_grad();
  const double big = train::accumulate_gradients(m, {app::collate_examples(t.train, all)}, rng, false);
  const auto g_big = gradients(m);
  std::vector<graph::Batch> group;
  for (std::size_t k = 0; k < 4; ++k) group.push_back(app::collate_examples(t.train, {2 * k, 2 * k + 1}));
  m.params().zero_grad();
  const double small = train::accumulate_gradients(m, group, rng, false);
  const auto g_small = gradients(m);
  EXPECT_NEAR(big, small, 1e-12);
  ASSERT_EQ(g_big.size(), g_small.size());
  for (std::size_t i = 0; i < g_big.size(); ++i) EXPECT_NEAR(g_big[i], g_small[i], 1e-12 * (1.0 + std::abs(g_big[i])));
}

TEST(Training, LossOnFixedBatchDecreases) {
  const auto& t = tiny();
  model::Graph2Smiles<float> m(t.model_config(), 3);
  train::Adam<float> adam(m.params(), 0.9, 0.998, 1e-9);
  const auto b = app::collate_examples(t.train, {0, 1, 2, 3});
  std::vector<double> losses;
  for (int step = 0; step < 150; ++step) {
    m.params().zero_grad();
    auto loss = m.mean_loss(b);
    losses.push_back(loss.item());
    loss.backward();
    adam.step(1e-3);
  }
  EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(Training, IdenticalSeedsGiveIdenticalCheckpointsAndLogs) {
  const auto& t = tiny();
  std::vector<fs::path> dirs = {fresh_dir("a"), fresh_dir("b")};
  for (const auto& d : dirs) {
    model::Graph2Smiles<float> m(t.model_config(), 4);
    train::TrainerOptions opt;
    opt.out_dir = d;
    opt.log_every = 3;
    train::train_model(m, t.train, t.valid, t.vocab, train_config(), opt);
  }
  for (const char* f : {"step_6.ckpt", "step_12.ckpt", "best.ckpt", "metrics.jsonl"}) {
    ASSERT_TRUE(fs::exists(dirs[0] / f)) << f;
    EXPECT_EQ(slurp(dirs[0] / f), slurp(dirs[1] / f)) << f;
  }
  for (const auto& d : dirs) fs::remove_all(d);
}

TEST(Training, ScheduleFollowsOptimizerSteps) {
  const auto& t = tiny();
  model::Graph2Smiles<float> m(t.model_config(), 6);
  auto cfg = train_config();
  cfg.accum_steps = 3;
  train::TrainerOptions opt;
  opt.log_every = 1;
  std::vector<nlohmann::json> lines;
  opt.log = [&](const std::string& s) { lines.push_back(nlohmann::json::parse(s)); };
  const auto res = train::train_model(m, t.train, {}, t.vocab, cfg, opt);
  EXPECT_EQ(res.steps, cfg.total_steps);
  EXPECT_EQ(res.step_losses.size(), static_cast<std::size_t>(cfg.total_steps));
  for (const auto& j : lines)
    if (j.contains("lr")) {
      EXPECT_DOUBLE_EQ(j["lr"].get<double>(),
                       train::noam_lr(j["step"].get<long>(), m.config().d_model, cfg.noam_factor, cfg.warmup_steps));
    }
}

TEST(Training, NonFiniteLossAbortsWithStep) {
  const auto& t = tiny();
  model::Graph2Smiles<float> m(t.model_config(), 7);
  auto bias = m.params().get("decoder.out.b");
  bias.values()[4] = std::numeric_limits<float>::quiet_NaN();
  try {
    train::train_model(m, t.train, {}, t.vocab, train_config());
    FAIL() << "expected NanLoss";
  } catch (const train::NanLoss& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Training, SelectsBestValidationCheckpoint) {
  const auto& t = tiny();
  model::Graph2Smiles<float> m(t.model_config(), 8);
  const auto d = fresh_dir("best");
  train::TrainerOptions opt;
  opt.out_dir = d;
  const auto res = train::train_model(m, t.train, t.valid, t.vocab, train_config(), opt);
  EXPECT_TRUE(res.best_step == 6 || res.best_step == 12);
  EXPECT_EQ(slurp(d / "best.ckpt"), slurp(d / ("step_" + std::to_string(res.best_step) + ".ckpt")));
  fs::remove_all(d);
}
