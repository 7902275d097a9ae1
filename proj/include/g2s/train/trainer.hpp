// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2s/app/dataset.hpp"
#include "g2s/graph/batch.hpp"
#include "g2s/infer/predict.hpp"
#include "g2s/model/graph2smiles.hpp"
#include "g2s/model/vocab.hpp"
#include "g2s/train/optim.hpp"

namespace g2s::train {

class NanLoss : public std::runtime_error {
 public:
  explicit NanLoss(long step)
      : std::runtime_error("non-finite loss at step " + std::to_string(step)), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct TrainerOptions {
  std::filesystem::path out_dir;  // checkpoints and metrics.jsonl; empty keeps nothing on disk
  int valid_max_len = 128;        // greedy decode limit during validation
  long log_every = 50;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
  // Stop early once greedy validation top-1 reaches this value.
  double stop_at_valid_top1 = 2.0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  long best_step = 0;
  double best_valid_top1 = -1.0;
  long steps = 0;
  std::vector<double> step_losses;  // token-mean loss per optimizer step
};

/// Batching key: the larger of source and target token counts.
inline int token_count(const app::Example& x) {
  return std::max(x.source_tokens, static_cast<int>(x.target_ids.size()));
}

/// Cycles through token-budget batches, reshuffling at each pass.
class BatchStream {
 public:
  BatchStream(const std::vector<app::Example>& xs, int max_tokens, std::mt19937_64& rng)
      : xs_(xs), max_tokens_(max_tokens), rng_(rng) {
    for (const auto& x : xs) counts_.push_back(token_count(x));
  }

  const std::vector<std::size_t>& next() {
    if (cursor_ >= order_.size()) {
      order_ = graph::make_batches(counts_, max_tokens_, &rng_);
      cursor_ = 0;
      if (order_.empty()) throw std::invalid_argument("training set is empty");
    }
    return order_[cursor_++];
  }

 private:
  const std::vector<app::Example>& xs_;
  int max_tokens_;
  std::mt19937_64& rng_;
  std::vector<int> counts_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t cursor_ = 0;
};

/// Accumulates gradients over one optimizer step's micro-batches. The loss
/// is normalized by the total target tokens across all of them, so the
/// gradient does not depend on how the tokens are split. Returns the
/// token-mean loss.
template <class T>
double accumulate_gradients(const model::Graph2Smiles<T>& m, const std::vector<graph::Batch>& group,
                            std::mt19937_64& rng, bool training) {
  std::size_t tokens = 0;
  for (const auto& b : group)
    for (auto mk : b.target_mask) tokens += mk;
  if (tokens == 0) return 0.0;
  double total = 0.0;
  for (const auto& b : group) {
    auto parts = m.loss(b, rng, training);
    auto loss = nn::scale(parts.sum, T(1) / static_cast<T>(tokens));
    total += static_cast<double>(loss.item());
    loss.backward();
  }
  return total;
}

template <class T>
TrainResult train_model(model::Graph2Smiles<T>& m, const std::vector<app::Example>& train_set,
                        const std::vector<app::Example>& valid_set, const model::Vocab& vocab,
                        const TrainConfig& cfg, const TrainerOptions& opt = {}) {
  cfg.validate();
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);
  std::mt19937_64 rng(cfg.seed);
  BatchStream stream(train_set, cfg.max_tokens, rng);
  Adam<T> adam(m.params(), cfg.adam_betas[0], cfg.adam_betas[1], cfg.adam_eps);
  std::ofstream metrics;
  if (!opt.out_dir.empty()) metrics.open(opt.out_dir / "metrics.jsonl");
  TrainResult res;
  double window = 0.0;
  long window_n = 0;
  for (long step = 1; step <= cfg.total_steps; ++step) {
    std::vector<graph::Batch> group;
    for (int a = 0; a < cfg.accum_steps; ++a) group.push_back(app::collate_examples(train_set, stream.next()));
    m.params().zero_grad();
    const double loss = accumulate_gradients(m, group, rng, true);
    if (!std::isfinite(loss)) throw NanLoss(step);
    const double lr = noam_lr(step, m.config().d_model, cfg.noam_factor, cfg.warmup_steps);
    adam.step(lr);
    res.step_losses.push_back(loss);
    res.steps = step;
    window += loss;
    ++window_n;
    if (step % opt.log_every == 0) {
      nlohmann::json j{{"step", step}, {"loss", window / static_cast<double>(window_n)}, {"lr", lr}};
      if (metrics) metrics << j.dump() << '\n';
      if (opt.log) opt.log(j.dump());
      window = 0.0;
      window_n = 0;
    }
    const bool last = step == cfg.total_steps;
    if (step % cfg.checkpoint_every == 0 || last) {
      double top1 = -1.0;
      if (!valid_set.empty())
        top1 = infer::top1_accuracy(infer::greedy_predictions(m, valid_set, vocab, opt.valid_max_len), valid_set);
      nlohmann::json j{{"step", step}, {"valid_top1", top1}};
      std::filesystem::path ckpt;
      if (!opt.out_dir.empty()) {
        ckpt = opt.out_dir / ("step_" + std::to_string(step) + ".ckpt");
        m.save(ckpt.string());
        j["checkpoint"] = ckpt.filename().string();
      }
      if (metrics) metrics << j.dump() << '\n';
      if (opt.log) opt.log(j.dump());
      if (top1 > res.best_valid_top1 || res.best_step == 0) {
        res.best_valid_top1 = top1;
        res.best_step = step;
        if (!ckpt.empty()) {
          res.best_checkpoint = opt.out_dir / "best.ckpt";
          std::filesystem::copy_file(ckpt, res.best_checkpoint, std::filesystem::copy_options::overwrite_existing);
        }
      }
      if (top1 >= opt.stop_at_valid_top1) break;
    }
  }
  if (metrics) metrics.flush();
  return res;
}

}  // namespace g2s::train
