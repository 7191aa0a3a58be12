#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s2w/corpus.hpp"
#include "s2w/model.hpp"
#include "s2w/rng.hpp"

namespace s2w {

struct TrainConfig {
  int batch_size = 128;
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar adam_eps = 1e-8;
  int warmup_steps = 1000;  // linear learning-rate warmup
  int max_epochs = 50;
  int max_steps = -1;  // optional hard cap; -1 = none
  int patience = 5;    // early stop on validation loss
  std::uint64_t seed = 42;
  std::string checkpoint_path;  // best-validation checkpoint ("" = skip)
  std::string loss_curve_path;  // CSV step,train_loss,val_loss ("" = skip)
  std::vector<std::string> stop_phrases;  // applied to training targets

  void validate() const;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, const TrainConfig& config);
  void step();  // applies accumulated grads, then zeroes them
  int steps_taken() const { return t_; }
  Scalar current_learning_rate() const;

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  Scalar lr_, beta1_, beta2_, eps_;
  int warmup_;
  int t_ = 0;
};

// Uniform draw among the screen's summaries.
std::string sample_target(const Screen& screen, Rng& rng);

struct TrainItem {
  const Screen* screen = nullptr;
  const ScreenFeatures* features = nullptr;
};

struct StepLog {
  int step = 0;
  Scalar train_loss = 0.0;
  std::optional<Scalar> val_loss;
};

struct TrainResult {
  std::vector<StepLog> curve;
  Scalar best_val_loss = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  int steps_run = 0;
  bool early_stopped = false;
};

class Trainer {
 public:
  Trainer(ModelParams& params, const Vocabulary& vocab, TrainConfig config);

  // Teacher-forced training with per-step random target sampling. Validation
  // loss is computed at each epoch end; the best-validation checkpoint is
  // written when configured. Throws NumericError naming the offending batch
  // when the loss goes non-finite.
  TrainResult train(const std::vector<TrainItem>& train_items,
                    const std::vector<TrainItem>& val_items);

  // Deterministic teacher-forced mean loss (eval mode, all summaries).
  Scalar evaluate_loss(const std::vector<TrainItem>& items);

  // Teacher-forced argmax accuracy against summary `target_index`.
  Scalar token_accuracy(const std::vector<TrainItem>& items,
                        std::size_t target_index = 0);

  // Target text -> token body (stop phrases stripped, tokenized, encoded).
  std::vector<int> encode_target(const std::string& summary) const;

 private:
  ModelParams& params_;
  const Vocabulary& vocab_;
  TrainConfig config_;
};

void write_loss_curve_csv(const std::string& path,
                          const std::vector<StepLog>& curve);

}  // namespace s2w
