#include "s2w/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "s2w/csv.hpp"
#include "s2w/errors.hpp"
#include "s2w/log.hpp"
#include "s2w/text.hpp"

namespace s2w {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params,
                             const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      warmup_(config.warmup_steps) {
  for (Param* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
    p->ensure_grad();
  }
}

Scalar AdamOptimizer::current_learning_rate() const {
  if (warmup_ <= 0) return lr_;
  const Scalar frac = static_cast<Scalar>(t_) / warmup_;
  return lr_ * std::min(1.0, frac);
}

void AdamOptimizer::step() {
  ++t_;
  const Scalar lr = current_learning_rate();
  const Scalar bc1 = 1.0 - std::pow(beta1_, t_);
  const Scalar bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    p->ensure_grad();
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const Scalar g = p->grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const Scalar mhat = m_[i][j] / bc1;
      const Scalar vhat = v_[i][j] / bc2;
      p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      p->grad[j] = 0.0;
    }
  }
}

std::string sample_target(const Screen& screen, Rng& rng) {
  if (screen.summaries.empty()) {
    throw DataError("screen " + screen.screen_id + " has no summaries");
  }
  return screen.summaries[rng.below(screen.summaries.size())];
}

Trainer::Trainer(ModelParams& params, const Vocabulary& vocab,
                 TrainConfig config)
    : params_(params), vocab_(vocab), config_(std::move(config)) {
  config_.validate();
}

std::vector<int> Trainer::encode_target(const std::string& summary) const {
  const std::string cleaned =
      config_.stop_phrases.empty()
          ? summary
          : strip_stop_phrases(summary, config_.stop_phrases);
  return vocab_.encode(tokenize(cleaned));
}

TrainResult Trainer::train(const std::vector<TrainItem>& train_items,
                           const std::vector<TrainItem>& val_items) {
  if (train_items.empty()) throw DataError("no training screens");
  TrainResult result;
  AdamOptimizer adam(params_.all_params(), config_);
  Rng shuffle_rng = Rng(config_.seed).fork(1);
  Rng target_rng = Rng(config_.seed).fork(2);
  Rng dropout_rng = Rng(config_.seed).fork(3);

  Scalar best_val = std::numeric_limits<Scalar>::infinity();
  int epochs_since_best = 0;
  int step = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= config_.max_epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(train_items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size() && !stop;
         start += static_cast<std::size_t>(config_.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(config_.batch_size));
      const Scalar batch_scale = 1.0 / static_cast<Scalar>(end - start);
      Scalar batch_loss = 0.0;

      for (std::size_t i = start; i < end; ++i) {
        const TrainItem& item = train_items[order[i]];
        const std::string target = sample_target(*item.screen, target_rng);
        TeacherForcedBatchItem batch_item{item.features, encode_target(target)};
        Tape tape;
        try {
          Var loss = teacher_forced_loss(tape, batch_item, params_,
                                         ForwardMode::train(dropout_rng));
          const Scalar loss_value = tape.value(loss)[0];
          if (!std::isfinite(loss_value)) {
            throw NumericError("non-finite loss");
          }
          batch_loss += loss_value;
          // Backward from the batch-mean so gradients accumulate the average.
          tape.backward(tape.scale(loss, batch_scale));
        } catch (const NumericError& e) {
          throw NumericError("numeric fault at step " + std::to_string(step + 1) +
                             ", batch screen " + item.screen->screen_id + ": " +
                             e.what());
        }
      }
      adam.step();
      ++step;
      result.curve.push_back({step, batch_loss * batch_scale, std::nullopt});
      if (config_.max_steps > 0 && step >= config_.max_steps) stop = true;
    }

    result.epochs_run = epoch;
    if (!val_items.empty()) {
      const Scalar val_loss = evaluate_loss(val_items);
      if (!result.curve.empty()) result.curve.back().val_loss = val_loss;
      if (val_loss < best_val) {
        best_val = val_loss;
        result.best_val_loss = val_loss;
        result.best_epoch = epoch;
        epochs_since_best = 0;
        if (!config_.checkpoint_path.empty()) {
          params_.save(config_.checkpoint_path);
        }
      } else {
        ++epochs_since_best;
        if (epochs_since_best >= config_.patience) {
          result.early_stopped = true;
          stop = true;
        }
      }
      log_info("epoch " + std::to_string(epoch) + ": val_loss " +
               std::to_string(val_loss));
    } else if (!config_.checkpoint_path.empty()) {
      params_.save(config_.checkpoint_path);
    }
  }

  result.steps_run = step;
  if (!config_.loss_curve_path.empty()) {
    write_loss_curve_csv(config_.loss_curve_path, result.curve);
  }
  return result;
}

Scalar Trainer::evaluate_loss(const std::vector<TrainItem>& items) {
  if (items.empty()) throw DataError("no screens to evaluate");
  Scalar total = 0.0;
  for (const TrainItem& item : items) {
    Scalar screen_loss = 0.0;
    for (const std::string& summary : item.screen->summaries) {
      TeacherForcedBatchItem batch_item{item.features, encode_target(summary)};
      Tape tape(false);
      screen_loss += tape.value(
          teacher_forced_loss(tape, batch_item, params_, ForwardMode::eval()))[0];
    }
    total += screen_loss / static_cast<Scalar>(item.screen->summaries.size());
  }
  return total / static_cast<Scalar>(items.size());
}

Scalar Trainer::token_accuracy(const std::vector<TrainItem>& items,
                               std::size_t target_index) {
  std::size_t correct = 0, total = 0;
  for (const TrainItem& item : items) {
    if (target_index >= item.screen->summaries.size()) {
      throw DataError("screen " + item.screen->screen_id +
                      " has no summary at index " + std::to_string(target_index));
    }
    std::vector<int> body =
        encode_target(item.screen->summaries[target_index]);
    if (static_cast<int>(body.size()) > params_.config.max_decode_len - 1) {
      body.resize(static_cast<std::size_t>(params_.config.max_decode_len - 1));
    }
    std::vector<int> prefix = {Vocabulary::kStart};
    prefix.insert(prefix.end(), body.begin(), body.end());
    std::vector<int> targets = body;
    targets.push_back(Vocabulary::kEnd);

    Tape tape(false);
    Var fused = encode_screen(tape, *item.features, params_, ForwardMode::eval());
    Var logits = decode_logits(tape, fused, prefix, params_, ForwardMode::eval());
    const Tensor& lv = tape.value(logits);
    for (int r = 0; r < lv.rows(); ++r) {
      int best = 0;
      for (int v = 1; v < lv.cols(); ++v) {
        if (lv.at(r, v) > lv.at(r, best)) best = v;
      }
      correct += best == targets[static_cast<std::size_t>(r)] ? 1 : 0;
      total += 1;
    }
  }
  return total == 0 ? 0.0 : static_cast<Scalar>(correct) / static_cast<Scalar>(total);
}

void write_loss_curve_csv(const std::string& path,
                          const std::vector<StepLog>& curve) {
  CsvWriter csv(path);
  csv.write_row({"step", "train_loss", "val_loss"});
  for (const StepLog& row : curve) {
    char train_buf[64], val_buf[64];
    std::snprintf(train_buf, sizeof(train_buf), "%.10g", row.train_loss);
    std::string val;
    if (row.val_loss) {
      std::snprintf(val_buf, sizeof(val_buf), "%.10g", *row.val_loss);
      val = val_buf;
    }
    csv.write_row({std::to_string(row.step), train_buf, val});
  }
}

}  // namespace s2w
