#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "s2w/errors.hpp"
#include "s2w/trainer.hpp"
#include "support/pipeline.hpp"

using namespace s2w;

TEST_CASE("sample_target") {
  Screen one;
  one.screen_id = "s";
  one.summaries = {"only one"};
  Rng rng(3);
  for (int i = 0; i < 5; ++i) CHECK(sample_target(one, rng) == "only one");

  SUBCASE("uniform over five summaries within the multinomial bound") {
    Screen five;
    five.screen_id = "s5";
    five.summaries = {"a", "b", "c", "d", "e"};
    Rng draw_rng(1234);
    std::map<std::string, int> counts;
    for (int i = 0; i < 10000; ++i) counts[sample_target(five, draw_rng)] += 1;
    for (const auto& [summary, count] : counts) {
      CHECK(count > 2000 - 150);
      CHECK(count < 2000 + 150);
    }
  }

  SUBCASE("fixed seed reproduces the sequence") {
    Screen five;
    five.screen_id = "s5";
    five.summaries = {"a", "b", "c", "d", "e"};
    Rng r1(7), r2(7);
    for (int i = 0; i < 50; ++i) {
      CHECK(sample_target(five, r1) == sample_target(five, r2));
    }
  }
}

namespace {

testing::PipelineData& overfit_pipeline() {
  static testing::PipelineData data = testing::build_overfit_pipeline();
  return data;
}

TrainConfig quick_config(int steps, Scalar lr) {
  TrainConfig config;
  config.batch_size = 16;  // full batch for the 10-screen fixture
  config.learning_rate = lr;
  config.warmup_steps = 20;
  config.max_epochs = 100000;
  config.max_steps = steps;
  config.seed = 11;
  config.stop_phrases = default_stop_phrases();
  return config;
}

}  // namespace

TEST_CASE("lr=0 leaves the loss curve constant") {
  auto& data = overfit_pipeline();
  ModelParams params = ModelParams::init(testing::overfit_model_config(data),
                                         77, &data.glove, &data.vocab);
  Trainer trainer(params, data.vocab, quick_config(6, 0.0));
  const auto items = data.items();
  const TrainResult result = trainer.train(items, {});
  REQUIRE(result.curve.size() == 6);
  for (const StepLog& row : result.curve) {
    CHECK(row.train_loss == doctest::Approx(result.curve[0].train_loss).epsilon(1e-12));
  }
}

TEST_CASE("same seed reproduces the training curve exactly") {
  auto& data = overfit_pipeline();
  const ModelConfig config = testing::overfit_model_config(data);
  const auto items = data.items();

  auto run = [&](std::uint64_t seed) {
    ModelParams params = ModelParams::init(config, 31, &data.glove, &data.vocab);
    TrainConfig tc = quick_config(8, 2e-3);
    tc.seed = seed;
    Trainer trainer(params, data.vocab, tc);
    return trainer.train(items, items).curve;
  };
  const auto a = run(5);
  const auto b = run(5);
  const auto c = run(6);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train_loss == b[i].train_loss);  // bitwise when determinstic
  }
  bool any_differs = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i) {
    any_differs = any_differs || a[i].train_loss != c[i].train_loss;
  }
  CHECK(any_differs);  // a different seed visits targets in another order
}

TEST_CASE("training reads only training-split data") {
  // Two runs share the seed; the second gets corrupted validation summaries.
  // The training-loss columns must match bitwise; only val_loss may move.
  auto& data = overfit_pipeline();
  const ModelConfig config = testing::overfit_model_config(data);
  const auto train_items = data.items();

  Corpus corrupted = data.corpus;  // summaries replaced by garbage
  std::vector<Screen> fake_screens;
  fake_screens.reserve(corrupted.screens.size());
  std::vector<TrainItem> val_clean, val_bad;
  for (std::size_t i = 0; i < train_items.size(); ++i) {
    val_clean.push_back({train_items[i].screen, train_items[i].features});
  }
  for (std::size_t i = 0; i < train_items.size(); ++i) {
    fake_screens.push_back(*train_items[i].screen);
    fake_screens.back().summaries = {"zzz qqq xxx unseen garbage"};
    val_bad.push_back({&fake_screens.back(), train_items[i].features});
  }

  auto run = [&](const std::vector<TrainItem>& val) {
    ModelParams params = ModelParams::init(config, 41, &data.glove, &data.vocab);
    Trainer trainer(params, data.vocab, quick_config(6, 1e-3));
    return trainer.train(train_items, val).curve;
  };
  const auto clean = run(val_clean);
  const auto bad = run(val_bad);
  REQUIRE(clean.size() == bad.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i].train_loss == bad[i].train_loss);
  }

  SUBCASE("vocabulary built from the training split maps unseen words to UNK") {
    CHECK(data.vocab.index_of("zzz") == Vocabulary::kUnk);
    CHECK(data.vocab.index_of("login") != Vocabulary::kUnk);
  }
}

TEST_CASE("short overfit run reduces the loss substantially") {
  auto& data = overfit_pipeline();
  ModelParams params = ModelParams::init(testing::overfit_model_config(data),
                                         51, &data.glove, &data.vocab);
  Trainer trainer(params, data.vocab, quick_config(60, 3e-3));
  const auto items = data.items();
  const TrainResult result = trainer.train(items, {});
  REQUIRE(result.curve.size() == 60);
  const Scalar first = result.curve.front().train_loss;
  const Scalar last = result.curve.back().train_loss;
  CHECK(last < 0.5 * first);
  CHECK(trainer.token_accuracy(items) > 0.5);
}

TEST_CASE("non-finite loss aborts with the offending screen in the message") {
  auto& data = overfit_pipeline();
  ModelParams params = ModelParams::init(testing::overfit_model_config(data),
                                         61, &data.glove, &data.vocab);
  params.input_proj.value[0] = std::numeric_limits<Scalar>::quiet_NaN();
  Trainer trainer(params, data.vocab, quick_config(2, 1e-3));
  try {
    trainer.train(data.items(), {});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("s0") != std::string::npos);  // screen id in the dump
  }
}

TEST_CASE("loss curve CSV format") {
  const std::string dir = testing::make_temp_dir("curve");
  const std::string path = dir + "/curve.csv";
  write_loss_curve_csv(path, {{1, 2.5, std::nullopt}, {2, 2.25, 2.75}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,train_loss,val_loss");
  std::getline(in, line);
  CHECK(line == "1,2.5,");
  std::getline(in, line);
  CHECK(line == "2,2.25,2.75");
}

TEST_CASE("adam with warmup ramps the learning rate linearly") {
  Param p{"p", Tensor::zeros({1})};
  TrainConfig config;
  config.learning_rate = 1.0;
  config.warmup_steps = 4;
  AdamOptimizer adam({&p}, config);
  CHECK(adam.current_learning_rate() == 0.0);
  p.ensure_grad();
  p.grad[0] = 1.0;
  adam.step();
  CHECK(adam.current_learning_rate() == doctest::Approx(0.25));
  for (int i = 0; i < 4; ++i) {
    p.grad[0] = 1.0;
    adam.step();
  }
  CHECK(adam.current_learning_rate() == doctest::Approx(1.0));
}
