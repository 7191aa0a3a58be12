#include <doctest.h>

#include <cmath>

#include "s2w/errors.hpp"
#include "s2w/model.hpp"
#include "support/fixture.hpp"
#include "support/model_helpers.hpp"

using namespace s2w;
using testing::random_screen_features;
using testing::tiny_model_config;

TEST_CASE("embed_elements shape, determinism and bias-free projection") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 11);
  Rng rng(1);
  ScreenFeatures f = random_screen_features(config, 3, rng);

  Tape tape;
  Var rows = embed_elements(tape, f, params);
  CHECK(tape.value(rows).shape() == std::vector<int>{4, config.hidden_size});

  SUBCASE("identical feature rows embed identically") {
    f.elements[1] = f.elements[0];
    Tape t2;
    const Tensor& v = t2.value(embed_elements(t2, f, params));
    for (int c = 0; c < v.cols(); ++c) {
      CHECK(v.at(0, c) == doctest::Approx(v.at(1, c)).epsilon(1e-12));
    }
  }

  SUBCASE("zeroed parameters produce all-zero output") {
    for (Param* p : params.all_params()) p->value.fill(0.0);
    Tape t2;
    const Tensor& v = t2.value(embed_elements(t2, f, params));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 0.0);
  }

  SUBCASE("out-of-range categorical raises an indexing error") {
    f.elements[0].class_id = config.class_table_size + 3;
    Tape t2;
    CHECK_THROWS_AS(embed_elements(t2, f, params), ShapeError);
  }
}

TEST_CASE("encode_structure: default-config shape and finiteness on one row") {
  ModelConfig config;  // paper-scale defaults: hidden 128, 6 layers, 8 heads
  config.vocab_size = 100;
  ModelParams params = ModelParams::init(config, 5);
  Rng rng(2);
  const ScreenFeatures f = random_screen_features(config, 0, rng);

  Tape tape;
  Var embedded = embed_elements(tape, f, params);  // single app-desc row
  Var encoded = encode_structure(tape, embedded, params);
  CHECK(tape.value(encoded).shape() == std::vector<int>{1, 128});
  CHECK(tape.value(encoded).all_finite());
}

TEST_CASE("encode_structure is permutation-equivariant over rows") {
  // Positional information enters only through the embedded features, so
  // permuting input rows must permute output rows identically.
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 21);
  Rng rng(3);
  Tensor embedded({4, config.hidden_size});
  for (std::size_t i = 0; i < embedded.size(); ++i) embedded[i] = rng.normal();

  const std::vector<int> perm = {2, 0, 3, 1};
  Tensor permuted({4, config.hidden_size});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < config.hidden_size; ++c) {
      permuted.at(r, c) = embedded.at(perm[static_cast<std::size_t>(r)], c);
    }
  }

  Tape t1, t2;
  const Tensor& out = t1.value(encode_structure(t1, t1.input(embedded), params));
  const Tensor& out_perm =
      t2.value(encode_structure(t2, t2.input(permuted), params));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < config.hidden_size; ++c) {
      CHECK(out_perm.at(r, c) ==
            doctest::Approx(out.at(perm[static_cast<std::size_t>(r)], c)).epsilon(1e-9));
    }
  }
}

TEST_CASE("masked padding rows do not affect unmasked outputs") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 31);
  Rng rng(4);
  Tensor base({5, config.hidden_size});
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = rng.normal();
  Tensor altered = base;
  for (int c = 0; c < config.hidden_size; ++c) {
    altered.at(3, c) = 7.0 + c;  // rows 3,4 are padding
    altered.at(4, c) = -3.5 * c;
  }
  const std::vector<char> valid = {1, 1, 1, 0, 0};

  Tape t1, t2;
  const Tensor& a = t1.value(encode_structure(t1, t1.input(base), params, &valid));
  const Tensor& b =
      t2.value(encode_structure(t2, t2.input(altered), params, &valid));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < config.hidden_size; ++c) {
      CHECK(std::abs(a.at(r, c) - b.at(r, c)) <= 1e-6);
    }
  }
}

TEST_CASE("encode_images: spatial trace, flatten width and output shape") {
  ModelConfig config;  // default: filters {8,16,32,64,128,256,256}
  config.vocab_size = 50;
  REQUIRE(cnn_spatial_trace(config) == std::vector<int>{32, 16, 8, 4, 2, 1, 1});

  ModelParams params = ModelParams::init(config, 41);
  Rng rng(5);
  const ScreenFeatures f = random_screen_features(config, 3, rng);

  Tape tape(false);
  std::vector<std::vector<int>> block_shapes;
  Var encoded = encode_images(tape, f, params, ForwardMode::eval(), &block_shapes);
  CHECK(tape.value(encoded).shape() == std::vector<int>{3, 128});
  REQUIRE(block_shapes.size() == 7);
  const std::vector<int> expected_spatial = {32, 16, 8, 4, 2, 1, 1};
  for (std::size_t b = 0; b < 7; ++b) {
    CHECK(block_shapes[b][1] == expected_spatial[b]);
    CHECK(block_shapes[b][2] == expected_spatial[b]);
    CHECK(block_shapes[b][3] == config.cnn_filters[b]);
  }
  // final 1x1 map flattens to 256
  CHECK(block_shapes.back()[1] * block_shapes.back()[2] * block_shapes.back()[3] == 256);
}

TEST_CASE("encode_images determinism: identical crops give identical rows") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 51);
  Rng rng(6);
  ScreenFeatures f = random_screen_features(config, 3, rng);
  f.elements[2].image_crop = f.elements[0].image_crop;

  Tape tape(false);
  const Tensor& rows = tape.value(encode_images(tape, f, params));  // eval BN
  for (int c = 0; c < rows.cols(); ++c) {
    CHECK(rows.at(0, c) == doctest::Approx(rows.at(2, c)).epsilon(1e-12));
  }
}

TEST_CASE("fuse concatenates and pads the app-description row") {
  Tape tape;
  Rng rng(7);
  Tensor struct_enc({4, 6});
  for (std::size_t i = 0; i < struct_enc.size(); ++i) struct_enc[i] = rng.normal();
  Tensor image_enc({3, 5});
  for (std::size_t i = 0; i < image_enc.size(); ++i) image_enc[i] = rng.normal();

  Var fused = fuse(tape, tape.input(struct_enc), tape.input(image_enc));
  const Tensor& v = tape.value(fused);
  CHECK(v.shape() == std::vector<int>{4, 11});
  // slices recover the inputs exactly
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 6; ++c) CHECK(v.at(r, c) == struct_enc.at(r, c));
    for (int c = 0; c < 5; ++c) CHECK(v.at(r, 6 + c) == image_enc.at(r, c));
  }
  // app-description row: structural part plus zero image padding
  for (int c = 0; c < 6; ++c) CHECK(v.at(3, c) == struct_enc.at(3, c));
  for (int c = 0; c < 5; ++c) CHECK(v.at(3, 6 + c) == 0.0);

  SUBCASE("zero image encodings reduce to zero-padded structural rows") {
    Tape t2;
    Var z = fuse(t2, t2.input(struct_enc), t2.input(Tensor::zeros({3, 5})));
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 5; ++c) CHECK(t2.value(z).at(r, 6 + c) == 0.0);
    }
  }
  SUBCASE("row-count mismatch raises a shape error") {
    Tape t2;
    CHECK_THROWS_AS(
        fuse(t2, t2.input(struct_enc), t2.input(Tensor::zeros({4, 5}))),
        ShapeError);
  }
}

TEST_CASE("fuse width is hidden + image encoding (256 at defaults)") {
  ModelConfig config;
  config.vocab_size = 60;
  ModelParams params = ModelParams::init(config, 61);
  Rng rng(8);
  const ScreenFeatures f = random_screen_features(config, 2, rng);
  Tape tape(false);
  Var fused = encode_screen(tape, f, params);
  CHECK(tape.value(fused).shape() == std::vector<int>{3, 256});
}

TEST_CASE("decode_logits causality and shapes") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 71);
  Rng rng(9);
  const ScreenFeatures f = random_screen_features(config, 2, rng);

  Tape tape(false);
  Var fused = encode_screen(tape, f, params);
  const Tensor fused_v = tape.value(fused);

  SUBCASE("length-1 prefix yields [1, vocab]") {
    Var logits = decode_logits(tape, fused, {Vocabulary::kStart}, params);
    CHECK(tape.value(logits).shape() == std::vector<int>{1, config.vocab_size});
  }

  SUBCASE("changing a later token leaves earlier logits unchanged") {
    std::vector<int> prefix = {Vocabulary::kStart, 5, 6, 7};
    Tape t1(false), t2(false);
    Var f1 = t1.input(fused_v);
    Var f2 = t2.input(fused_v);
    const Tensor& a = t1.value(decode_logits(t1, f1, prefix, params));
    std::vector<int> altered = prefix;
    altered[3] = 9;  // position 3 changed; logits at 0..2 must not move
    const Tensor& b = t2.value(decode_logits(t2, f2, altered, params));
    for (int pos = 0; pos < 3; ++pos) {
      for (int v = 0; v < config.vocab_size; ++v) {
        CHECK(std::abs(a.at(pos, v) - b.at(pos, v)) <= 1e-6);
      }
    }
    // and position 3 itself must move for some vocabulary entry
    Scalar max_diff = 0.0;
    for (int v = 0; v < config.vocab_size; ++v) {
      max_diff = std::max(max_diff, std::abs(a.at(3, v) - b.at(3, v)));
    }
    CHECK(max_diff > 1e-6);
  }

  SUBCASE("randomized causality perturbation sweep") {
    Rng prng(10);
    for (int round = 0; round < 10; ++round) {
      const int len = 2 + static_cast<int>(prng.below(5));
      std::vector<int> prefix = {Vocabulary::kStart};
      for (int i = 1; i < len; ++i) {
        prefix.push_back(static_cast<int>(prng.below(config.vocab_size)));
      }
      const int flip = 1 + static_cast<int>(prng.below(len - 1));
      std::vector<int> altered = prefix;
      altered[flip] = static_cast<int>((altered[flip] + 1 + prng.below(9)) %
                                       config.vocab_size);
      Tape t1(false), t2(false);
      const Tensor& a =
          t1.value(decode_logits(t1, t1.input(fused_v), prefix, params));
      const Tensor& b =
          t2.value(decode_logits(t2, t2.input(fused_v), altered, params));
      for (int pos = 0; pos < flip; ++pos) {
        for (int v = 0; v < config.vocab_size; ++v) {
          CHECK(std::abs(a.at(pos, v) - b.at(pos, v)) <= 1e-6);
        }
      }
    }
  }

  SUBCASE("logits respond to encoding perturbations") {
    std::vector<int> prefix = {Vocabulary::kStart, 4};
    Tape t1(false), t2(false);
    const Tensor& a = t1.value(decode_logits(t1, t1.input(fused_v), prefix, params));
    Tensor perturbed = fused_v;
    Rng prng(11);
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      perturbed[i] += prng.uniform(-0.5, 0.5);
    }
    const Tensor& b = t2.value(decode_logits(t2, t2.input(perturbed), prefix, params));
    Scalar max_diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
    }
    CHECK(max_diff > 0.0);
  }

  SUBCASE("prefix validation") {
    CHECK_THROWS_AS(decode_logits(tape, fused, {5}, params), ShapeError);
    std::vector<int> too_long(config.max_decode_len + 1, 4);
    too_long[0] = Vocabulary::kStart;
    CHECK_THROWS_AS(decode_logits(tape, fused, too_long, params), ShapeError);
  }
}

TEST_CASE("decoder softmax rows normalize to one") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 81);
  Rng rng(12);
  const ScreenFeatures f = random_screen_features(config, 2, rng);
  Tape tape(false);
  Var fused = encode_screen(tape, f, params);
  Var logits = decode_logits(tape, fused, {Vocabulary::kStart, 5, 8}, params);
  Var probs = tape.softmax_rows(logits);
  for (int r = 0; r < 3; ++r) {
    Scalar sum = 0.0;
    for (int v = 0; v < config.vocab_size; ++v) sum += tape.value(probs).at(r, v);
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("sequence loss values") {
  SUBCASE("uniform logits over V=10000 give ln 10000") {
    Tape tape;
    Var logits = tape.input(Tensor::zeros({3, 10000}));
    Var loss = sequence_loss(tape, logits, {1, 2, 3}, {1, 1, 1});
    CHECK(tape.value(loss)[0] == doctest::Approx(9.2103).epsilon(1e-4));
  }
  SUBCASE("confident correct logits drive the loss to zero") {
    Tensor logits = Tensor::zeros({2, 6});
    logits.at(0, 4) = 50.0;
    logits.at(1, 1) = 50.0;
    Tape tape;
    Var loss = sequence_loss(tape, tape.input(logits), {4, 1}, {1, 1});
    CHECK(tape.value(loss)[0] == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("hand-computed oracle, M=3 V=5") {
    // Independent computation with long double log-sum-exp.
    const std::vector<std::vector<long double>> rows = {
        {0.3L, -1.2L, 0.8L, 2.0L, -0.5L},
        {1.1L, 0.0L, -0.7L, 0.4L, 0.9L},
        {-2.0L, 0.6L, 1.5L, -0.3L, 0.2L}};
    const std::vector<int> targets = {3, 0, 2};
    long double expected = 0.0L;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      long double sum = 0.0L;
      for (long double v : rows[r]) sum += expl(v);
      expected += logl(sum) - rows[r][static_cast<std::size_t>(targets[r])];
    }
    expected /= 3.0L;

    Tensor logits({3, 5});
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 5; ++c) {
        logits.at(r, c) = static_cast<Scalar>(rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
      }
    }
    Tape tape;
    Var loss = sequence_loss(tape, tape.input(logits), targets, {1, 1, 1});
    CHECK(std::abs(tape.value(loss)[0] - static_cast<Scalar>(expected)) <= 1e-6);
  }
  SUBCASE("target beyond the vocabulary raises an indexing error") {
    Tape tape;
    Var logits = tape.input(Tensor::zeros({1, 5}));
    CHECK_THROWS_AS(sequence_loss(tape, logits, {5}, {1}), ShapeError);
  }
}

TEST_CASE("inference determinism: identical inputs give identical logits") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 91);
  Rng rng(13);
  const ScreenFeatures f = random_screen_features(config, 3, rng);
  const std::vector<int> prefix = {Vocabulary::kStart, 6, 2};

  Tape t1(false), t2(false);
  const Tensor& a =
      t1.value(decode_logits(t1, encode_screen(t1, f, params), prefix, params));
  const Tensor& b =
      t2.value(decode_logits(t2, encode_screen(t2, f, params), prefix, params));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("spot gradient check through the full model graph") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 101);
  Rng rng(14);
  ScreenFeatures f = random_screen_features(config, 2, rng);
  TeacherForcedBatchItem item{&f, {5, 9, 4}};

  auto forward = [&](Tape& tape) {
    return teacher_forced_loss(tape, item, params,
                               ForwardMode{false, BnMode::kTrainFrozen, nullptr});
  };
  params.zero_grads();
  {
    Tape tape;
    Var loss = forward(tape);
    tape.backward(loss);
  }
  // A few scalars from distinct parameter groups.
  Rng pick(15);
  for (Param* p : {&params.input_proj, &params.encoder[0].attn.wq,
                   &params.cnn[0].c1.w, &params.cnn[6].c3.bn_gamma,
                   &params.word_embedding, &params.decoder[0].cross_attn.wk,
                   &params.out_w, &params.class_table}) {
    for (int round = 0; round < 3; ++round) {
      const std::size_t i = pick.below(p->value.size());
      const Scalar saved = p->value[i];
      const Scalar h = 1e-5;
      p->value[i] = saved + h;
      Tape tp(false);
      const Scalar up = tp.value(forward(tp))[0];
      p->value[i] = saved - h;
      Tape tm(false);
      const Scalar down = tm.value(forward(tm))[0];
      p->value[i] = saved;
      const Scalar numeric = (up - down) / (2 * h);
      const Scalar analytic = p->grad[i];
      const Scalar denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      INFO(p->name, "[", i, "] analytic=", analytic, " numeric=", numeric);
      CHECK(std::abs(analytic - numeric) / denom < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip and config mismatch refusal") {
  const ModelConfig config = tiny_model_config();
  ModelParams params = ModelParams::init(config, 111);
  // Touch BN running stats so they differ from the defaults.
  params.cnn[0].c1.bn_state.running_mean[0] = 0.25;

  const std::string dir = testing::make_temp_dir("checkpoint");
  const std::string path = dir + "/model.ckpt";
  params.save(path);

  ModelParams loaded = ModelParams::load(path, &config);
  CHECK(loaded.config == config);
  const auto a = params.all_params();
  auto loaded_params = loaded.all_params();
  REQUIRE(a.size() == loaded_params.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->value.size() == loaded_params[i]->value.size());
    for (std::size_t j = 0; j < a[i]->value.size(); ++j) {
      CHECK(a[i]->value[j] == loaded_params[i]->value[j]);
    }
  }
  CHECK(loaded.cnn[0].c1.bn_state.running_mean[0] == 0.25);

  ModelConfig other = config;
  other.hidden_size = 16;
  other.num_heads = 2;
  CHECK_THROWS_AS(ModelParams::load(path, &other), ConfigError);
}
