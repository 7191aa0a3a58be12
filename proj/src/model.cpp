#include "s2w/model.hpp"

#include <cmath>
#include <map>

#include "s2w/errors.hpp"
#include "s2w/serialize.hpp"

namespace s2w {

void ModelConfig::validate() const {
  if (hidden_size < 1 || num_layers < 1 || num_heads < 1) {
    throw ConfigError("model sizes must be positive");
  }
  if (hidden_size % num_heads != 0) {
    throw ConfigError("hidden_size must be divisible by num_heads");
  }
  if (cnn_filters.size() != 7) {
    throw ConfigError("cnn_filters must list 7 residual blocks");
  }
  if (cnn_filters.back() != cnn_flatten_size) {
    throw ConfigError(
        "cnn_flatten_size must equal the last block's filter count (the "
        "final feature map is 1x1)");
  }
  if (vocab_size < Vocabulary::kNumReserved) {
    throw ConfigError("vocab_size must include the reserved tokens");
  }
  if (max_decode_len < 2) throw ConfigError("max_decode_len must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
}

std::vector<int> cnn_spatial_trace(const ModelConfig& config) {
  std::vector<int> trace;
  int size = kCropSize;
  for (std::size_t i = 0; i < config.cnn_filters.size(); ++i) {
    size = (size + 1) / 2;  // stride-2 SAME conv: ceil(n/2)
    trace.push_back(size);
  }
  return trace;
}

namespace {

Tensor xavier(std::vector<int> shape, Rng& rng) {
  Tensor t(shape);
  Scalar fan_in = 1.0, fan_out = 1.0;
  if (shape.size() == 2) {
    fan_in = shape[0];
    fan_out = shape[1];
  } else if (shape.size() == 4) {
    // conv kernels [KH,KW,Cin,Cout]
    fan_in = static_cast<Scalar>(shape[0]) * shape[1] * shape[2];
    fan_out = static_cast<Scalar>(shape[0]) * shape[1] * shape[3];
  }
  const Scalar limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor uniform_table(std::vector<int> shape, Rng& rng, Scalar limit = 0.05) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

AttentionWeights init_attention(const std::string& prefix, int q_in, int kv_in,
                                int hidden, Rng& rng) {
  AttentionWeights w;
  w.wq = Param(prefix + ".wq", xavier({q_in, hidden}, rng));
  w.bq = Param(prefix + ".bq", Tensor::zeros({hidden}));
  w.wk = Param(prefix + ".wk", xavier({kv_in, hidden}, rng));
  w.bk = Param(prefix + ".bk", Tensor::zeros({hidden}));
  w.wv = Param(prefix + ".wv", xavier({kv_in, hidden}, rng));
  w.bv = Param(prefix + ".bv", Tensor::zeros({hidden}));
  w.wo = Param(prefix + ".wo", xavier({hidden, hidden}, rng));
  w.bo = Param(prefix + ".bo", Tensor::zeros({hidden}));
  return w;
}

ConvLayer init_conv(const std::string& prefix, int kh, int kw, int cin,
                    int cout, Rng& rng) {
  ConvLayer layer;
  layer.w = Param(prefix + ".w", xavier({kh, kw, cin, cout}, rng));
  layer.b = Param(prefix + ".b", Tensor::zeros({cout}));
  layer.bn_gamma = Param(prefix + ".bn_gamma", Tensor::full({cout}, 1.0));
  layer.bn_beta = Param(prefix + ".bn_beta", Tensor::zeros({cout}));
  layer.bn_state.running_mean = Tensor::zeros({cout});
  layer.bn_state.running_var = Tensor::full({cout}, 1.0);
  return layer;
}

void collect_attention(std::vector<Param*>& out, AttentionWeights& w) {
  out.insert(out.end(), {&w.wq, &w.bq, &w.wk, &w.bk, &w.wv, &w.bv, &w.wo, &w.bo});
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed,
                              const EmbeddingTable* glove,
                              const Vocabulary* vocab) {
  config.validate();
  if (glove != nullptr && glove->dimension() != config.embedding_dim) {
    throw ConfigError("word-vector dimension " +
                      std::to_string(glove->dimension()) +
                      " does not match embedding_dim " +
                      std::to_string(config.embedding_dim));
  }
  ModelParams p;
  p.config = config;
  Rng rng(seed);
  const int cd = config.categorical_dim;

  p.class_table = Param("embed.class", uniform_table({config.class_table_size, cd}, rng));
  p.clickable_table = Param("embed.clickable", uniform_table({2, cd}, rng));
  p.left_table = Param("embed.left", uniform_table({config.num_spatial_buckets, cd}, rng));
  p.top_table = Param("embed.top", uniform_table({config.num_spatial_buckets, cd}, rng));
  p.right_table = Param("embed.right", uniform_table({config.num_spatial_buckets, cd}, rng));
  p.bottom_table = Param("embed.bottom", uniform_table({config.num_spatial_buckets, cd}, rng));
  p.pre_table = Param("embed.pre", uniform_table({config.max_tree_position, cd}, rng));
  p.post_table = Param("embed.post", uniform_table({config.max_tree_position, cd}, rng));
  p.depth_table = Param("embed.depth", uniform_table({config.max_tree_position, cd}, rng));
  p.input_proj = Param("input_proj", xavier({config.concat_width(), config.hidden_size}, rng));

  for (int l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    EncoderLayer layer;
    layer.attn = init_attention(prefix + ".attn", config.hidden_size,
                                config.hidden_size, config.hidden_size, rng);
    layer.ln1_gamma = Param(prefix + ".ln1_gamma", Tensor::full({config.hidden_size}, 1.0));
    layer.ln1_beta = Param(prefix + ".ln1_beta", Tensor::zeros({config.hidden_size}));
    layer.ffn_w1 = Param(prefix + ".ffn_w1", xavier({config.hidden_size, config.ffn_size}, rng));
    layer.ffn_b1 = Param(prefix + ".ffn_b1", Tensor::zeros({config.ffn_size}));
    layer.ffn_w2 = Param(prefix + ".ffn_w2", xavier({config.ffn_size, config.hidden_size}, rng));
    layer.ffn_b2 = Param(prefix + ".ffn_b2", Tensor::zeros({config.hidden_size}));
    layer.ln2_gamma = Param(prefix + ".ln2_gamma", Tensor::full({config.hidden_size}, 1.0));
    layer.ln2_beta = Param(prefix + ".ln2_beta", Tensor::zeros({config.hidden_size}));
    p.encoder.push_back(std::move(layer));
  }

  int cin = 1;
  for (int b = 0; b < 7; ++b) {
    const std::string prefix = "cnn." + std::to_string(b);
    const int cout = config.cnn_filters[static_cast<std::size_t>(b)];
    ResidualBlock block;
    block.c1 = init_conv(prefix + ".c1", 3, 3, cin, cout, rng);
    block.c2 = init_conv(prefix + ".c2", 3, 3, cout, cout, rng);
    block.c3 = init_conv(prefix + ".c3", 3, 3, cout, cout, rng);
    if (cin != cout) {
      block.shortcut_w = Param(prefix + ".shortcut", xavier({1, 1, cin, cout}, rng));
    }
    p.cnn.push_back(std::move(block));
    cin = cout;
  }
  p.image_proj_w = Param("image_proj.w",
                         xavier({config.cnn_flatten_size, config.image_encoding_size}, rng));
  p.image_proj_b = Param("image_proj.b", Tensor::zeros({config.image_encoding_size}));

  Tensor word_emb = uniform_table({config.vocab_size, config.embedding_dim}, rng);
  if (glove != nullptr && vocab != nullptr) {
    for (int i = Vocabulary::kNumReserved; i < config.vocab_size; ++i) {
      if (i >= static_cast<int>(vocab->size())) break;
      if (const float* vec = glove->find(vocab->token_at(i))) {
        for (int d = 0; d < config.embedding_dim; ++d) {
          word_emb.at(i, d) = static_cast<Scalar>(vec[d]);
        }
      }
    }
  }
  p.word_embedding = Param("word_embedding", std::move(word_emb));
  p.word_proj = Param("word_proj", xavier({config.embedding_dim, config.hidden_size}, rng));

  for (int l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "decoder." + std::to_string(l);
    DecoderLayer layer;
    layer.self_attn = init_attention(prefix + ".self", config.hidden_size,
                                     config.hidden_size, config.hidden_size, rng);
    layer.ln1_gamma = Param(prefix + ".ln1_gamma", Tensor::full({config.hidden_size}, 1.0));
    layer.ln1_beta = Param(prefix + ".ln1_beta", Tensor::zeros({config.hidden_size}));
    layer.cross_attn = init_attention(prefix + ".cross", config.hidden_size,
                                      config.fused_width(), config.hidden_size, rng);
    layer.ln2_gamma = Param(prefix + ".ln2_gamma", Tensor::full({config.hidden_size}, 1.0));
    layer.ln2_beta = Param(prefix + ".ln2_beta", Tensor::zeros({config.hidden_size}));
    layer.ffn_w1 = Param(prefix + ".ffn_w1", xavier({config.hidden_size, config.ffn_size}, rng));
    layer.ffn_b1 = Param(prefix + ".ffn_b1", Tensor::zeros({config.ffn_size}));
    layer.ffn_w2 = Param(prefix + ".ffn_w2", xavier({config.ffn_size, config.hidden_size}, rng));
    layer.ffn_b2 = Param(prefix + ".ffn_b2", Tensor::zeros({config.hidden_size}));
    layer.ln3_gamma = Param(prefix + ".ln3_gamma", Tensor::full({config.hidden_size}, 1.0));
    layer.ln3_beta = Param(prefix + ".ln3_beta", Tensor::zeros({config.hidden_size}));
    p.decoder.push_back(std::move(layer));
  }

  p.out_w = Param("out.w", xavier({config.hidden_size, config.vocab_size}, rng));
  p.out_b = Param("out.b", Tensor::zeros({config.vocab_size}));
  return p;
}

std::vector<Param*> ModelParams::all_params() {
  std::vector<Param*> out = {
      &class_table, &clickable_table, &left_table,  &top_table,
      &right_table, &bottom_table,    &pre_table,   &post_table,
      &depth_table, &input_proj,
  };
  for (EncoderLayer& layer : encoder) {
    collect_attention(out, layer.attn);
    out.insert(out.end(), {&layer.ln1_gamma, &layer.ln1_beta, &layer.ffn_w1,
                           &layer.ffn_b1, &layer.ffn_w2, &layer.ffn_b2,
                           &layer.ln2_gamma, &layer.ln2_beta});
  }
  for (ResidualBlock& block : cnn) {
    for (ConvLayer* conv : {&block.c1, &block.c2, &block.c3}) {
      out.insert(out.end(), {&conv->w, &conv->b, &conv->bn_gamma, &conv->bn_beta});
    }
    if (block.shortcut_w) out.push_back(&*block.shortcut_w);
  }
  out.insert(out.end(), {&image_proj_w, &image_proj_b, &word_embedding, &word_proj});
  for (DecoderLayer& layer : decoder) {
    collect_attention(out, layer.self_attn);
    out.insert(out.end(), {&layer.ln1_gamma, &layer.ln1_beta});
    collect_attention(out, layer.cross_attn);
    out.insert(out.end(), {&layer.ln2_gamma, &layer.ln2_beta, &layer.ffn_w1,
                           &layer.ffn_b1, &layer.ffn_w2, &layer.ffn_b2,
                           &layer.ln3_gamma, &layer.ln3_beta});
  }
  out.insert(out.end(), {&out_w, &out_b});
  return out;
}

std::vector<std::pair<std::string, BatchNormState*>> ModelParams::bn_states() {
  std::vector<std::pair<std::string, BatchNormState*>> out;
  for (std::size_t b = 0; b < cnn.size(); ++b) {
    const std::string prefix = "cnn." + std::to_string(b);
    out.emplace_back(prefix + ".c1.bn", &cnn[b].c1.bn_state);
    out.emplace_back(prefix + ".c2.bn", &cnn[b].c2.bn_state);
    out.emplace_back(prefix + ".c3.bn", &cnn[b].c3.bn_state);
  }
  return out;
}

void ModelParams::zero_grads() {
  for (Param* p : all_params()) {
    p->ensure_grad();
    p->grad.fill(0.0);
  }
}

std::size_t ModelParams::parameter_count() {
  std::size_t n = 0;
  for (Param* p : all_params()) n += p->value.size();
  return n;
}

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

namespace {

Var linear(Tape& tape, Var x, Param& w, Param& b) {
  return tape.add_row(tape.matmul(x, tape.param(w)), tape.param(b));
}

// Standard scaled dot-product attention over `num_heads` slices. `mask`,
// when given, is an additive [queries, keys] tensor (0 or -1e30).
Var multi_head_attention(Tape& tape, Var queries_in, Var keys_in,
                         AttentionWeights& w, int num_heads,
                         const Tensor* mask) {
  Var q = linear(tape, queries_in, w.wq, w.bq);
  Var k = linear(tape, keys_in, w.wk, w.bk);
  Var v = linear(tape, keys_in, w.wv, w.bv);
  const int hidden = tape.value(q).cols();
  const int head_dim = hidden / num_heads;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(head_dim));

  Var mask_var;
  if (mask != nullptr) mask_var = tape.input(*mask);

  Var merged;
  for (int h = 0; h < num_heads; ++h) {
    Var qh = tape.slice_cols(q, h * head_dim, (h + 1) * head_dim);
    Var kh = tape.slice_cols(k, h * head_dim, (h + 1) * head_dim);
    Var vh = tape.slice_cols(v, h * head_dim, (h + 1) * head_dim);
    Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
    if (mask != nullptr) scores = tape.add(scores, mask_var);
    Var context = tape.matmul(tape.softmax_rows(scores), vh);
    merged = h == 0 ? context : tape.concat_cols(merged, context);
  }
  return linear(tape, merged, w.wo, w.bo);
}

Var feed_forward(Tape& tape, Var x, Param& w1, Param& b1, Param& w2, Param& b2) {
  return linear(tape, tape.relu(linear(tape, x, w1, b1)), w2, b2);
}

Var maybe_dropout(Tape& tape, Var x, const ForwardMode& mode, Scalar rate) {
  if (!mode.training || mode.dropout_rng == nullptr || rate <= 0.0) return x;
  return tape.dropout(x, rate, *mode.dropout_rng);
}

Tensor key_padding_mask(int rows, const std::vector<char>& row_valid) {
  Tensor mask({rows, rows});
  for (int q = 0; q < rows; ++q) {
    for (int k = 0; k < rows; ++k) {
      mask.at(q, k) = row_valid[static_cast<std::size_t>(k)] ? 0.0 : -1e30;
    }
  }
  return mask;
}

Tensor causal_mask(int len) {
  Tensor mask({len, len});
  for (int q = 0; q < len; ++q) {
    for (int k = 0; k < len; ++k) mask.at(q, k) = k <= q ? 0.0 : -1e30;
  }
  return mask;
}

Var conv_bn_relu(Tape& tape, Var x, ConvLayer& layer, int stride,
                 const ForwardMode& mode) {
  Var y = tape.conv2d(x, tape.param(layer.w), tape.param(layer.b), stride);
  y = tape.batch_norm(y, tape.param(layer.bn_gamma), tape.param(layer.bn_beta),
                      layer.bn_state, mode.bn_mode);
  return tape.relu(y);
}

}  // namespace

std::vector<Scalar> sinusoidal_position_row(int position, int dim) {
  std::vector<Scalar> row(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const Scalar exponent = static_cast<Scalar>(2 * (i / 2)) / dim;
    const Scalar angle = position / std::pow(10000.0, exponent);
    row[static_cast<std::size_t>(i)] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return row;
}

Var embed_elements(Tape& tape, const ScreenFeatures& features,
                   ModelParams& params) {
  const ModelConfig& config = params.config;
  const int n = static_cast<int>(features.elements.size());
  const int cd = config.categorical_dim;

  std::vector<int> class_ids, click_ids, l_ids, t_ids, r_ids, b_ids, pre_ids,
      post_ids, depth_ids;
  for (const ElementFeatures& ef : features.elements) {
    class_ids.push_back(ef.class_id);
    click_ids.push_back(ef.clickable);
    l_ids.push_back(ef.spatial_buckets[0]);
    t_ids.push_back(ef.spatial_buckets[1]);
    r_ids.push_back(ef.spatial_buckets[2]);
    b_ids.push_back(ef.spatial_buckets[3]);
    pre_ids.push_back(ef.pre_order);
    post_ids.push_back(ef.post_order);
    depth_ids.push_back(ef.depth);
  }

  Var concat;
  if (n > 0) {
    Var cat = tape.embedding_rows(tape.param(params.class_table), class_ids);
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.clickable_table), click_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.left_table), l_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.top_table), t_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.right_table), r_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.bottom_table), b_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.pre_table), pre_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.post_table), post_ids));
    cat = tape.concat_cols(cat, tape.embedding_rows(tape.param(params.depth_table), depth_ids));
    // The app-description row has no categorical features: zero slots.
    concat = tape.concat_rows(cat, tape.input(Tensor::zeros({1, 9 * cd})));
  } else {
    concat = tape.input(Tensor::zeros({1, 9 * cd}));
  }

  // Text slot: pooled element text, then the pooled app description.
  Tensor text({n + 1, config.embedding_dim});
  for (int r = 0; r < n; ++r) {
    const auto& emb = features.elements[static_cast<std::size_t>(r)].text_embedding;
    if (static_cast<int>(emb.size()) != config.embedding_dim) {
      throw ShapeError("element text embedding width " +
                       std::to_string(emb.size()) + " != embedding_dim " +
                       std::to_string(config.embedding_dim));
    }
    for (int d = 0; d < config.embedding_dim; ++d) {
      text.at(r, d) = static_cast<Scalar>(emb[static_cast<std::size_t>(d)]);
    }
  }
  if (static_cast<int>(features.app_desc_embedding.size()) != config.embedding_dim) {
    throw ShapeError("app description embedding width mismatch");
  }
  for (int d = 0; d < config.embedding_dim; ++d) {
    text.at(n, d) = static_cast<Scalar>(features.app_desc_embedding[static_cast<std::size_t>(d)]);
  }
  concat = tape.concat_cols(concat, tape.input(std::move(text)));

  // Source tag one-hot distinguishes elements from the app description.
  Tensor tags({n + 1, 2});
  for (int r = 0; r <= n; ++r) {
    tags.at(r, 0) = r < n ? 1.0 : 0.0;
    tags.at(r, 1) = r < n ? 0.0 : 1.0;
  }
  concat = tape.concat_cols(concat, tape.input(std::move(tags)));

  return tape.matmul(concat, tape.param(params.input_proj));
}

Var encode_structure(Tape& tape, Var embedded, ModelParams& params,
                     const std::vector<char>* row_valid,
                     const ForwardMode& mode) {
  const int rows = tape.value(embedded).rows();
  if (rows < 1) throw ShapeError("encode_structure needs at least one row");
  Tensor mask;
  if (row_valid != nullptr) {
    if (static_cast<int>(row_valid->size()) != rows) {
      throw ShapeError("row_valid length mismatch");
    }
    mask = key_padding_mask(rows, *row_valid);
  }

  Var x = embedded;
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    EncoderLayer& layer = params.encoder[l];
    Var attended = multi_head_attention(tape, x, x, layer.attn,
                                        params.config.num_heads,
                                        row_valid ? &mask : nullptr);
    attended = maybe_dropout(tape, attended, mode, params.config.dropout);
    x = tape.layer_norm(tape.add(x, attended), tape.param(layer.ln1_gamma),
                        tape.param(layer.ln1_beta));
    Var ff = feed_forward(tape, x, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2,
                          layer.ffn_b2);
    ff = maybe_dropout(tape, ff, mode, params.config.dropout);
    x = tape.layer_norm(tape.add(x, ff), tape.param(layer.ln2_gamma),
                        tape.param(layer.ln2_beta));
    tape.check_finite(x, "encoder layer " + std::to_string(l));
  }
  return x;
}

Var encode_images(Tape& tape, const ScreenFeatures& features,
                  ModelParams& params, const ForwardMode& mode,
                  std::vector<std::vector<int>>* block_shapes) {
  const int n = static_cast<int>(features.elements.size());
  if (n == 0) {
    return tape.input(Tensor::zeros({0, params.config.image_encoding_size}));
  }
  Tensor crops({n, kCropSize, kCropSize, 1});
  for (int i = 0; i < n; ++i) {
    const auto& crop = features.elements[static_cast<std::size_t>(i)].image_crop;
    if (static_cast<int>(crop.size()) != kCropSize * kCropSize) {
      throw ShapeError("element crop must be 64x64");
    }
    for (int p = 0; p < kCropSize * kCropSize; ++p) {
      crops[static_cast<std::size_t>(i) * kCropSize * kCropSize + p] =
          static_cast<Scalar>(crop[static_cast<std::size_t>(p)]);
    }
  }

  Var x = tape.input(std::move(crops));
  for (std::size_t b = 0; b < params.cnn.size(); ++b) {
    ResidualBlock& block = params.cnn[b];
    Var y = conv_bn_relu(tape, x, block.c1, 1, mode);
    y = conv_bn_relu(tape, y, block.c2, 1, mode);
    // Residual join: block input is added to the third conv's input.
    Var shortcut = x;
    if (block.shortcut_w) {
      const int cout = tape.value(y).dim(3);
      shortcut = tape.conv2d(x, tape.param(*block.shortcut_w),
                             tape.input(Tensor::zeros({cout})), 1);
    }
    Var z = tape.add(y, shortcut);
    x = conv_bn_relu(tape, z, block.c3, 2, mode);
    if (block_shapes != nullptr) block_shapes->push_back(tape.value(x).shape());
    tape.check_finite(x, "cnn block " + std::to_string(b));
  }

  Var flat = tape.flatten_images(x);
  if (tape.value(flat).cols() != params.config.cnn_flatten_size) {
    throw ShapeError("cnn flatten width " +
                     std::to_string(tape.value(flat).cols()) +
                     " != configured " +
                     std::to_string(params.config.cnn_flatten_size));
  }
  return linear(tape, flat, params.image_proj_w, params.image_proj_b);
}

Var fuse(Tape& tape, Var struct_enc, Var image_enc) {
  const int rows = tape.value(struct_enc).rows();
  const int image_rows = tape.value(image_enc).rows();
  if (image_rows != rows - 1) {
    throw ShapeError("fuse: expected " + std::to_string(rows - 1) +
                     " image rows for " + std::to_string(rows) +
                     " structural rows, got " + std::to_string(image_rows));
  }
  const int width = tape.value(image_enc).cols();
  // The app-description row gets a zero padding image encoding.
  Var padded = image_rows == 0
                   ? tape.input(Tensor::zeros({1, width}))
                   : tape.concat_rows(image_enc, tape.input(Tensor::zeros({1, width})));
  return tape.concat_cols(struct_enc, padded);
}

Var decode_logits(Tape& tape, Var fused, const std::vector<int>& prefix,
                  ModelParams& params, const ForwardMode& mode) {
  const ModelConfig& config = params.config;
  if (prefix.empty() || prefix.front() != Vocabulary::kStart) {
    throw ShapeError("decoder prefix must begin with <START>");
  }
  if (static_cast<int>(prefix.size()) > config.max_decode_len) {
    throw ShapeError("decoder prefix length " + std::to_string(prefix.size()) +
                     " exceeds max_decode_len " +
                     std::to_string(config.max_decode_len));
  }
  const int len = static_cast<int>(prefix.size());

  Var tokens = tape.embedding_rows(tape.param(params.word_embedding), prefix);
  Var x = tape.matmul(tokens, tape.param(params.word_proj));
  Tensor pe({len, config.hidden_size});
  for (int pos = 0; pos < len; ++pos) {
    const auto row = sinusoidal_position_row(pos, config.hidden_size);
    for (int d = 0; d < config.hidden_size; ++d) pe.at(pos, d) = row[static_cast<std::size_t>(d)];
  }
  x = tape.add(x, tape.input(std::move(pe)));
  x = maybe_dropout(tape, x, mode, config.dropout);

  const Tensor mask = causal_mask(len);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    DecoderLayer& layer = params.decoder[l];
    Var self = multi_head_attention(tape, x, x, layer.self_attn,
                                    config.num_heads, &mask);
    self = maybe_dropout(tape, self, mode, config.dropout);
    x = tape.layer_norm(tape.add(x, self), tape.param(layer.ln1_gamma),
                        tape.param(layer.ln1_beta));
    Var cross = multi_head_attention(tape, x, fused, layer.cross_attn,
                                     config.num_heads, nullptr);
    cross = maybe_dropout(tape, cross, mode, config.dropout);
    x = tape.layer_norm(tape.add(x, cross), tape.param(layer.ln2_gamma),
                        tape.param(layer.ln2_beta));
    Var ff = feed_forward(tape, x, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2,
                          layer.ffn_b2);
    ff = maybe_dropout(tape, ff, mode, config.dropout);
    x = tape.layer_norm(tape.add(x, ff), tape.param(layer.ln3_gamma),
                        tape.param(layer.ln3_beta));
    tape.check_finite(x, "decoder layer " + std::to_string(l));
  }
  return linear(tape, x, params.out_w, params.out_b);
}

Var sequence_loss(Tape& tape, Var logits, const std::vector<int>& targets,
                  const std::vector<char>& mask) {
  return tape.softmax_cross_entropy_mean(logits, targets, mask);
}

Var encode_screen(Tape& tape, const ScreenFeatures& features,
                  ModelParams& params, const ForwardMode& mode) {
  Var embedded = embed_elements(tape, features, params);
  Var struct_enc = encode_structure(tape, embedded, params, nullptr, mode);
  Var image_enc = encode_images(tape, features, params, mode);
  return fuse(tape, struct_enc, image_enc);
}

Var teacher_forced_loss(Tape& tape, const TeacherForcedBatchItem& item,
                        ModelParams& params, const ForwardMode& mode) {
  const ModelConfig& config = params.config;
  std::vector<int> body = item.target_body;
  if (static_cast<int>(body.size()) > config.max_decode_len - 1) {
    body.resize(static_cast<std::size_t>(config.max_decode_len - 1));
  }
  std::vector<int> prefix = {Vocabulary::kStart};
  prefix.insert(prefix.end(), body.begin(), body.end());
  std::vector<int> targets = body;
  targets.push_back(Vocabulary::kEnd);
  const std::vector<char> mask(targets.size(), 1);

  Var fused = encode_screen(tape, *item.features, params, mode);
  Var logits = decode_logits(tape, fused, prefix, params, mode);
  return sequence_loss(tape, logits, targets, mask);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'S', '2', 'W', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_config(BinaryWriter& w, const ModelConfig& c) {
  w.i32(c.hidden_size);
  w.i32(c.num_layers);
  w.i32(c.num_heads);
  w.i32(c.image_encoding_size);
  w.i32(c.cnn_flatten_size);
  w.i32_vec(c.cnn_filters);
  w.i32(c.vocab_size);
  w.i32(c.max_decode_len);
  w.i32(c.max_elements);
  w.i32(c.embedding_dim);
  w.i32(c.categorical_dim);
  w.i32(c.ffn_size);
  w.i32(c.num_spatial_buckets);
  w.i32(c.max_tree_position);
  w.i32(c.class_table_size);
  w.f64(c.dropout);
}

ModelConfig read_config(BinaryReader& r) {
  ModelConfig c;
  c.hidden_size = r.i32();
  c.num_layers = r.i32();
  c.num_heads = r.i32();
  c.image_encoding_size = r.i32();
  c.cnn_flatten_size = r.i32();
  c.cnn_filters = r.i32_vec();
  c.vocab_size = r.i32();
  c.max_decode_len = r.i32();
  c.max_elements = r.i32();
  c.embedding_dim = r.i32();
  c.categorical_dim = r.i32();
  c.ffn_size = r.i32();
  c.num_spatial_buckets = r.i32();
  c.max_tree_position = r.i32();
  c.class_table_size = r.i32();
  c.dropout = r.f64();
  return c;
}

void write_tensor(BinaryWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.i32_vec(t.shape());
  w.u64(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
}

}  // namespace

void ModelParams::save(const std::string& path) {
  BinaryWriter w(path);
  w.magic(kCheckpointMagic, kCheckpointVersion);
  write_config(w, config);
  const auto params = all_params();
  const auto states = bn_states();
  w.u64(params.size() + 2 * states.size());
  for (Param* p : params) write_tensor(w, p->name, p->value);
  for (const auto& [name, state] : states) {
    write_tensor(w, name + ".running_mean", state->running_mean);
    write_tensor(w, name + ".running_var", state->running_var);
  }
  w.close();
}

ModelParams ModelParams::load(const std::string& path,
                              const ModelConfig* expected) {
  BinaryReader r(path);
  const std::uint32_t version = r.magic(kCheckpointMagic);
  if (version != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version in " + path);
  }
  const ModelConfig config = read_config(r);
  if (expected != nullptr && !(config == *expected)) {
    throw ConfigError(
        "checkpoint model config does not match the requested config: " + path);
  }
  ModelParams params = ModelParams::init(config, 0);

  std::map<std::string, Tensor*> slots;
  for (Param* p : params.all_params()) slots[p->name] = &p->value;
  for (const auto& [name, state] : params.bn_states()) {
    slots[name + ".running_mean"] = &state->running_mean;
    slots[name + ".running_var"] = &state->running_var;
  }

  const std::uint64_t count = r.u64();
  std::size_t filled = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::vector<int> shape = r.i32_vec();
    const std::uint64_t n = r.u64();
    auto it = slots.find(name);
    if (it == slots.end()) throw SchemaError("unknown tensor in checkpoint: " + name);
    if (it->second->shape() != shape || it->second->size() != n) {
      throw SchemaError("tensor shape mismatch in checkpoint: " + name);
    }
    for (std::uint64_t j = 0; j < n; ++j) (*it->second)[j] = r.f64();
    ++filled;
  }
  if (filled != slots.size()) {
    throw SchemaError("checkpoint is missing tensors: filled " +
                      std::to_string(filled) + " of " +
                      std::to_string(slots.size()));
  }
  return params;
}

}  // namespace s2w
