#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s2w/autodiff.hpp"
#include "s2w/embedding.hpp"
#include "s2w/featurizer.hpp"
#include "s2w/rng.hpp"
#include "s2w/tensor.hpp"
#include "s2w/text.hpp"

namespace s2w {

struct ModelConfig {
  int hidden_size = 128;
  int num_layers = 6;
  int num_heads = 8;
  int image_encoding_size = 128;
  int cnn_flatten_size = 256;
  // Seven residual blocks; the last block's filter count must equal
  // cnn_flatten_size because the final feature map is 1x1.
  std::vector<int> cnn_filters = {8, 16, 32, 64, 128, 256, 256};
  int vocab_size = 0;
  int max_decode_len = 20;
  int max_elements = 128;
  int embedding_dim = 300;   // word-vector width shared with the featurizer
  int categorical_dim = 16;  // width of each categorical embedding
  int ffn_size = 512;
  int num_spatial_buckets = 32;
  int max_tree_position = 256;
  int class_table_size = 101;  // class vocab entries + OTHER
  Scalar dropout = 0.1;

  void validate() const;
  // 9 categorical embeddings + pooled text + source one-hot.
  int concat_width() const { return 9 * categorical_dim + embedding_dim + 2; }
  int fused_width() const { return hidden_size + image_encoding_size; }
  bool operator==(const ModelConfig&) const = default;
};

// Per-block spatial sizes of the image encoder for a 64x64 input.
std::vector<int> cnn_spatial_trace(const ModelConfig& config);

struct AttentionWeights {
  Param wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderLayer {
  AttentionWeights attn;
  Param ln1_gamma, ln1_beta;
  Param ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Param ln2_gamma, ln2_beta;
};

struct DecoderLayer {
  AttentionWeights self_attn;
  Param ln1_gamma, ln1_beta;
  AttentionWeights cross_attn;
  Param ln2_gamma, ln2_beta;
  Param ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Param ln3_gamma, ln3_beta;
};

struct ConvLayer {
  Param w, b, bn_gamma, bn_beta;
  BatchNormState bn_state;
};

struct ResidualBlock {
  ConvLayer c1, c2, c3;              // c3 carries the stride-2 step
  std::optional<Param> shortcut_w;   // 1x1 projection when channels change
};

struct ModelParams {
  ModelConfig config;

  // Element embedding tables.
  Param class_table, clickable_table;
  Param left_table, top_table, right_table, bottom_table;
  Param pre_table, post_table, depth_table;
  Param input_proj;  // bias-free projection P to hidden_size

  std::vector<EncoderLayer> encoder;
  std::vector<ResidualBlock> cnn;
  Param image_proj_w, image_proj_b;

  Param word_embedding;  // [vocab, embedding_dim], GloVe-initialized
  Param word_proj;       // embedding_dim -> hidden
  std::vector<DecoderLayer> decoder;
  Param out_w, out_b;

  // Deterministic initialization; rows of `word_embedding` take the GloVe
  // vector of their vocabulary token when available (the same table the
  // featurizer pools element text and app descriptions from).
  static ModelParams init(const ModelConfig& config, std::uint64_t seed,
                          const EmbeddingTable* glove = nullptr,
                          const Vocabulary* vocab = nullptr);

  std::vector<Param*> all_params();
  std::vector<std::pair<std::string, BatchNormState*>> bn_states();
  void zero_grads();
  std::size_t parameter_count();

  void save(const std::string& path);
  // Throws ConfigError when `expected` is given and does not match the
  // stored config exactly.
  static ModelParams load(const std::string& path,
                          const ModelConfig* expected = nullptr);
};

// Forward-pass context: training toggles dropout and batch-norm mode.
struct ForwardMode {
  bool training = false;
  BnMode bn_mode = BnMode::kEval;
  Rng* dropout_rng = nullptr;

  static ForwardMode eval() { return {}; }
  static ForwardMode train(Rng& rng, bool update_bn_stats = true) {
    return {true, update_bn_stats ? BnMode::kTrain : BnMode::kTrainFrozen, &rng};
  }
};

// Rows = elements + trailing app-description row. The app row's categorical
// slots are zero vectors; its text slot carries the pooled app description.
Var embed_elements(Tape& tape, const ScreenFeatures& features,
                   ModelParams& params);

// Transformer encoder over embedded rows. `row_valid`, when given, masks
// padded rows out of every attention's key set.
Var encode_structure(Tape& tape, Var embedded, ModelParams& params,
                     const std::vector<char>* row_valid = nullptr,
                     const ForwardMode& mode = {});

// Residual CNN over the element crops; [N, image_encoding_size] output.
// `block_shapes`, when given, receives each block's output tensor shape.
Var encode_images(Tape& tape, const ScreenFeatures& features,
                  ModelParams& params, const ForwardMode& mode = {},
                  std::vector<std::vector<int>>* block_shapes = nullptr);

// Late fusion: appends a zero padding row to the image encodings (for the
// app-description row) and concatenates with the structural encoding.
Var fuse(Tape& tape, Var struct_enc, Var image_enc);

// Causal decoder over `prefix` (must start with <START>), cross-attending to
// the fused screen encoding; returns [prefix_len, vocab] logits.
Var decode_logits(Tape& tape, Var fused, const std::vector<int>& prefix,
                  ModelParams& params, const ForwardMode& mode = {});

// Mean cross entropy over non-pad positions (targets aligned one past the
// prefix; mask excludes PAD).
Var sequence_loss(Tape& tape, Var logits, const std::vector<int>& targets,
                  const std::vector<char>& mask);

// Whole-graph convenience: features -> fused encoding.
Var encode_screen(Tape& tape, const ScreenFeatures& features,
                  ModelParams& params, const ForwardMode& mode = {});

// Teacher-forced loss for one screen given the target token body (without
// reserved tokens); builds prefix/targets with START/END internally.
struct TeacherForcedBatchItem {
  const ScreenFeatures* features = nullptr;
  std::vector<int> target_body;  // token ids, no reserved tokens
};
Var teacher_forced_loss(Tape& tape, const TeacherForcedBatchItem& item,
                        ModelParams& params, const ForwardMode& mode = {});

std::vector<Scalar> sinusoidal_position_row(int position, int dim);

}  // namespace s2w
