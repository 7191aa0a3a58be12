#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2w/model.hpp"
#include "s2w/text.hpp"

namespace s2w {

// A (possibly finished) decode candidate. `tokens` starts with <START> and
// ends with <END> once finished; log_prob accumulates token log-probabilities
// including <END> for finished hypotheses.
struct BeamHypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;

  // Generated-token count (everything after <START>).
  int length() const { return static_cast<int>(tokens.size()) - 1; }
  // Length-normalized score: log_prob / length^alpha (alpha 0 = raw sum).
  double score(double alpha) const;
};

// Returns log-probabilities over the vocabulary for the next position given
// the current prefix (which always starts with <START>).
using StepFn = std::function<std::vector<double>(const std::vector<int>&)>;

// Standard beam search. Hypotheses finish when <END> is emitted; anything
// still alive at max_len body tokens is kept truncated. The returned list is
// ranked by score (non-increasing), ties broken by token-id lexicographic
// order, and contains at most beam_size entries (always at least one).
std::vector<BeamHypothesis> beam_search(const StepFn& step, int vocab_size,
                                        int beam_size, int max_len,
                                        double alpha = 0.0);

// Step function evaluating the decoder over a fixed fused screen encoding.
StepFn make_model_step(ModelParams& params, const Tensor& fused);

// Encode + beam search for one screen. max_len is clamped so the decoder
// prefix stays within the model's max_decode_len.
std::vector<BeamHypothesis> beam_search_screen(ModelParams& params,
                                               const ScreenFeatures& features,
                                               int beam_size, int max_len,
                                               double alpha = 0.0);

// Strips START/END/PAD/UNK and joins the remaining tokens with spaces.
std::string postprocess(const BeamHypothesis& hypothesis,
                        const Vocabulary& vocab);

// Predictions file: CSV `screenId,rank,score,summary`, ranks starting at 1.
struct Prediction {
  std::string screen_id;
  int rank = 1;
  double score = 0.0;
  std::string summary;
};

void write_predictions_csv(const std::string& path,
                           const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions_csv(const std::string& path);

}  // namespace s2w
