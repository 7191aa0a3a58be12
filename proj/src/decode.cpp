#include "s2w/decode.hpp"

#include <algorithm>
#include <cmath>

#include "s2w/csv.hpp"
#include "s2w/errors.hpp"

namespace s2w {

double BeamHypothesis::score(double alpha) const {
  if (alpha == 0.0) return log_prob;
  const double len = std::max(1, length());
  return log_prob / std::pow(len, alpha);
}

namespace {

bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// score desc, then token-id lexicographic for determinism.
struct RankedBefore {
  double alpha;
  bool operator()(const BeamHypothesis& a, const BeamHypothesis& b) const {
    const double sa = a.score(alpha), sb = b.score(alpha);
    if (sa != sb) return sa > sb;
    return tokens_less(a.tokens, b.tokens);
  }
};

}  // namespace

std::vector<BeamHypothesis> beam_search(const StepFn& step, int vocab_size,
                                        int beam_size, int max_len,
                                        double alpha) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");

  std::vector<BeamHypothesis> alive = {
      BeamHypothesis{{Vocabulary::kStart}, 0.0, false}};
  std::vector<BeamHypothesis> finished;

  for (int t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<BeamHypothesis> candidates;
    candidates.reserve(alive.size() * static_cast<std::size_t>(vocab_size));
    for (const BeamHypothesis& hyp : alive) {
      const std::vector<double> log_probs = step(hyp.tokens);
      if (static_cast<int>(log_probs.size()) != vocab_size) {
        throw ShapeError("step function returned wrong vocabulary size");
      }
      for (int v = 0; v < vocab_size; ++v) {
        BeamHypothesis next = hyp;
        next.tokens.push_back(v);
        next.log_prob += log_probs[static_cast<std::size_t>(v)];
        next.finished = v == Vocabulary::kEnd;
        candidates.push_back(std::move(next));
      }
    }
    // Raw log-probability ordering while expanding (alpha applies to the
    // final ranking only); ties break lexicographically. The top beam_size
    // candidates survive; a finished one retires and shrinks the width, so
    // beam_size=1 reduces exactly to greedy argmax decoding.
    std::sort(candidates.begin(), candidates.end(), RankedBefore{0.0});
    if (static_cast<int>(candidates.size()) > beam_size) {
      candidates.resize(static_cast<std::size_t>(beam_size));
    }
    alive.clear();
    for (BeamHypothesis& cand : candidates) {
      if (cand.finished) {
        finished.push_back(std::move(cand));
      } else {
        alive.push_back(std::move(cand));
      }
    }
  }

  // Anything still alive is truncated at max_len.
  std::vector<BeamHypothesis> pool = std::move(finished);
  pool.insert(pool.end(), alive.begin(), alive.end());
  std::sort(pool.begin(), pool.end(), RankedBefore{alpha});
  if (static_cast<int>(pool.size()) > beam_size) pool.resize(beam_size);
  return pool;
}

StepFn make_model_step(ModelParams& params, const Tensor& fused) {
  return [&params, fused](const std::vector<int>& prefix) {
    Tape tape(false);
    Var logits = decode_logits(tape, tape.input(fused), prefix, params);
    const Tensor& lv = tape.value(logits);
    const int vocab = lv.cols();
    const int last = lv.rows() - 1;
    // log softmax of the final position
    Scalar mx = lv.at(last, 0);
    for (int v = 1; v < vocab; ++v) mx = std::max(mx, lv.at(last, v));
    Scalar sum = 0.0;
    for (int v = 0; v < vocab; ++v) sum += std::exp(lv.at(last, v) - mx);
    const Scalar lse = mx + std::log(sum);
    std::vector<double> out(static_cast<std::size_t>(vocab));
    for (int v = 0; v < vocab; ++v) out[static_cast<std::size_t>(v)] = lv.at(last, v) - lse;
    return out;
  };
}

std::vector<BeamHypothesis> beam_search_screen(ModelParams& params,
                                               const ScreenFeatures& features,
                                               int beam_size, int max_len,
                                               double alpha) {
  Tape tape(false);
  Var fused = encode_screen(tape, features, params);
  const Tensor fused_value = tape.value(fused);
  // Prefix = START + body must stay within max_decode_len.
  const int body_cap = std::min(max_len, params.config.max_decode_len - 1);
  return beam_search(make_model_step(params, fused_value),
                     params.config.vocab_size, beam_size, body_cap, alpha);
}

std::string postprocess(const BeamHypothesis& hypothesis,
                        const Vocabulary& vocab) {
  std::string out;
  for (int id : hypothesis.tokens) {
    if (id == Vocabulary::kStart || id == Vocabulary::kEnd ||
        id == Vocabulary::kPad || id == Vocabulary::kUnk) {
      continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += vocab.token_at(id);
  }
  return out;
}

void write_predictions_csv(const std::string& path,
                           const std::vector<Prediction>& predictions) {
  CsvWriter csv(path);
  csv.write_row({"screenId", "rank", "score", "summary"});
  for (const Prediction& p : predictions) {
    char score[64];
    std::snprintf(score, sizeof(score), "%.8g", p.score);
    csv.write_row({p.screen_id, std::to_string(p.rank), score, p.summary});
  }
}

std::vector<Prediction> read_predictions_csv(const std::string& path) {
  const auto rows = read_csv_file(path);
  if (rows.empty() || rows[0].size() < 4 || rows[0][0] != "screenId" ||
      rows[0][1] != "rank" || rows[0][2] != "score" || rows[0][3] != "summary") {
    throw SchemaError("predictions CSV must have header screenId,rank,score,summary: " + path);
  }
  std::vector<Prediction> predictions;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 4) continue;
    Prediction p;
    p.screen_id = rows[i][0];
    try {
      p.rank = std::stoi(rows[i][1]);
      p.score = std::stod(rows[i][2]);
    } catch (const std::exception&) {
      throw ParseError("predictions CSV: bad numeric field at row " + std::to_string(i));
    }
    p.summary = rows[i][3];
    predictions.push_back(std::move(p));
  }
  return predictions;
}

}  // namespace s2w
