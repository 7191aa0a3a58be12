#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "s2w/corpus.hpp"
#include "s2w/decode.hpp"

namespace s2w {

using TokenList = std::vector<std::string>;

// Corpus-level BLEU with clipped n-gram precision and brevity penalty.
// Without smoothing a zero precision at any order zeroes that order's score;
// `smooth` applies add-one smoothing to the clipped counts instead.
struct BleuResult {
  std::array<double, 4> precisions{};  // p_1..p_4
  double brevity_penalty = 1.0;
  std::array<double, 4> scores{};  // BLEU-1..BLEU-4, in [0,1]
};

BleuResult corpus_bleu(const std::vector<TokenList>& candidates,
                       const std::vector<std::vector<TokenList>>& references,
                       bool smooth = false);

// LCS-based F-measure (beta = 1.2); the screen score is the max over
// references. Empty candidates score 0.
double rouge_l(const TokenList& candidate,
               const std::vector<TokenList>& references, double beta = 1.2);

// Consensus TF-IDF n-gram cosine, averaged over references and n = 1..4,
// scaled x10 (so the range is [0, 10] pre-display-scaling).
class CiderScorer {
 public:
  // IDF comes from the evaluation corpus's reference sets: one "document"
  // per screen. N-grams never seen in any reference fall back to df = 1.
  explicit CiderScorer(
      const std::vector<std::vector<TokenList>>& reference_corpus);

  double score(const TokenList& candidate,
               const std::vector<TokenList>& references) const;

  std::size_t num_documents() const { return num_docs_; }

 private:
  double idf(int n, const std::string& key) const;
  std::array<std::map<std::string, double>, 4> idf_;
  std::size_t num_docs_ = 0;
};

// Unigram alignment over exact + Porter-stem matches, maximizing matches and
// then minimizing chunks. Fmean = 10PR/(R+9P); penalty = 0.5*(chunks/matches)^3.
struct MeteorAlignment {
  int matches = 0;
  int chunks = 0;
};
MeteorAlignment meteor_align(const TokenList& candidate, const TokenList& reference);
double meteor_lite(const TokenList& candidate,
                   const std::vector<TokenList>& references);

// Display scale: all metrics x100 (CIDEr's raw [0,10] range lands in [0,1000]).
struct ScreenScore {
  std::string screen_id;
  std::array<double, 4> bleu{};  // sentence-level, same clipping rules
  double rouge_l = 0.0;
  double cider = 0.0;
  double meteor = 0.0;
};

struct MetricReport {
  std::array<double, 4> bleu{};
  double cider = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  std::size_t screens = 0;
  std::vector<ScreenScore> per_screen;
};

// Scores rank-1 predictions against each split screen's summaries (post
// stop-phrase removal). Screens without a rank-1 prediction raise a
// coverage error listing their ids.
MetricReport evaluate_suite(const std::vector<Prediction>& predictions,
                            const Corpus& corpus, Split split,
                            const std::vector<std::string>& stop_phrases);

void write_metric_report_csv(const std::string& path, const MetricReport& report);
// Human-readable table in the column order BLEU-1..4, CIDEr, ROUGE-L, METEOR.
std::string format_metric_table(const MetricReport& report);

}  // namespace s2w
