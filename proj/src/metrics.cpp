#include "s2w/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "s2w/csv.hpp"
#include "s2w/errors.hpp"
#include "s2w/stemmer.hpp"
#include "s2w/text.hpp"

namespace s2w {

namespace {

// n-grams joined with '\x1f' as map keys.
std::map<std::string, int> ngram_counts(const TokenList& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(k)];
    }
    counts[key] += 1;
  }
  return counts;
}

struct BleuTotals {
  std::array<long long, 4> clipped{};
  std::array<long long, 4> total{};
  long long candidate_length = 0;
  long long reference_length = 0;
};

void accumulate_bleu(BleuTotals& totals, const TokenList& candidate,
                     const std::vector<TokenList>& references) {
  if (references.empty()) throw DataError("bleu: empty reference set");
  for (int n = 1; n <= 4; ++n) {
    const auto cand_counts = ngram_counts(candidate, n);
    std::map<std::string, int> max_ref;
    for (const TokenList& ref : references) {
      for (const auto& [key, count] : ngram_counts(ref, n)) {
        max_ref[key] = std::max(max_ref[key], count);
      }
    }
    for (const auto& [key, count] : cand_counts) {
      auto it = max_ref.find(key);
      const int clip = it == max_ref.end() ? 0 : it->second;
      totals.clipped[n - 1] += std::min(count, clip);
      totals.total[n - 1] += count;
    }
  }
  totals.candidate_length += static_cast<long long>(candidate.size());
  // Effective reference length: closest to the candidate, ties -> shorter.
  long long best_len = static_cast<long long>(references[0].size());
  for (const TokenList& ref : references) {
    const long long len = static_cast<long long>(ref.size());
    const long long c = static_cast<long long>(candidate.size());
    if (std::llabs(len - c) < std::llabs(best_len - c) ||
        (std::llabs(len - c) == std::llabs(best_len - c) && len < best_len)) {
      best_len = len;
    }
  }
  totals.reference_length += best_len;
}

BleuResult bleu_from_totals(const BleuTotals& totals, bool smooth) {
  BleuResult result;
  for (int n = 0; n < 4; ++n) {
    const double num = static_cast<double>(totals.clipped[n]) + (smooth ? 1.0 : 0.0);
    const double den = static_cast<double>(totals.total[n]) + (smooth ? 1.0 : 0.0);
    result.precisions[n] = den > 0.0 ? num / den : 0.0;
  }
  if (totals.candidate_length == 0) {
    result.brevity_penalty = 0.0;
  } else if (totals.candidate_length > totals.reference_length) {
    result.brevity_penalty = 1.0;
  } else {
    result.brevity_penalty =
        std::exp(1.0 - static_cast<double>(totals.reference_length) /
                           static_cast<double>(totals.candidate_length));
  }
  for (int n = 0; n < 4; ++n) {
    bool zero = false;
    double log_sum = 0.0;
    for (int k = 0; k <= n; ++k) {
      if (result.precisions[k] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(result.precisions[k]);
    }
    result.scores[n] =
        zero ? 0.0 : result.brevity_penalty * std::exp(log_sum / (n + 1));
  }
  return result;
}

int lcs_length(const TokenList& a, const TokenList& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

BleuResult corpus_bleu(const std::vector<TokenList>& candidates,
                       const std::vector<std::vector<TokenList>>& references,
                       bool smooth) {
  if (candidates.size() != references.size()) {
    throw DataError("bleu: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw DataError("bleu: empty corpus");
  BleuTotals totals;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    accumulate_bleu(totals, candidates[i], references[i]);
  }
  return bleu_from_totals(totals, smooth);
}

double rouge_l(const TokenList& candidate,
               const std::vector<TokenList>& references, double beta) {
  if (references.empty()) throw DataError("rouge_l: empty reference set");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const TokenList& ref : references) {
    if (ref.empty()) continue;
    const double lcs = lcs_length(candidate, ref);
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    const double f = ((1.0 + b2) * p * r) / (r + b2 * p);
    best = std::max(best, f);
  }
  return best;
}

// ---------------------------------------------------------------------------
// CIDEr
// ---------------------------------------------------------------------------

CiderScorer::CiderScorer(
    const std::vector<std::vector<TokenList>>& reference_corpus) {
  num_docs_ = reference_corpus.size();
  for (int n = 1; n <= 4; ++n) {
    std::map<std::string, int> df;
    for (const auto& refs : reference_corpus) {
      std::set<std::string> present;
      for (const TokenList& ref : refs) {
        for (const auto& [key, count] : ngram_counts(ref, n)) present.insert(key);
      }
      for (const auto& key : present) df[key] += 1;
    }
    for (const auto& [key, count] : df) {
      idf_[static_cast<std::size_t>(n - 1)][key] =
          std::log(static_cast<double>(num_docs_) / std::max(1, count));
    }
  }
}

double CiderScorer::idf(int n, const std::string& key) const {
  const auto& table = idf_[static_cast<std::size_t>(n - 1)];
  auto it = table.find(key);
  if (it != table.end()) return it->second;
  // Unseen n-grams: df clamps to 1.
  return std::log(static_cast<double>(std::max<std::size_t>(1, num_docs_)));
}

double CiderScorer::score(const TokenList& candidate,
                          const std::vector<TokenList>& references) const {
  if (references.empty()) throw DataError("cider: empty reference set");
  double total = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand_counts = ngram_counts(candidate, n);
    std::map<std::string, double> cand_vec;
    double cand_norm_sq = 0.0;
    for (const auto& [key, count] : cand_counts) {
      const double v = count * idf(n, key);
      cand_vec[key] = v;
      cand_norm_sq += v * v;
    }
    double ref_mean = 0.0;
    for (const TokenList& ref : references) {
      const auto ref_counts = ngram_counts(ref, n);
      double dot = 0.0, ref_norm_sq = 0.0;
      for (const auto& [key, count] : ref_counts) {
        const double v = count * idf(n, key);
        ref_norm_sq += v * v;
        auto it = cand_vec.find(key);
        if (it != cand_vec.end()) dot += it->second * v;
      }
      if (cand_norm_sq > 0.0 && ref_norm_sq > 0.0) {
        ref_mean += dot / (std::sqrt(cand_norm_sq) * std::sqrt(ref_norm_sq));
      }
    }
    total += ref_mean / static_cast<double>(references.size());
  }
  return 10.0 * total / 4.0;
}

// ---------------------------------------------------------------------------
// METEOR-lite
// ---------------------------------------------------------------------------

namespace {

// Search state for the maximum-matches / minimum-chunks alignment.
struct AlignSearch {
  const std::vector<std::vector<int>>* edges;  // candidate pos -> ref positions
  std::vector<char> ref_used;
  int best_matches = 0;
  int best_chunks = 0;
  long expansions = 0;
  static constexpr long kExpansionCap = 500000;

  void consider(int matches, int chunks) {
    if (matches > best_matches ||
        (matches == best_matches && chunks < best_chunks)) {
      best_matches = matches;
      best_chunks = chunks;
    }
  }

  // i: candidate position; last_j: ref position of the previous match when it
  // was at candidate position i-1 (-2 otherwise).
  void dfs(std::size_t i, int matches, int chunks, int last_j) {
    if (expansions++ > kExpansionCap) return;
    if (i >= edges->size()) {
      consider(matches, chunks);
      return;
    }
    // Upper bound: every remaining position could match in a new chunk.
    const int remaining = static_cast<int>(edges->size() - i);
    if (matches + remaining < best_matches) return;

    for (int j : (*edges)[i]) {
      if (ref_used[static_cast<std::size_t>(j)]) continue;
      ref_used[static_cast<std::size_t>(j)] = 1;
      const bool continues = last_j >= 0 && j == last_j + 1;
      dfs(i + 1, matches + 1, chunks + (continues ? 0 : 1), j);
      ref_used[static_cast<std::size_t>(j)] = 0;
    }
    dfs(i + 1, matches, chunks, -2);
  }
};

}  // namespace

MeteorAlignment meteor_align(const TokenList& candidate,
                             const TokenList& reference) {
  std::vector<std::string> cand_stems, ref_stems;
  for (const auto& t : candidate) cand_stems.push_back(porter_stem(t));
  for (const auto& t : reference) ref_stems.push_back(porter_stem(t));

  std::vector<std::vector<int>> edges(candidate.size());
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (candidate[i] == reference[j] || cand_stems[i] == ref_stems[j]) {
        edges[i].push_back(static_cast<int>(j));
      }
    }
  }
  AlignSearch search;
  search.edges = &edges;
  search.ref_used.assign(reference.size(), 0);
  search.dfs(0, 0, 0, -2);
  return MeteorAlignment{search.best_matches, search.best_chunks};
}

double meteor_lite(const TokenList& candidate,
                   const std::vector<TokenList>& references) {
  if (references.empty()) throw DataError("meteor: empty reference set");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const TokenList& ref : references) {
    if (ref.empty()) continue;
    const MeteorAlignment align = meteor_align(candidate, ref);
    if (align.matches == 0) continue;
    const double m = align.matches;
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(ref.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double chunk_ratio = static_cast<double>(align.chunks) / m;
    const double penalty = 0.5 * chunk_ratio * chunk_ratio * chunk_ratio;
    best = std::max(best, fmean * (1.0 - penalty));
  }
  return best;
}

// ---------------------------------------------------------------------------
// evaluation suite
// ---------------------------------------------------------------------------

MetricReport evaluate_suite(const std::vector<Prediction>& predictions,
                            const Corpus& corpus, Split split,
                            const std::vector<std::string>& stop_phrases) {
  const std::vector<const Screen*> screens = corpus.screens_in(split);
  if (screens.empty()) throw DataError("evaluate: split has no screens");

  std::map<std::string, const Prediction*> rank1;
  for (const Prediction& p : predictions) {
    if (p.rank == 1) rank1.emplace(p.screen_id, &p);
  }
  std::string missing;
  std::size_t missing_count = 0;
  for (const Screen* screen : screens) {
    if (!rank1.count(screen->screen_id)) {
      ++missing_count;
      if (missing.size() < 200) {
        if (!missing.empty()) missing += ", ";
        missing += screen->screen_id;
      }
    }
  }
  if (missing_count > 0) {
    throw DataError("evaluate: " + std::to_string(missing_count) +
                    " screen(s) lack a rank-1 prediction: " + missing);
  }

  std::vector<TokenList> candidates;
  std::vector<std::vector<TokenList>> references;
  for (const Screen* screen : screens) {
    candidates.push_back(tokenize(rank1.at(screen->screen_id)->summary));
    std::vector<TokenList> refs;
    for (const std::string& summary : screen->summaries) {
      refs.push_back(tokenize(strip_stop_phrases(summary, stop_phrases)));
    }
    references.push_back(std::move(refs));
  }

  const CiderScorer cider(references);
  MetricReport report;
  report.screens = screens.size();

  const BleuResult corpus_level = corpus_bleu(candidates, references);
  for (int n = 0; n < 4; ++n) report.bleu[n] = 100.0 * corpus_level.scores[n];

  double rouge_sum = 0.0, cider_sum = 0.0, meteor_sum = 0.0;
  for (std::size_t i = 0; i < screens.size(); ++i) {
    ScreenScore row;
    row.screen_id = screens[i]->screen_id;
    const BleuResult sentence = corpus_bleu({candidates[i]}, {references[i]});
    for (int n = 0; n < 4; ++n) row.bleu[n] = 100.0 * sentence.scores[n];
    const double r = rouge_l(candidates[i], references[i]);
    const double c = cider.score(candidates[i], references[i]);
    const double m = meteor_lite(candidates[i], references[i]);
    row.rouge_l = 100.0 * r;
    row.cider = 100.0 * c;
    row.meteor = 100.0 * m;
    rouge_sum += r;
    cider_sum += c;
    meteor_sum += m;
    report.per_screen.push_back(std::move(row));
  }
  const double n = static_cast<double>(screens.size());
  report.rouge_l = 100.0 * rouge_sum / n;
  report.cider = 100.0 * cider_sum / n;
  report.meteor = 100.0 * meteor_sum / n;
  return report;
}

void write_metric_report_csv(const std::string& path, const MetricReport& report) {
  CsvWriter csv(path);
  csv.write_row({"screenId", "bleu1", "bleu2", "bleu3", "bleu4", "cider",
                 "rougeL", "meteorLite"});
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  csv.write_row({"<corpus>", fmt(report.bleu[0]), fmt(report.bleu[1]),
                 fmt(report.bleu[2]), fmt(report.bleu[3]), fmt(report.cider),
                 fmt(report.rouge_l), fmt(report.meteor)});
  for (const ScreenScore& row : report.per_screen) {
    csv.write_row({row.screen_id, fmt(row.bleu[0]), fmt(row.bleu[1]),
                   fmt(row.bleu[2]), fmt(row.bleu[3]), fmt(row.cider),
                   fmt(row.rouge_l), fmt(row.meteor)});
  }
}

std::string format_metric_table(const MetricReport& report) {
  char buf[256];
  std::string out;
  out += "metric    BLEU-1  BLEU-2  BLEU-3  BLEU-4   CIDEr ROUGE-L  METEOR*\n";
  std::snprintf(buf, sizeof(buf),
                "score    %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f\n",
                report.bleu[0], report.bleu[1], report.bleu[2], report.bleu[3],
                report.cider, report.rouge_l, report.meteor);
  out += buf;
  out += "scale: x100; CIDEr raw range [0,10] lands in [0,1000]; METEOR* is "
         "meteor_lite (exact + Porter stem matching, no synonym stage)\n";
  out += "screens: " + std::to_string(report.screens) + "\n";
  return out;
}

}  // namespace s2w
