#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace s2w {

// Pre-trained word vectors in GloVe text format, stored contiguously.
class EmbeddingTable {
 public:
  // Format: `token v1 ... vD`, one entry per line; the dimension is taken
  // from the first line. Duplicate tokens keep the first occurrence; an
  // inconsistent vector length raises ParseError with the line number.
  static EmbeddingTable load(const std::string& path);

  // In-memory construction for tests and fixtures.
  static EmbeddingTable from_entries(
      int dimension,
      const std::vector<std::pair<std::string, std::vector<float>>>& entries);

  int dimension() const { return dimension_; }
  std::size_t size() const { return tokens_.size(); }

  // nullptr when the token is absent.
  const float* find(const std::string& token) const;

 private:
  int dimension_ = 0;
  std::vector<std::string> tokens_;
  std::vector<float> data_;  // size = tokens * dimension
  std::unordered_map<std::string, int> index_;
};

// Sum pooling over token vectors; out-of-table tokens contribute zero and an
// empty token list yields the zero vector.
std::vector<float> embed_text_pooled(const std::vector<std::string>& tokens,
                                     const EmbeddingTable& table);

}  // namespace s2w
