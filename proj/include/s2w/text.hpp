#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace s2w {

// Lowercases ASCII letters, splits off each punctuation character as its own
// token and splits on whitespace. Deterministic; bytes >= 0x80 are treated as
// word characters so UTF-8 content passes through unsplit.
std::vector<std::string> tokenize(const std::string& text);

// True when the token contains at least one alphanumeric character (used to
// separate words from punctuation tokens in corpus analyses).
bool is_word_token(const std::string& token);

// Decoding vocabulary with fixed reserved indices.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();

  // Top `max_size` tokens by frequency over the documents; frequency ties
  // break lexicographically. Everything else encodes to kUnk.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs,
                          std::size_t max_size);

  int index_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_at(int index) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& indices) const;

  // One non-reserved token per line; index = line number + 4.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;  // index -> token, reserved first
  std::unordered_map<std::string, int> index_;
};

}  // namespace s2w
