#include "s2w/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "s2w/errors.hpp"

namespace s2w {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && !std::isalnum(c)) {
      flush();
      tokens.push_back(std::string(1, raw));
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush();
  return tokens;
}

bool is_word_token(const std::string& token) {
  for (char c : token) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u >= 0x80 || std::isalnum(u)) return true;
  }
  return false;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<PAD>", "<START>", "<END>", "<UNK>"};
  for (int i = 0; i < kNumReserved; ++i) index_[tokens_[i]] = i;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& docs,
                             std::size_t max_size) {
  if (max_size < 1) throw ConfigError("vocabulary max_size must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    for (const auto& token : doc) counts[token] += 1;
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(),
                                                           counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (entries.size() > max_size) entries.resize(max_size);

  Vocabulary vocab;
  for (const auto& [token, count] : entries) {
    vocab.index_[token] = static_cast<int>(vocab.tokens_.size());
    vocab.tokens_.push_back(token);
  }
  return vocab;
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_at(int index) const {
  if (index < 0 || index >= static_cast<int>(tokens_.size())) {
    throw ConfigError("vocabulary index out of range: " + std::to_string(index));
  }
  return tokens_[index];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index_of(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& indices) const {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(token_at(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) {
    out << tokens_[i] << "\n";
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    vocab.index_[line] = static_cast<int>(vocab.tokens_.size());
    vocab.tokens_.push_back(line);
  }
  return vocab;
}

}  // namespace s2w
