#include "s2w/embedding.hpp"

#include <charconv>
#include <fstream>

#include "s2w/errors.hpp"

namespace s2w {

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open word-vector file: " + path);
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<float> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::size_t pos = line.find(' ');
    if (pos == std::string::npos) {
      throw ParseError("word-vector line " + std::to_string(line_no) +
                       " has no values");
    }
    const std::string token = line.substr(0, pos);
    values.clear();
    const char* p = line.data() + pos;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p >= end) break;
      float v = 0.0f;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw ParseError("word-vector line " + std::to_string(line_no) +
                         ": bad float value");
      }
      values.push_back(v);
      p = next;
    }
    if (table.dimension_ == 0) {
      if (values.empty()) {
        throw ParseError("word-vector line " + std::to_string(line_no) +
                         " has no values");
      }
      table.dimension_ = static_cast<int>(values.size());
    } else if (static_cast<int>(values.size()) != table.dimension_) {
      throw ParseError("word-vector line " + std::to_string(line_no) +
                       ": expected " + std::to_string(table.dimension_) +
                       " values, got " + std::to_string(values.size()));
    }
    if (table.index_.count(token)) continue;  // keep first occurrence
    table.index_.emplace(token, static_cast<int>(table.tokens_.size()));
    table.tokens_.push_back(token);
    table.data_.insert(table.data_.end(), values.begin(), values.end());
  }
  return table;
}

EmbeddingTable EmbeddingTable::from_entries(
    int dimension,
    const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
  EmbeddingTable table;
  table.dimension_ = dimension;
  for (const auto& [token, vec] : entries) {
    if (static_cast<int>(vec.size()) != dimension) {
      throw ConfigError("embedding entry '" + token + "' has wrong dimension");
    }
    if (table.index_.count(token)) continue;
    table.index_.emplace(token, static_cast<int>(table.tokens_.size()));
    table.tokens_.push_back(token);
    table.data_.insert(table.data_.end(), vec.begin(), vec.end());
  }
  return table;
}

const float* EmbeddingTable::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return nullptr;
  return data_.data() + static_cast<std::size_t>(it->second) * dimension_;
}

std::vector<float> embed_text_pooled(const std::vector<std::string>& tokens,
                                     const EmbeddingTable& table) {
  std::vector<float> pooled(static_cast<std::size_t>(table.dimension()), 0.0f);
  for (const auto& token : tokens) {
    if (const float* vec = table.find(token)) {
      for (int d = 0; d < table.dimension(); ++d) pooled[d] += vec[d];
    }
  }
  return pooled;
}

}  // namespace s2w
