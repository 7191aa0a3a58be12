#include "s2w/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>

#include "s2w/errors.hpp"
#include "s2w/serialize.hpp"
#include "s2w/text.hpp"

namespace s2w {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(std::uint64_t h, const std::string& s) {
  return fnv1a(h, s.data(), s.size());
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

}  // namespace

std::uint64_t FeaturizerConfig::hash() const {
  std::uint64_t h = kFnvBasis;
  const int fields[5] = {num_spatial_buckets, max_tree_position, max_elements,
                         include_invisible ? 1 : 0, class_vocab_size};
  h = fnv1a(h, fields, sizeof(fields));
  return h;
}

ClassVocab ClassVocab::build(const Corpus& corpus, Split split,
                             std::size_t top_k) {
  std::map<std::string, std::size_t> counts;
  for (const Screen* screen : corpus.screens_in(split)) {
    for (const UiElement& el : screen->tree.nodes) {
      if (!el.class_name.empty()) counts[el.class_name] += 1;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(),
                                                           counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (entries.size() > top_k) entries.resize(top_k);
  std::vector<std::string> names;
  names.reserve(entries.size());
  for (auto& [name, count] : entries) names.push_back(name);
  return from_names(names);
}

ClassVocab ClassVocab::from_names(const std::vector<std::string>& names) {
  ClassVocab vocab;
  for (const auto& name : names) {
    if (vocab.index_.count(name)) continue;
    vocab.index_.emplace(name, static_cast<int>(vocab.names_.size()) + 1);
    vocab.names_.push_back(name);
  }
  return vocab;
}

int ClassVocab::id_of(const std::string& class_name) const {
  auto it = index_.find(class_name);
  return it == index_.end() ? 0 : it->second;
}

void ClassVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write class vocabulary: " + path);
  for (const auto& name : names_) out << name << "\n";
}

ClassVocab ClassVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open class vocabulary: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return from_names(names);
}

std::uint64_t ClassVocab::hash() const {
  std::uint64_t h = kFnvBasis;
  for (const auto& name : names_) {
    h = fnv1a_str(h, name);
    h = fnv1a(h, "\n", 1);
  }
  return h;
}

std::vector<int> flatten_bfs(const UiTree& tree, bool include_invisible) {
  std::vector<int> order;
  if (tree.nodes.empty()) return order;
  std::deque<int> queue{tree.root_id};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const UiElement& el = tree.node(id);
    if (include_invisible || el.visible_to_user) order.push_back(id);
    for (int child : el.children) queue.push_back(child);
  }
  return order;
}

std::array<int, 4> bucketize_bounds(const Rect& bounds, int screen_width,
                                    int screen_height, int num_buckets) {
  if (num_buckets < 1) throw ConfigError("num_buckets must be >= 1");
  if (screen_width <= 0 || screen_height <= 0) {
    throw DataError("cannot bucketize against a zero-sized screen");
  }
  auto bucket = [num_buckets](double value, double extent) {
    const double normalized = value / extent;
    int b = static_cast<int>(std::floor(normalized * num_buckets));
    return std::clamp(b, 0, num_buckets - 1);
  };
  return {bucket(bounds.left, screen_width), bucket(bounds.top, screen_height),
          bucket(bounds.right, screen_width),
          bucket(bounds.bottom, screen_height)};
}

std::vector<float> crop_element_image(const GrayImage& screenshot,
                                      const Rect& bounds, bool* degenerate) {
  if (degenerate) *degenerate = false;
  const GrayImage cropped = crop(screenshot, bounds);
  if (cropped.width <= 0 || cropped.height <= 0) {
    if (degenerate) *degenerate = true;
    return std::vector<float>(kCropSize * kCropSize, 0.0f);
  }
  return resize_bilinear(cropped, kCropSize, kCropSize).pixels;
}

ScreenFeatures featurize_screen(const Screen& screen,
                                const ImageRgb& screenshot,
                                const EmbeddingTable& table,
                                const ClassVocab& classes,
                                const FeaturizerConfig& config) {
  ScreenFeatures features;
  features.screen_id = screen.screen_id;

  const GrayImage gray = to_grayscale(screenshot);
  std::vector<int> order = flatten_bfs(screen.tree, config.include_invisible);
  if (static_cast<int>(order.size()) > config.max_elements) {
    order.resize(config.max_elements);
  }

  const int position_cap = config.max_tree_position;
  for (int id : order) {
    const UiElement& el = screen.tree.node(id);
    ElementFeatures ef;
    ef.class_id = classes.id_of(el.class_name);
    ef.clickable = el.clickable ? 1 : 0;
    try {
      ef.spatial_buckets = bucketize_bounds(el.bounds, screenshot.width,
                                            screenshot.height,
                                            config.num_spatial_buckets);
    } catch (const DataError& e) {
      throw DataError("screen " + screen.screen_id + " element " +
                      std::to_string(id) + ": " + e.what());
    }
    ef.pre_order = std::min(el.pre_order, position_cap - 1);
    ef.post_order = std::min(el.post_order, position_cap - 1);
    ef.depth = std::min(el.depth, position_cap - 1);
    ef.text_embedding =
        el.text ? embed_text_pooled(tokenize(*el.text), table)
                : std::vector<float>(static_cast<std::size_t>(table.dimension()), 0.0f);
    ef.image_crop = crop_element_image(gray, el.bounds, &ef.degenerate_bounds);
    ef.degenerate_bounds = ef.degenerate_bounds || el.degenerate_bounds;
    features.elements.push_back(std::move(ef));
  }

  features.app_desc_embedding =
      screen.app_description
          ? embed_text_pooled(tokenize(*screen.app_description), table)
          : std::vector<float>(static_cast<std::size_t>(table.dimension()), 0.0f);

  features.source_tags.assign(features.elements.size(), {1.0f, 0.0f});
  features.source_tags.push_back({0.0f, 1.0f});  // app description row is last
  return features;
}

namespace {

constexpr char kCacheMagic[4] = {'S', '2', 'W', 'F'};
constexpr std::uint32_t kCacheVersion = 1;

std::uint64_t cache_key(const FeaturizerConfig& config,
                        const ClassVocab& classes, int embedding_dim) {
  std::uint64_t h = config.hash();
  h ^= classes.hash() + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  const int dim = embedding_dim;
  h = fnv1a(h, &dim, sizeof(dim));
  return h;
}

}  // namespace

void FeatureCache::write(const std::string& path,
                         const std::vector<ScreenFeatures>& features,
                         const FeaturizerConfig& config,
                         const ClassVocab& classes, int embedding_dim) {
  BinaryWriter w(path);
  w.magic(kCacheMagic, kCacheVersion);
  w.u64(cache_key(config, classes, embedding_dim));
  w.u64(features.size());
  for (const ScreenFeatures& sf : features) {
    w.str(sf.screen_id);
    w.u64(sf.elements.size());
    for (const ElementFeatures& ef : sf.elements) {
      w.i32(ef.class_id);
      w.i32(ef.clickable);
      for (int b : ef.spatial_buckets) w.i32(b);
      w.i32(ef.pre_order);
      w.i32(ef.post_order);
      w.i32(ef.depth);
      w.f32_vec(ef.text_embedding);
      w.f32_vec(ef.image_crop);
      w.u8(ef.degenerate_bounds ? 1 : 0);
    }
    w.f32_vec(sf.app_desc_embedding);
  }
  w.close();
}

std::vector<ScreenFeatures> FeatureCache::read(const std::string& path,
                                               const FeaturizerConfig& config,
                                               const ClassVocab& classes,
                                               int embedding_dim) {
  BinaryReader r(path);
  const std::uint32_t version = r.magic(kCacheMagic);
  if (version != kCacheVersion) {
    throw SchemaError("unsupported feature cache version in " + path);
  }
  const std::uint64_t key = r.u64();
  if (key != cache_key(config, classes, embedding_dim)) {
    throw SchemaError(
        "feature cache was built with a different featurizer config: " + path);
  }
  std::vector<ScreenFeatures> features(r.u64());
  for (ScreenFeatures& sf : features) {
    sf.screen_id = r.str();
    sf.elements.resize(r.u64());
    for (ElementFeatures& ef : sf.elements) {
      ef.class_id = r.i32();
      ef.clickable = r.i32();
      for (int& b : ef.spatial_buckets) b = r.i32();
      ef.pre_order = r.i32();
      ef.post_order = r.i32();
      ef.depth = r.i32();
      ef.text_embedding = r.f32_vec();
      ef.image_crop = r.f32_vec();
      ef.degenerate_bounds = r.u8() != 0;
    }
    sf.app_desc_embedding = r.f32_vec();
    sf.source_tags.assign(sf.elements.size(), {1.0f, 0.0f});
    sf.source_tags.push_back({0.0f, 1.0f});
  }
  return features;
}

}  // namespace s2w
