#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "s2w/corpus.hpp"
#include "s2w/embedding.hpp"
#include "s2w/image.hpp"
#include "s2w/view_hierarchy.hpp"

namespace s2w {

inline constexpr int kCropSize = 64;  // element crops are 64x64 grayscale

struct FeaturizerConfig {
  int num_spatial_buckets = 32;
  int max_tree_position = 256;  // pre/post/depth ids clamp to this many bins
  int max_elements = 128;       // BFS-order prefix kept per screen
  bool include_invisible = false;
  int class_vocab_size = 100;

  std::uint64_t hash() const;
};

// Top-K Android class names from the training split; everything else maps to
// the OTHER category at id 0.
class ClassVocab {
 public:
  static ClassVocab build(const Corpus& corpus, Split split, std::size_t top_k);
  static ClassVocab from_names(const std::vector<std::string>& names);

  int id_of(const std::string& class_name) const;  // 0 = OTHER
  std::size_t size() const { return names_.size() + 1; }
  const std::vector<std::string>& names() const { return names_; }

  void save(const std::string& path) const;
  static ClassVocab load(const std::string& path);
  std::uint64_t hash() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct ElementFeatures {
  int class_id = 0;
  int clickable = 0;
  std::array<int, 4> spatial_buckets{};  // left, top, right, bottom
  int pre_order = 0;
  int post_order = 0;
  int depth = 0;
  std::vector<float> text_embedding;  // pooled word vectors
  std::vector<float> image_crop;      // kCropSize*kCropSize grayscale [0,1]
  bool degenerate_bounds = false;
};

struct ScreenFeatures {
  std::string screen_id;
  std::vector<ElementFeatures> elements;      // <= max_elements
  std::vector<float> app_desc_embedding;      // zero vector when missing
  std::vector<std::array<float, 2>> source_tags;  // per row: {element, app}

  std::size_t rows() const { return elements.size() + 1; }
};

// Level-order flattening; within a level the parents' child order is kept.
// Invisible nodes are dropped from the output (the traversal still descends
// through them) unless include_invisible is set.
std::vector<int> flatten_bfs(const UiTree& tree, bool include_invisible = false);

// floor(coord / screen_dim * num_buckets), clamped to [0, num_buckets).
std::array<int, 4> bucketize_bounds(const Rect& bounds, int screen_width,
                                    int screen_height, int num_buckets);

// Crop -> grayscale happened upstream -> bilinear resize to 64x64. Degenerate
// (empty-intersection) bounds produce an all-zero crop and set the flag.
std::vector<float> crop_element_image(const GrayImage& screenshot,
                                      const Rect& bounds,
                                      bool* degenerate = nullptr);

ScreenFeatures featurize_screen(const Screen& screen,
                                const ImageRgb& screenshot,
                                const EmbeddingTable& table,
                                const ClassVocab& classes,
                                const FeaturizerConfig& config);

// Versioned on-disk cache keyed by the featurizer config and class vocab.
class FeatureCache {
 public:
  static void write(const std::string& path,
                    const std::vector<ScreenFeatures>& features,
                    const FeaturizerConfig& config, const ClassVocab& classes,
                    int embedding_dim);
  // Throws SchemaError when the cache was built under a different config.
  static std::vector<ScreenFeatures> read(const std::string& path,
                                          const FeaturizerConfig& config,
                                          const ClassVocab& classes,
                                          int embedding_dim);
};

}  // namespace s2w
