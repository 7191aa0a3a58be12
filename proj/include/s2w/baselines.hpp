#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2w/autodiff.hpp"
#include "s2w/corpus.hpp"
#include "s2w/image.hpp"
#include "s2w/rng.hpp"

namespace s2w {

// Sparse L2-normalizable vector keyed by term index (sorted, unique).
struct SparseVec {
  std::vector<std::pair<int, double>> entries;

  double norm() const;
  bool empty_or_zero() const;
};

double cosine(const SparseVec& a, const SparseVec& b);
double cosine(const std::vector<float>& a, const std::vector<float>& b);

// Smoothed TF-IDF over training screens: tf = raw count,
// idf = ln((1+N)/(1+df)) + 1, vectors L2-normalized.
class TfidfModel {
 public:
  static TfidfModel fit(const std::vector<std::vector<std::string>>& docs);

  SparseVec transform(const std::vector<std::string>& tokens) const;
  std::size_t vocab_size() const { return terms_.size(); }
  std::size_t num_docs() const { return num_docs_; }
  // 0 when the term was not seen at fit time.
  double idf_of(const std::string& term) const;

 private:
  friend class ScreenIndex;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::unordered_map<std::string, int> index_;
  std::size_t num_docs_ = 0;
};

// Tokens of all visible element texts in BFS order (optionally followed by
// the app description).
std::vector<std::string> screen_text_tokens(const Screen& screen,
                                            bool include_app_desc);

inline constexpr int kPixelVectorSide = 100;  // 100x100 grayscale = 10,000

// Grayscale -> 100x100 bilinear resize -> row-major flatten in [0,1].
std::vector<float> pixel_vectorize(const ImageRgb& screenshot);

// Convolutional autoencoder over 96x96 grayscale screenshots; stride-2
// filters 128/64/32 down, dense to a 100-d latent, mirrored back up.
struct AutoencoderConfig {
  int input_size = 96;
  int latent_dim = 100;
  std::vector<int> filters = {128, 64, 32};
  Scalar learning_rate = 1e-3;
  std::uint64_t seed = 1;

  int bottleneck_side() const { return input_size / 8; }
};

class PixelAutoencoder {
 public:
  static PixelAutoencoder init(const AutoencoderConfig& config);

  // Mean reconstruction MSE of the final pass over the images.
  Scalar train(const std::vector<GrayImage>& images, int steps);
  std::vector<float> encode(const ImageRgb& screenshot) const;
  Scalar reconstruction_mse(const std::vector<GrayImage>& images) const;
  const AutoencoderConfig& config() const { return config_; }

 private:
  friend class ScreenIndex;
  Var forward(Tape& tape, Var input) const;     // full autoencoder
  Var encode_var(Tape& tape, Var input) const;  // encoder half
  Tensor to_input(const GrayImage& image) const;
  std::vector<Param*> params();

  AutoencoderConfig config_;
  // encoder convs, dense; decoder dense, transposed convs, output head
  mutable std::vector<Param> weights_;
};

enum class RetrievalMode {
  kTfidf,
  kPixel,
  kPixelDl,
  kTfidfPixel,
  kTfidfPixelAppDesc,
};

RetrievalMode retrieval_mode_from_name(const std::string& name);
const char* retrieval_mode_name(RetrievalMode mode);

struct QueryFeatures {
  SparseVec tfidf;           // element text only
  SparseVec tfidf_app_desc;  // element text + app description
  std::vector<float> pixels;
  std::vector<float> latent;  // empty unless an autoencoder is attached
};

struct Retrieval {
  std::string screen_id;
  double similarity = 0.0;
  std::string summary;
  int summary_index = 0;
};

// Nearest-neighbor index over the training split.
class ScreenIndex {
 public:
  struct Entry {
    std::string screen_id;
    SparseVec tfidf;
    SparseVec tfidf_app_desc;
    std::vector<float> pixels;
    std::vector<float> latent;
    std::vector<std::string> summaries;
  };

  using ImageProvider = std::function<ImageRgb(const Screen&)>;

  // Fits TF-IDF on the given screens and (when with_autoencoder) trains the
  // pixel autoencoder for `autoencoder_steps` on their screenshots.
  static ScreenIndex fit(const std::vector<const Screen*>& train_screens,
                         const ImageProvider& images,
                         bool with_autoencoder = false,
                         int autoencoder_steps = 0,
                         const AutoencoderConfig& ae_config = {});

  QueryFeatures featurize_query(const Screen& screen,
                                const ImageRgb& screenshot) const;

  // Nearest training screen by cosine (or summed cosines); the prediction
  // samples one of the neighbor's summaries. Ties go to the smallest id.
  Retrieval retrieve(const QueryFeatures& query, RetrievalMode mode,
                     Rng& sampler) const;

  const std::vector<Entry>& entries() const { return entries_; }
  const TfidfModel& tfidf() const { return tfidf_; }
  bool has_autoencoder() const { return autoencoder_.has_value(); }
  const PixelAutoencoder& autoencoder() const;

  void save(const std::string& path) const;
  static ScreenIndex load(const std::string& path);

 private:
  TfidfModel tfidf_;
  std::vector<Entry> entries_;  // sorted by screen_id
  std::optional<PixelAutoencoder> autoencoder_;
};

}  // namespace s2w
