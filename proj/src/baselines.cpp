#include "s2w/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "s2w/errors.hpp"
#include "s2w/featurizer.hpp"
#include "s2w/serialize.hpp"
#include "s2w/text.hpp"
#include "s2w/trainer.hpp"

namespace s2w {

double SparseVec::norm() const {
  double sum = 0.0;
  for (const auto& [idx, v] : entries) sum += v * v;
  return std::sqrt(sum);
}

bool SparseVec::empty_or_zero() const {
  for (const auto& [idx, v] : entries) {
    if (v != 0.0) return false;
  }
  return true;
}

double cosine(const SparseVec& a, const SparseVec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() && j < b.entries.size()) {
    if (a.entries[i].first == b.entries[j].first) {
      dot += a.entries[i].second * b.entries[j].second;
      ++i;
      ++j;
    } else if (a.entries[i].first < b.entries[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return dot / (na * nb);
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: vector length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TfidfModel TfidfModel::fit(const std::vector<std::vector<std::string>>& docs) {
  if (docs.empty()) throw DataError("tfidf_fit: empty corpus");
  TfidfModel model;
  model.num_docs_ = docs.size();
  std::map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    std::map<std::string, bool> seen;
    for (const auto& term : doc) {
      if (!seen[term]) {
        seen[term] = true;
        df[term] += 1;
      }
    }
  }
  const double n = static_cast<double>(docs.size());
  for (const auto& [term, count] : df) {
    model.index_.emplace(term, static_cast<int>(model.terms_.size()));
    model.terms_.push_back(term);
    model.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return model;
}

SparseVec TfidfModel::transform(const std::vector<std::string>& tokens) const {
  std::map<int, double> counts;
  for (const auto& token : tokens) {
    auto it = index_.find(token);
    if (it != index_.end()) counts[it->second] += 1.0;
  }
  SparseVec vec;
  for (const auto& [idx, tf] : counts) {
    vec.entries.emplace_back(idx, tf * idf_[static_cast<std::size_t>(idx)]);
  }
  const double norm = vec.norm();
  if (norm > 0.0) {
    for (auto& [idx, v] : vec.entries) v /= norm;
  }
  return vec;
}

double TfidfModel::idf_of(const std::string& term) const {
  auto it = index_.find(term);
  return it == index_.end() ? 0.0 : idf_[static_cast<std::size_t>(it->second)];
}

std::vector<std::string> screen_text_tokens(const Screen& screen,
                                            bool include_app_desc) {
  std::vector<std::string> tokens;
  for (int id : flatten_bfs(screen.tree, false)) {
    const UiElement& el = screen.tree.node(id);
    if (!el.text) continue;
    const auto element_tokens = tokenize(*el.text);
    tokens.insert(tokens.end(), element_tokens.begin(), element_tokens.end());
  }
  if (include_app_desc && screen.app_description) {
    const auto desc_tokens = tokenize(*screen.app_description);
    tokens.insert(tokens.end(), desc_tokens.begin(), desc_tokens.end());
  }
  return tokens;
}

std::vector<float> pixel_vectorize(const ImageRgb& screenshot) {
  const GrayImage gray = to_grayscale(screenshot);
  return resize_bilinear(gray, kPixelVectorSide, kPixelVectorSide).pixels;
}

// ---------------------------------------------------------------------------
// pixel autoencoder
// ---------------------------------------------------------------------------

PixelAutoencoder PixelAutoencoder::init(const AutoencoderConfig& config) {
  if (config.filters.size() != 3) {
    throw ConfigError("autoencoder needs exactly 3 conv filter counts");
  }
  if (config.input_size % 8 != 0) {
    throw ConfigError("autoencoder input size must be divisible by 8");
  }
  PixelAutoencoder ae;
  ae.config_ = config;
  Rng rng(config.seed);
  auto xavier = [&rng](std::vector<int> shape) {
    Tensor t(shape);
    Scalar fan_in = 1.0, fan_out = 1.0;
    if (shape.size() == 2) {
      fan_in = shape[0];
      fan_out = shape[1];
    } else if (shape.size() == 4) {
      fan_in = static_cast<Scalar>(shape[0]) * shape[1] * shape[2];
      fan_out = static_cast<Scalar>(shape[0]) * shape[1] * shape[3];
    }
    const Scalar limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
  };

  const auto& f = config.filters;
  const int side = config.bottleneck_side();
  const int flat = side * side * f[2];
  // encoder
  ae.weights_.emplace_back("enc.c1.w", xavier({3, 3, 1, f[0]}));
  ae.weights_.emplace_back("enc.c1.b", Tensor::zeros({f[0]}));
  ae.weights_.emplace_back("enc.c2.w", xavier({3, 3, f[0], f[1]}));
  ae.weights_.emplace_back("enc.c2.b", Tensor::zeros({f[1]}));
  ae.weights_.emplace_back("enc.c3.w", xavier({3, 3, f[1], f[2]}));
  ae.weights_.emplace_back("enc.c3.b", Tensor::zeros({f[2]}));
  ae.weights_.emplace_back("enc.dense.w", xavier({flat, config.latent_dim}));
  ae.weights_.emplace_back("enc.dense.b", Tensor::zeros({config.latent_dim}));
  // decoder
  ae.weights_.emplace_back("dec.dense.w", xavier({config.latent_dim, flat}));
  ae.weights_.emplace_back("dec.dense.b", Tensor::zeros({flat}));
  ae.weights_.emplace_back("dec.t1.w", xavier({3, 3, f[2], f[2]}));  // [KH,KW,Cout,Cin]
  ae.weights_.emplace_back("dec.t1.b", Tensor::zeros({f[2]}));
  ae.weights_.emplace_back("dec.t2.w", xavier({3, 3, f[1], f[2]}));
  ae.weights_.emplace_back("dec.t2.b", Tensor::zeros({f[1]}));
  ae.weights_.emplace_back("dec.t3.w", xavier({3, 3, f[0], f[1]}));
  ae.weights_.emplace_back("dec.t3.b", Tensor::zeros({f[0]}));
  ae.weights_.emplace_back("dec.head.w", xavier({3, 3, f[0], 1}));
  ae.weights_.emplace_back("dec.head.b", Tensor::zeros({1}));
  return ae;
}

std::vector<Param*> PixelAutoencoder::params() {
  std::vector<Param*> out;
  for (Param& p : weights_) out.push_back(&p);
  return out;
}

Tensor PixelAutoencoder::to_input(const GrayImage& image) const {
  const GrayImage resized =
      (image.width == config_.input_size && image.height == config_.input_size)
          ? image
          : resize_bilinear(image, config_.input_size, config_.input_size);
  Tensor t({1, config_.input_size, config_.input_size, 1});
  for (std::size_t i = 0; i < resized.pixels.size(); ++i) {
    t[i] = static_cast<Scalar>(resized.pixels[i]);
  }
  return t;
}

Var PixelAutoencoder::encode_var(Tape& tape, Var input) const {
  auto& w = weights_;
  Var x = tape.relu(tape.conv2d(input, tape.param(w[0]), tape.param(w[1]), 2));
  x = tape.relu(tape.conv2d(x, tape.param(w[2]), tape.param(w[3]), 2));
  x = tape.relu(tape.conv2d(x, tape.param(w[4]), tape.param(w[5]), 2));
  Var flat = tape.flatten_images(x);
  return tape.add_row(tape.matmul(flat, tape.param(w[6])), tape.param(w[7]));
}

Var PixelAutoencoder::forward(Tape& tape, Var input) const {
  auto& w = weights_;
  Var latent = encode_var(tape, input);
  Var x = tape.relu(tape.add_row(tape.matmul(latent, tape.param(w[8])), tape.param(w[9])));
  const int side = config_.bottleneck_side();
  const int rows = tape.value(x).rows();
  x = tape.reshape(x, {rows, side, side, config_.filters[2]});
  x = tape.relu(tape.conv2d_transpose(x, tape.param(w[10]), tape.param(w[11]), 2));
  x = tape.relu(tape.conv2d_transpose(x, tape.param(w[12]), tape.param(w[13]), 2));
  x = tape.relu(tape.conv2d_transpose(x, tape.param(w[14]), tape.param(w[15]), 2));
  return tape.sigmoid(tape.conv2d(x, tape.param(w[16]), tape.param(w[17]), 1));
}

Scalar PixelAutoencoder::train(const std::vector<GrayImage>& images, int steps) {
  if (images.empty()) throw DataError("autoencoder training needs images");
  std::vector<Tensor> inputs;
  for (const GrayImage& img : images) inputs.push_back(to_input(img));

  TrainConfig opt;
  opt.learning_rate = config_.learning_rate;
  opt.warmup_steps = 0;
  AdamOptimizer adam(params(), opt);

  Scalar last = 0.0;
  for (int step = 0; step < steps; ++step) {
    Scalar total = 0.0;
    const Scalar scale = 1.0 / static_cast<Scalar>(inputs.size());
    for (const Tensor& input : inputs) {
      Tape tape;
      Var recon = forward(tape, tape.input(input));
      Var loss = tape.mse_mean(recon, tape.input(input));
      const Scalar v = tape.value(loss)[0];
      if (!std::isfinite(v)) throw NumericError("autoencoder loss went non-finite");
      total += v;
      tape.backward(tape.scale(loss, scale));
    }
    adam.step();
    last = total * scale;
  }
  return last;
}

Scalar PixelAutoencoder::reconstruction_mse(const std::vector<GrayImage>& images) const {
  Scalar total = 0.0;
  for (const GrayImage& img : images) {
    Tape tape(false);
    const Tensor input = to_input(img);
    Var recon = forward(tape, tape.input(input));
    Var loss = tape.mse_mean(recon, tape.input(input));
    total += tape.value(loss)[0];
  }
  return total / static_cast<Scalar>(images.size());
}

std::vector<float> PixelAutoencoder::encode(const ImageRgb& screenshot) const {
  Tape tape(false);
  Var latent = encode_var(tape, tape.input(to_input(to_grayscale(screenshot))));
  const Tensor& v = tape.value(latent);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// retrieval index
// ---------------------------------------------------------------------------

RetrievalMode retrieval_mode_from_name(const std::string& name) {
  if (name == "tfidf") return RetrievalMode::kTfidf;
  if (name == "pixel") return RetrievalMode::kPixel;
  if (name == "pixel-dl" || name == "pixel_dl") return RetrievalMode::kPixelDl;
  if (name == "tfidf+pixel") return RetrievalMode::kTfidfPixel;
  if (name == "tfidf+pixel+appdesc") return RetrievalMode::kTfidfPixelAppDesc;
  throw ConfigError("unknown retrieval mode: " + name);
}

const char* retrieval_mode_name(RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::kTfidf: return "tfidf";
    case RetrievalMode::kPixel: return "pixel";
    case RetrievalMode::kPixelDl: return "pixel-dl";
    case RetrievalMode::kTfidfPixel: return "tfidf+pixel";
    case RetrievalMode::kTfidfPixelAppDesc: return "tfidf+pixel+appdesc";
  }
  return "?";
}

ScreenIndex ScreenIndex::fit(const std::vector<const Screen*>& train_screens,
                             const ImageProvider& images, bool with_autoencoder,
                             int autoencoder_steps,
                             const AutoencoderConfig& ae_config) {
  if (train_screens.empty()) throw DataError("cannot fit an index on zero screens");
  ScreenIndex index;

  std::vector<const Screen*> sorted = train_screens;
  std::sort(sorted.begin(), sorted.end(), [](const Screen* a, const Screen* b) {
    return a->screen_id < b->screen_id;
  });

  std::vector<std::vector<std::string>> docs;
  docs.reserve(sorted.size());
  for (const Screen* screen : sorted) docs.push_back(screen_text_tokens(*screen, false));
  index.tfidf_ = TfidfModel::fit(docs);

  std::vector<ImageRgb> screenshots;
  screenshots.reserve(sorted.size());
  for (const Screen* screen : sorted) screenshots.push_back(images(*screen));

  if (with_autoencoder) {
    index.autoencoder_ = PixelAutoencoder::init(ae_config);
    if (autoencoder_steps > 0) {
      std::vector<GrayImage> grays;
      grays.reserve(screenshots.size());
      for (const ImageRgb& shot : screenshots) grays.push_back(to_grayscale(shot));
      index.autoencoder_->train(grays, autoencoder_steps);
    }
  }

  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Screen* screen = sorted[i];
    Entry entry;
    entry.screen_id = screen->screen_id;
    entry.tfidf = index.tfidf_.transform(docs[i]);
    entry.tfidf_app_desc =
        index.tfidf_.transform(screen_text_tokens(*screen, true));
    entry.pixels = pixel_vectorize(screenshots[i]);
    if (index.autoencoder_) entry.latent = index.autoencoder_->encode(screenshots[i]);
    entry.summaries = screen->summaries;
    index.entries_.push_back(std::move(entry));
  }
  return index;
}

QueryFeatures ScreenIndex::featurize_query(const Screen& screen,
                                           const ImageRgb& screenshot) const {
  QueryFeatures q;
  q.tfidf = tfidf_.transform(screen_text_tokens(screen, false));
  q.tfidf_app_desc = tfidf_.transform(screen_text_tokens(screen, true));
  q.pixels = pixel_vectorize(screenshot);
  if (autoencoder_) q.latent = autoencoder_->encode(screenshot);
  return q;
}

const PixelAutoencoder& ScreenIndex::autoencoder() const {
  if (!autoencoder_) throw ConfigError("index has no pixel autoencoder");
  return *autoencoder_;
}

Retrieval ScreenIndex::retrieve(const QueryFeatures& query, RetrievalMode mode,
                                Rng& sampler) const {
  if (entries_.empty()) throw DataError("retrieve: empty index");
  if (mode == RetrievalMode::kPixelDl && !autoencoder_) {
    throw ConfigError("pixel-dl retrieval requires an index with an autoencoder");
  }
  auto score = [&](const Entry& entry) {
    switch (mode) {
      case RetrievalMode::kTfidf:
        return cosine(query.tfidf, entry.tfidf);
      case RetrievalMode::kPixel:
        return cosine(query.pixels, entry.pixels);
      case RetrievalMode::kPixelDl:
        return cosine(query.latent, entry.latent);
      case RetrievalMode::kTfidfPixel:
        return cosine(query.tfidf, entry.tfidf) + cosine(query.pixels, entry.pixels);
      case RetrievalMode::kTfidfPixelAppDesc:
        return cosine(query.tfidf_app_desc, entry.tfidf_app_desc) +
               cosine(query.pixels, entry.pixels);
    }
    return 0.0;
  };

  // Entries are sorted by id, so strict improvement keeps the smallest id.
  std::size_t best = 0;
  double best_score = score(entries_[0]);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const double s = score(entries_[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  const Entry& winner = entries_[best];
  Retrieval out;
  out.screen_id = winner.screen_id;
  out.similarity = best_score;
  out.summary_index = winner.summaries.empty()
                          ? -1
                          : static_cast<int>(sampler.below(winner.summaries.size()));
  out.summary = out.summary_index < 0 ? "" : winner.summaries[static_cast<std::size_t>(out.summary_index)];
  return out;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

namespace {

constexpr char kIndexMagic[4] = {'S', '2', 'W', 'I'};
constexpr std::uint32_t kIndexVersion = 1;

void write_sparse(BinaryWriter& w, const SparseVec& v) {
  w.u64(v.entries.size());
  for (const auto& [idx, value] : v.entries) {
    w.i32(idx);
    w.f64(value);
  }
}

SparseVec read_sparse(BinaryReader& r) {
  SparseVec v;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const int idx = r.i32();
    const double value = r.f64();
    v.entries.emplace_back(idx, value);
  }
  return v;
}

}  // namespace

void ScreenIndex::save(const std::string& path) const {
  BinaryWriter w(path);
  w.magic(kIndexMagic, kIndexVersion);
  w.u64(tfidf_.num_docs_);
  w.u64(tfidf_.terms_.size());
  for (std::size_t i = 0; i < tfidf_.terms_.size(); ++i) {
    w.str(tfidf_.terms_[i]);
    w.f64(tfidf_.idf_[i]);
  }
  w.u64(entries_.size());
  for (const Entry& e : entries_) {
    w.str(e.screen_id);
    write_sparse(w, e.tfidf);
    write_sparse(w, e.tfidf_app_desc);
    w.f32_vec(e.pixels);
    w.f32_vec(e.latent);
    w.u64(e.summaries.size());
    for (const auto& s : e.summaries) w.str(s);
  }
  w.u8(autoencoder_ ? 1 : 0);
  if (autoencoder_) {
    const AutoencoderConfig& c = autoencoder_->config();
    w.i32(c.input_size);
    w.i32(c.latent_dim);
    w.i32_vec(c.filters);
    w.f64(c.learning_rate);
    w.u64(c.seed);
    w.u64(autoencoder_->weights_.size());
    for (const Param& p : autoencoder_->weights_) {
      w.str(p.name);
      w.i32_vec(p.value.shape());
      w.f64_vec(std::vector<double>(p.value.data(), p.value.data() + p.value.size()));
    }
  }
  w.close();
}

ScreenIndex ScreenIndex::load(const std::string& path) {
  BinaryReader r(path);
  if (r.magic(kIndexMagic) != kIndexVersion) {
    throw SchemaError("unsupported index version in " + path);
  }
  ScreenIndex index;
  index.tfidf_.num_docs_ = r.u64();
  const std::uint64_t terms = r.u64();
  for (std::uint64_t i = 0; i < terms; ++i) {
    std::string term = r.str();
    index.tfidf_.index_.emplace(term, static_cast<int>(index.tfidf_.terms_.size()));
    index.tfidf_.terms_.push_back(std::move(term));
    index.tfidf_.idf_.push_back(r.f64());
  }
  const std::uint64_t entries = r.u64();
  for (std::uint64_t i = 0; i < entries; ++i) {
    Entry e;
    e.screen_id = r.str();
    e.tfidf = read_sparse(r);
    e.tfidf_app_desc = read_sparse(r);
    e.pixels = r.f32_vec();
    e.latent = r.f32_vec();
    const std::uint64_t n = r.u64();
    for (std::uint64_t j = 0; j < n; ++j) e.summaries.push_back(r.str());
    index.entries_.push_back(std::move(e));
  }
  if (r.u8()) {
    AutoencoderConfig c;
    c.input_size = r.i32();
    c.latent_dim = r.i32();
    c.filters = r.i32_vec();
    c.learning_rate = r.f64();
    c.seed = r.u64();
    PixelAutoencoder ae = PixelAutoencoder::init(c);
    const std::uint64_t n = r.u64();
    if (n != ae.weights_.size()) throw SchemaError("autoencoder weight count mismatch");
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::string name = r.str();
      const std::vector<int> shape = r.i32_vec();
      const std::vector<double> data = r.f64_vec();
      if (ae.weights_[i].name != name || ae.weights_[i].value.shape() != shape) {
        throw SchemaError("autoencoder weight mismatch at " + name);
      }
      for (std::size_t j = 0; j < data.size(); ++j) ae.weights_[i].value[j] = data[j];
    }
    index.autoencoder_ = std::move(ae);
  }
  return index;
}

}  // namespace s2w
