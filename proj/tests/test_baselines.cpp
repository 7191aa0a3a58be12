#include <doctest.h>

#include <cmath>

#include "s2w/baselines.hpp"
#include "s2w/errors.hpp"
#include "s2w/rng.hpp"
#include "support/fixture.hpp"

using namespace s2w;

TEST_CASE("smoothed idf arithmetic") {
  // 2 documents: "page" in both, "login" in one.
  const TfidfModel model = TfidfModel::fit({{"page", "login"}, {"page"}});
  CHECK(model.idf_of("page") == doctest::Approx(std::log(3.0 / 3.0) + 1.0));
  CHECK(model.idf_of("page") == doctest::Approx(1.0));
  CHECK(model.idf_of("login") == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
  CHECK(model.idf_of("login") == doctest::Approx(1.4055).epsilon(1e-4));
  CHECK(model.idf_of("unseen") == 0.0);
  CHECK_THROWS_AS(TfidfModel::fit({}), DataError);
}

TEST_CASE("tfidf vectors are L2-normalized; empty docs flagged") {
  const TfidfModel model = TfidfModel::fit({{"a", "b"}, {"a", "c"}});
  const SparseVec v = model.transform({"a", "b", "b"});
  CHECK(v.norm() == doctest::Approx(1.0));
  const SparseVec zero = model.transform({});
  CHECK(zero.empty_or_zero());
  const SparseVec unseen_only = model.transform({"zzz"});
  CHECK(unseen_only.empty_or_zero());
}

TEST_CASE("cosine properties") {
  const TfidfModel model =
      TfidfModel::fit({{"a", "b"}, {"c", "d"}, {"a", "c"}});
  const SparseVec va = model.transform({"a", "b"});
  const SparseVec vb = model.transform({"c", "d"});
  CHECK(cosine(va, va) == doctest::Approx(1.0));
  CHECK(cosine(va, vb) == doctest::Approx(cosine(vb, va)));
  CHECK(cosine(va, vb) == doctest::Approx(0.0));  // orthogonal term sets

  Rng rng(5);
  for (int round = 0; round < 50; ++round) {
    std::vector<float> x(16), y(16);
    for (auto& v : x) v = static_cast<float>(rng.uniform(0.0, 1.0));
    for (auto& v : y) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const double c = cosine(x, y);
    CHECK(c >= 0.0);  // non-negative vectors
    CHECK(c <= 1.0 + 1e-12);
    CHECK(cosine(x, x) == doctest::Approx(1.0));
  }
}

TEST_CASE("pixel_vectorize") {
  SUBCASE("all-white screenshot gives the all-ones vector") {
    const auto v = pixel_vectorize(ImageRgb::solid(50, 80, 255, 255, 255));
    REQUIRE(v.size() == 10000);
    for (float p : v) CHECK(p == doctest::Approx(1.0));
  }
  SUBCASE("all-black gives zeros (flagged empty for cosine)") {
    const auto v = pixel_vectorize(ImageRgb::solid(64, 64, 0, 0, 0));
    for (float p : v) CHECK(p == doctest::Approx(0.0));
    CHECK(cosine(v, v) == 0.0);  // zero vector has no direction
  }
  SUBCASE("half-white half-black has mean one half") {
    ImageRgb img = ImageRgb::solid(100, 100, 0, 0, 0);
    for (int y = 0; y < 100; ++y) {
      for (int x = 0; x < 50; ++x) {
        auto* px = img.at(x, y);
        px[0] = px[1] = px[2] = 255;
      }
    }
    const auto v = pixel_vectorize(img);
    double mean = 0.0;
    for (float p : v) mean += p;
    mean /= v.size();
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  }
}

TEST_CASE("untrained autoencoder is a total function with a 100-d latent") {
  AutoencoderConfig config;  // 96x96, filters 128/64/32, latent 100
  const PixelAutoencoder ae = PixelAutoencoder::init(config);
  const auto latent = ae.encode(ImageRgb::solid(144, 256, 90, 20, 200));
  REQUIRE(latent.size() == 100);
  for (float v : latent) CHECK(std::isfinite(v));
}

TEST_CASE("autoencoder overfits five screens to MSE below 0.01") {
  std::vector<GrayImage> images;
  for (int i = 0; i < 5; ++i) {
    GrayImage g = GrayImage::zeros(96, 96);
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) {
        g.at(x, y) = static_cast<float>(((x / 16 + y / 16 + i) % 3) * 0.5);
      }
    }
    images.push_back(std::move(g));
  }

  AutoencoderConfig config;
  config.learning_rate = 2e-3;
  config.seed = 9;
  PixelAutoencoder ae = PixelAutoencoder::init(config);
  Scalar mse = ae.reconstruction_mse(images);
  CHECK(mse > 0.01);  // untrained reconstruction is far off
  for (int chunk = 0; chunk < 3 && mse >= 0.01; ++chunk) {
    ae.train(images, 15);
    mse = ae.reconstruction_mse(images);
  }
  CHECK(mse < 0.01);
}

namespace {

// Brute-force linear-scan oracle with its own similarity code.
std::string scan_oracle(const QueryFeatures& q, const ScreenIndex& index,
                        RetrievalMode mode, double* best_out) {
  auto dense_cos = [](const std::vector<float>& a, const std::vector<float>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += static_cast<long double>(a[i]) * b[i];
      na += static_cast<long double>(a[i]) * a[i];
      nb += static_cast<long double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0.0L;
    return dot / (sqrtl(na) * sqrtl(nb));
  };
  auto sparse_cos = [](const SparseVec& a, const SparseVec& b) {
    long double dot = 0, na = 0, nb = 0;
    for (const auto& [i, v] : a.entries) na += static_cast<long double>(v) * v;
    for (const auto& [i, v] : b.entries) nb += static_cast<long double>(v) * v;
    for (const auto& [i, va] : a.entries) {
      for (const auto& [j, vb] : b.entries) {
        if (i == j) dot += static_cast<long double>(va) * vb;
      }
    }
    if (na == 0 || nb == 0) return 0.0L;
    return dot / (sqrtl(na) * sqrtl(nb));
  };

  std::string best_id;
  long double best = -1e30L;
  for (const auto& entry : index.entries()) {
    long double s = 0;
    switch (mode) {
      case RetrievalMode::kTfidf: s = sparse_cos(q.tfidf, entry.tfidf); break;
      case RetrievalMode::kPixel: s = dense_cos(q.pixels, entry.pixels); break;
      case RetrievalMode::kPixelDl: s = dense_cos(q.latent, entry.latent); break;
      case RetrievalMode::kTfidfPixel:
        s = sparse_cos(q.tfidf, entry.tfidf) + dense_cos(q.pixels, entry.pixels);
        break;
      case RetrievalMode::kTfidfPixelAppDesc:
        s = sparse_cos(q.tfidf_app_desc, entry.tfidf_app_desc) +
            dense_cos(q.pixels, entry.pixels);
        break;
    }
    if (s > best) {  // keeps the smallest id on ties (entries sorted)
      best = s;
      best_id = entry.screen_id;
    }
  }
  if (best_out) *best_out = static_cast<double>(best);
  return best_id;
}

}  // namespace

TEST_CASE("retrieval equals the brute-force scan oracle on a 20-screen fixture") {
  const std::string dir = testing::make_temp_dir("retrieval");
  testing::FixtureOptions options;
  options.num_apps = 4;
  options.screens_per_app = 5;
  const auto fixture = testing::write_standard_fixture(dir, options);
  Corpus corpus = load_corpus(fixture.root, fixture.summaries_csv,
                              fixture.app_details_csv);
  REQUIRE(corpus.screens.size() == 20);

  std::vector<const Screen*> screens;
  for (const auto& [id, screen] : corpus.screens) screens.push_back(&screen);
  auto provider = [&](const Screen& s) {
    return load_image(corpus.screenshot_abs_path(s));
  };
  AutoencoderConfig small_ae;
  small_ae.input_size = 32;
  small_ae.filters = {8, 8, 8};
  small_ae.latent_dim = 100;
  const ScreenIndex index = ScreenIndex::fit(screens, provider, true, 0, small_ae);

  const std::vector<RetrievalMode> modes = {
      RetrievalMode::kTfidf, RetrievalMode::kPixel, RetrievalMode::kPixelDl,
      RetrievalMode::kTfidfPixel, RetrievalMode::kTfidfPixelAppDesc};

  SUBCASE("self-queries return the screen itself at cosine 1") {
    Rng sampler(3);
    for (const Screen* screen : screens) {
      const QueryFeatures q = index.featurize_query(*screen, provider(*screen));
      const Retrieval got = index.retrieve(q, RetrievalMode::kPixel, sampler);
      CHECK(got.screen_id == screen->screen_id);
      CHECK(got.similarity == doctest::Approx(1.0).epsilon(1e-6));
      const Retrieval both = index.retrieve(q, RetrievalMode::kTfidfPixel, sampler);
      CHECK(both.screen_id == screen->screen_id);
    }
  }

  SUBCASE("every mode matches the oracle for every query screen") {
    Rng sampler(4);
    for (const Screen* screen : screens) {
      const QueryFeatures q = index.featurize_query(*screen, provider(*screen));
      for (RetrievalMode mode : modes) {
        CAPTURE(retrieval_mode_name(mode));
        CAPTURE(screen->screen_id);
        double oracle_score = 0.0;
        const std::string oracle_id = scan_oracle(q, index, mode, &oracle_score);
        const Retrieval got = index.retrieve(q, mode, sampler);
        CHECK(got.screen_id == oracle_id);
        CHECK(got.similarity == doctest::Approx(oracle_score).epsilon(1e-9));
      }
    }
  }

  SUBCASE("prediction samples one of the neighbor's summaries, seeded") {
    Rng s1(9), s2(9);
    const QueryFeatures q = index.featurize_query(*screens[3], provider(*screens[3]));
    const Retrieval a = index.retrieve(q, RetrievalMode::kTfidf, s1);
    const Retrieval b = index.retrieve(q, RetrievalMode::kTfidf, s2);
    CHECK(a.summary == b.summary);
    const Screen& neighbor = corpus.screens.at(a.screen_id);
    CHECK(std::find(neighbor.summaries.begin(), neighbor.summaries.end(),
                    a.summary) != neighbor.summaries.end());
  }

  SUBCASE("index round trip preserves retrieval behavior") {
    const std::string path = dir + "/index.bin";
    index.save(path);
    const ScreenIndex loaded = ScreenIndex::load(path);
    REQUIRE(loaded.entries().size() == index.entries().size());
    CHECK(loaded.has_autoencoder());
    Rng sampler(5);
    for (const Screen* screen : {screens[0], screens[7], screens[19]}) {
      const QueryFeatures q = loaded.featurize_query(*screen, provider(*screen));
      for (RetrievalMode mode : modes) {
        const Retrieval a = index.retrieve(q, mode, sampler);
        Rng sampler2(6);
        Rng sampler3(6);
        const Retrieval x = index.retrieve(q, mode, sampler2);
        const Retrieval y = loaded.retrieve(q, mode, sampler3);
        CHECK(x.screen_id == y.screen_id);
        CHECK(x.similarity == doctest::Approx(y.similarity).epsilon(1e-12));
        (void)a;
      }
    }
  }
}

TEST_CASE("ties break toward the smallest screen id") {
  // Two identical screens; a matching query must return the first id.
  Screen a, b;
  a.screen_id = "s002";
  b.screen_id = "s001";
  for (Screen* s : {&a, &b}) {
    s->tree = parse_view_hierarchy(
        R"({"class":"X","bounds":[0,0,10,10],"text":"same text"})");
    s->summaries = {"identical screen"};
    s->screenshot_width = 10;
    s->screenshot_height = 10;
  }
  auto provider = [](const Screen&) { return ImageRgb::solid(10, 10, 100, 100, 100); };
  const ScreenIndex index = ScreenIndex::fit({&a, &b}, provider);
  Rng sampler(1);
  const QueryFeatures q = index.featurize_query(a, provider(a));
  CHECK(index.retrieve(q, RetrievalMode::kTfidfPixel, sampler).screen_id == "s001");
}

TEST_CASE("retrieval on an empty index fails") {
  CHECK_THROWS_AS(ScreenIndex::fit({}, [](const Screen&) { return ImageRgb(); }),
                  DataError);
}
