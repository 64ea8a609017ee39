#include <gtest/gtest.h>

#include <filesystem>

#include "lvg/config.hpp"
#include "lvg/embedding.hpp"
#include "lvg/parameters.hpp"
#include "lvg/rng.hpp"
#include "support.hpp"

namespace lvg {
namespace {

TEST(Config, DefaultsMatchToySetup) {
  const ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.d, 64);
  EXPECT_EQ(c.layers, 4);
  EXPECT_EQ(c.patch, 8);
  EXPECT_EQ(c.latent_count(), 2);
  EXPECT_EQ(c.k_list, (std::vector<int>{4, 10}));
  EXPECT_EQ(c.p_drop_list, (std::vector<double>{0.2, 0.15}));
  EXPECT_EQ(c.num_concepts, 100);
  EXPECT_DOUBLE_EQ(c.gamma, 0.2);
  EXPECT_DOUBLE_EQ(c.lambda_bce, 2.0);
  EXPECT_DOUBLE_EQ(c.lambda_dice, 0.5);
  EXPECT_DOUBLE_EQ(c.mask_threshold, 0.35);
  EXPECT_DOUBLE_EQ(c.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.tau, 1.0);
  EXPECT_TRUE(c.scaled_similarity);
  EXPECT_EQ(c.num_patches(), 64);
  EXPECT_EQ(c.feature_h(), 16);
}

TEST(Config, TextRoundTrip) {
  ModelConfig c;
  c.k_list = {3, 5, 7};
  c.p_drop_list = {0.1, 0.2, 0.3};
  c.tau = 0.123456789;
  c.gres_enabled = true;
  c.image_h = 48;
  c.image_w = 32;
  const ModelConfig back = ModelConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.k_list, c.k_list);
  EXPECT_DOUBLE_EQ(back.tau, c.tau);
  EXPECT_EQ(back.image_h, 48);
}

TEST(Config, FileRoundTripAndComments) {
  const auto path = std::filesystem::temp_directory_path() / "lvg_config_test.txt";
  ModelConfig c;
  c.layers = 2;
  c.save(path);
  EXPECT_EQ(ModelConfig::load(path).layers, 2);
  std::filesystem::remove(path);
  const ModelConfig p = ModelConfig::parse("# comment\n\nd = 32\nimage_hw = 64\n");
  EXPECT_EQ(p.d, 32);
  EXPECT_EQ(p.image_w, 64);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ModelConfig::parse("depth = 3\n"), ConfigError);
  EXPECT_THROW(ModelConfig::parse("d = many\n"), ConfigError);
  EXPECT_THROW(ModelConfig::parse("d 32\n"), ConfigError);
}

TEST(Config, ValidatesInvariants) {
  auto bad = [](auto edit) {
    ModelConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](ModelConfig& c) { c.p_drop_list = {0.2}; });
  bad([](ModelConfig& c) { c.k_list = {0, 4}; });
  bad([](ModelConfig& c) { c.p_drop_list = {1.0, 0.1}; });
  bad([](ModelConfig& c) { c.image_h = 60; });
  bad([](ModelConfig& c) { c.gamma = 1.5; });
  bad([](ModelConfig& c) { c.tau = 0; });
  bad([](ModelConfig& c) { c.mask_threshold = 1.0; });
  ModelConfig none;
  none.k_list.clear();
  none.p_drop_list.clear();
  EXPECT_NO_THROW(none.validate());
}

TEST(Config, UpsampleStages) {
  ModelConfig c;
  EXPECT_EQ(c.upsample_stages(), 1);
  c.patch = 16;
  c.image_h = c.image_w = 480;
  EXPECT_EQ(c.upsample_stages(), 2);
  EXPECT_EQ(c.num_patches(), 900);
  EXPECT_EQ(c.feature_h(), 120);
  c.patch = 12;
  c.image_h = c.image_w = 48;
  EXPECT_THROW(c.upsample_stages(), ShapeMismatch);
}

TEST(Seeding, SameSeedSameStream) {
  seed_all(11);
  std::vector<bool> a;
  for (int i = 0; i < 64; ++i) a.push_back(global_rng().bernoulli(0.3));
  seed_all(11);
  std::vector<bool> b;
  for (int i = 0; i < 64; ++i) b.push_back(global_rng().bernoulli(0.3));
  EXPECT_EQ(a, b);
}

TEST(Seeding, DifferentSeedsDiffer) {
  Rng r1(1), r2(2);
  int differ = 0;
  for (int i = 0; i < 100; ++i) differ += r1.bernoulli(0.5) != r2.bernoulli(0.5);
  EXPECT_GT(differ, 0);
}

TEST(Seeding, ReseedRepeatsGumbel) {
  Rng r(5);
  const double a = r.gumbel(), b = r.gumbel();
  r.seed(5);
  EXPECT_EQ(r.gumbel(), a);
  EXPECT_EQ(r.gumbel(), b);
}

TEST(Seeding, DerivedSeedsAreDistinct) {
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_EQ(derive_seed(9, 3, 4), derive_seed(9, 3, 4));
}

class Embedding : public ::testing::Test {
 protected:
  ModelConfig cfg = testing::tiny_config();
  ParameterStore store;
  Rng rng{4};
  EmbeddingParams params = EmbeddingParams::create(store, cfg, rng);
};

TEST_F(Embedding, StreamShapes) {
  ad::Tape tape(false);
  const Image img(cfg.image_h, cfg.image_w);
  const int ids[] = {1, 2, 3};
  const EmbeddingSet e = embed_inputs(tape, img, ids, params, cfg);
  EXPECT_EQ(e.visual.rows(), cfg.num_patches() + 1);
  EXPECT_EQ(e.visual.cols(), cfg.d);
  EXPECT_EQ(e.textual.rows(), 4);
  EXPECT_TRUE(e.latents.empty());
}

TEST_F(Embedding, DefaultConfigGives65VisualRows) {
  ModelConfig big;
  ParameterStore s;
  const EmbeddingParams p = EmbeddingParams::create(s, big, rng);
  ad::Tape tape(false);
  const EmbeddingSet e = embed_inputs(tape, Image(64, 64), std::span<const int>{}, p, big);
  EXPECT_EQ(e.visual.rows(), 65);
  EXPECT_EQ(e.textual.rows(), 1);
}

TEST_F(Embedding, Errors) {
  ad::Tape tape(false);
  const int ok[] = {1};
  const int bad[] = {cfg.vocab_size};
  EXPECT_THROW(embed_inputs(tape, Image(30, 32), ok, params, cfg), ShapeMismatch);
  EXPECT_THROW(embed_inputs(tape, Image(cfg.image_h, cfg.image_w), bad, params, cfg), VocabOverflow);
  const std::vector<int> too_long(static_cast<std::size_t>(cfg.m_max + 1), 1);
  EXPECT_THROW(embed_inputs(tape, Image(cfg.image_h, cfg.image_w), too_long, params, cfg),
               ShapeMismatch);
  EXPECT_THROW(patchify(Image(20, 20), 8), ShapeMismatch);
}

TEST_F(Embedding, PositionalTermsDependOnIndexOnly) {
  // Swapping two patches swaps their content terms; the difference between
  // the rows is then the negated content difference plus the fixed
  // positional difference.
  Image a(cfg.image_h, cfg.image_w);
  for (float& v : a.pixels) v = static_cast<float>(rng.uniform());
  Image b = a;
  for (int r = 0; r < cfg.patch; ++r) {
    for (int c = 0; c < cfg.patch; ++c) {
      for (int ch = 0; ch < 3; ++ch) std::swap(b.at(r, c, ch), b.at(r, c + cfg.patch, ch));
    }
  }
  ad::Tape tape(false);
  const EmbeddingSet ea = embed_inputs(tape, a, std::span<const int>{}, params, cfg);
  const EmbeddingSet eb = embed_inputs(tape, b, std::span<const int>{}, params, cfg);
  const Matrix& pos = params.visual_pos->value;
  const RowVector content_a1 = ea.visual.value().row(1) - pos.row(1);
  const RowVector content_b2 = eb.visual.value().row(2) - pos.row(2);
  EXPECT_LT((content_a1 - content_b2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ea.visual.value().bottomRows(13) - eb.visual.value().bottomRows(13)).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(Parameters, OrthogonalInit) {
  Rng rng(2);
  Matrix wide(4, 9), tall(9, 4);
  init::orthogonal(wide, rng);
  init::orthogonal(tall, rng);
  EXPECT_TRUE((wide * wide.transpose()).isIdentity(1e-10));
  EXPECT_TRUE((tall.transpose() * tall).isIdentity(1e-10));
}

TEST(Parameters, StoreLookup) {
  ParameterStore s;
  s.add("a", 2, 3);
  s.add("b", 1, 1, false);
  EXPECT_EQ(s.scalar_count(), 7u);
  EXPECT_TRUE(s.contains("b"));
  EXPECT_FALSE(s.at("b").decay);
  EXPECT_THROW(s.add("a", 1, 1), ConfigError);
}

}  // namespace
}  // namespace lvg
