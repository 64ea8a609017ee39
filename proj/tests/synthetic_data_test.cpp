#include <gtest/gtest.h>

#include <filesystem>

#include "lvg/synthetic_data.hpp"

namespace lvg::synth {
namespace {

TEST(Vocabulary, StandardCoversGrammar) {
  const Vocabulary v = Vocabulary::standard();
  EXPECT_EQ(v.id("<unk>"), 0);
  EXPECT_EQ(v.id("never-seen"), 0);
  for (const char* w : {"the", "red", "pink", "gray", "circle", "small", "left", "center"}) {
    EXPECT_GT(v.id(w), 0) << w;
  }
  const auto ids = v.encode("the large red circle on the left");
  EXPECT_EQ(v.decode(ids), "the large red circle on the left");
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "lvg_vocab_test.txt";
  const Vocabulary v = Vocabulary::standard();
  v.save(path);
  const Vocabulary back = Vocabulary::load(path);
  EXPECT_EQ(back.size(), v.size());
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(back.word(i), v.word(i));
  std::filesystem::remove(path);
  EXPECT_THROW(Vocabulary::load(path), FormatError);
}

TEST(Expressions, DescribeParseRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const SceneSpec s = sample_scene(rng, {}, false);
    const std::string text = describe(s.query);
    const Query back = parse_expression(text);
    EXPECT_EQ(describe(back), text);
  }
  EXPECT_THROW(parse_expression("the banana"), FormatError);
}

TEST(Scenes, TargetIsUnique) {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const SceneSpec s = sample_scene(rng, {}, false);
    ASSERT_TRUE(s.target.has_value());
    int hits = 0;
    for (const auto& o : s.objects) hits += s.query.matches(o);
    EXPECT_EQ(hits, 1);
    EXPECT_TRUE(s.query.matches(s.objects[static_cast<std::size_t>(*s.target)]));
    EXPECT_GE(s.objects.size(), 2u);
    EXPECT_LE(s.objects.size(), 5u);
  }
}

TEST(Scenes, NoTargetMatchesNothing) {
  Rng rng(3);
  for (auto mode : {NoTargetMode::ReservedColor, NoTargetMode::AbsentColor}) {
    GeneratorOptions opts;
    opts.no_target_mode = mode;
    for (int i = 0; i < 200; ++i) {
      const SceneSpec s = sample_scene(rng, opts, true);
      EXPECT_FALSE(s.target.has_value());
      for (const auto& o : s.objects) EXPECT_FALSE(s.query.matches(o));
      ASSERT_TRUE(s.query.color.has_value());
      if (mode == NoTargetMode::ReservedColor) {
        EXPECT_GE(*s.query.color, static_cast<int>(kPalette.size()));
      }
    }
  }
}

TEST(Render, MasksAreDisjointAndMatchRasterizer) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const SceneSpec s = sample_scene(rng, {}, false);
    const RenderedScene r = render(s, 64, 64);
    ASSERT_EQ(r.masks.size(), s.objects.size());
    std::vector<int> cover(64 * 64, 0);
    for (std::size_t k = 0; k < r.masks.size(); ++k) {
      EXPECT_EQ(r.masks[k], rasterize(s.objects[k], 64, 64));
      EXPECT_GT(r.masks[k].area(), 0u);
      for (std::size_t p = 0; p < cover.size(); ++p) cover[p] += r.masks[k].data[p];
    }
    for (int c : cover) EXPECT_LE(c, 1);
  }
}

TEST(Render, ShapesRasterizeAsDefined) {
  SceneObject sq{Shape::Square, 0, Size::Small, Position::Center, 10, 10, 3};
  EXPECT_EQ(rasterize(sq, 32, 32).area(), 49u);
  SceneObject ci{Shape::Circle, 0, Size::Small, Position::Center, 10, 10, 3};
  EXPECT_EQ(rasterize(ci, 32, 32).area(), 29u);
  SceneObject tr{Shape::Triangle, 0, Size::Small, Position::Center, 10, 10, 3};
  const Mask t = rasterize(tr, 32, 32);
  EXPECT_EQ(t.at(13, 7), 1);   // bottom row spans the full width
  EXPECT_EQ(t.at(7, 10), 1);   // apex
  EXPECT_EQ(t.at(7, 9), 0);
}

TEST(Dataset, DeterministicAndSplitsDiffer) {
  GeneratorOptions opts;
  opts.no_target_fraction = 0.1;
  const Dataset a = generate_dataset(50, opts, 9, 0);
  const Dataset b = generate_dataset(50, opts, 9, 0);
  const Dataset c = generate_dataset(50, opts, 9, 1);
  int same_as_other_split = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.samples[i].image.pixels, b.samples[i].image.pixels);
    EXPECT_EQ(a.samples[i].token_ids, b.samples[i].token_ids);
    EXPECT_EQ(a.samples[i].gt_mask, b.samples[i].gt_mask);
    same_as_other_split += a.samples[i].image.pixels == c.samples[i].image.pixels;
  }
  EXPECT_EQ(same_as_other_split, 0);
}

TEST(Dataset, SamplesAreConsistent) {
  GeneratorOptions opts;
  opts.no_target_fraction = 0.3;
  const Dataset d = generate_dataset(200, opts, 5);
  int no_target = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const SceneSample& s = d.samples[i];
    EXPECT_EQ(s.no_target, !d.specs[i].target.has_value());
    EXPECT_EQ(s.gt_mask.empty(), s.no_target);
    EXPECT_EQ(s.gt_box, tight_box(s.gt_mask));
    EXPECT_EQ(d.vocab.decode(s.token_ids), describe(d.specs[i].query));
    for (float v : s.image.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    no_target += s.no_target;
  }
  EXPECT_GT(no_target, 30);
  EXPECT_LT(no_target, 90);
}

TEST(Dataset, RejectsBadRequests) {
  EXPECT_THROW(generate_dataset(0, {}, 1), InfeasibleSpec);
  GeneratorOptions bad;
  bad.min_objects = 6;
  bad.max_objects = 3;
  EXPECT_THROW(generate_dataset(5, bad, 1), InfeasibleSpec);
}

}  // namespace
}  // namespace lvg::synth
