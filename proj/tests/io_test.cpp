#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lvg/checkpoint.hpp"
#include "lvg/dataset_io.hpp"
#include "lvg/predictor.hpp"
#include "lvg/synthetic_data.hpp"
#include "support.hpp"

namespace lvg {
namespace {

namespace fs = std::filesystem;

class FileTest : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("lvg_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

TEST(Rle, RoundTrip) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    Mask m(rng.uniform_int(1, 9), rng.uniform_int(1, 9));
    for (auto& v : m.data) v = rng.bernoulli(0.4) ? 1 : 0;
    EXPECT_EQ(io::rle_decode(io::rle_encode(m), m.height, m.width), m);
  }
  Mask ones(2, 2);
  std::fill(ones.data.begin(), ones.data.end(), 1);
  EXPECT_EQ(io::rle_encode(ones), (std::vector<int>{0, 4}));
  EXPECT_THROW(io::rle_decode({1, 1}, 2, 2), FormatError);
}

TEST_F(FileTest, SplitRoundTripAndHash) {
  synth::GeneratorOptions opts;
  opts.no_target_fraction = 0.2;
  const auto data = synth::generate_dataset(20, opts, 3);
  io::save_split(dir / "train", data.samples);
  const auto back = io::load_split(dir / "train");
  ASSERT_EQ(back.size(), data.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].token_ids, data.samples[i].token_ids);
    EXPECT_EQ(back[i].gt_mask, data.samples[i].gt_mask);
    EXPECT_EQ(back[i].gt_box, data.samples[i].gt_box);
    EXPECT_EQ(back[i].no_target, data.samples[i].no_target);
    for (std::size_t p = 0; p < back[i].image.pixels.size(); ++p) {
      EXPECT_NEAR(back[i].image.pixels[p], data.samples[i].image.pixels[p], 0.5 / 255 + 1e-6);
    }
  }
  const std::string h = io::dataset_hash(dir);
  EXPECT_EQ(h.size(), 64u);
  EXPECT_EQ(h, io::dataset_hash(dir));
  io::save_split(dir / "train", synth::generate_dataset(20, opts, 4).samples);
  EXPECT_NE(h, io::dataset_hash(dir));
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(FileTest, TruncatedImagesRejected) {
  io::save_split(dir / "s", synth::generate_dataset(3, {}, 1).samples);
  const fs::path img = dir / "s" / "images.raw";
  fs::resize_file(img, fs::file_size(img) - 10);
  EXPECT_THROW(io::load_split(dir / "s"), FormatError);
  EXPECT_THROW(io::load_split(dir / "missing"), FormatError);
}

TEST_F(FileTest, CheckpointRoundTrip) {
  const ModelConfig cfg = testing::tiny_config();
  LatentVG model(cfg, 5);
  const Checkpoint ck = Checkpoint::capture(model, 42);
  ck.save(dir / "ck.bin");
  const Checkpoint back = Checkpoint::load(dir / "ck.bin");
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.config.to_text(), cfg.to_text());
  const auto restored = back.restore();
  for (const Parameter& p : model.parameters()) {
    EXPECT_EQ(restored->parameters().at(p.name).value, p.value) << p.name;
  }
  Rng rng(1);
  const SceneSample s = testing::random_sample(cfg, rng, 4);
  EXPECT_EQ(predict(*restored, s).prob_map, predict(model, s).prob_map);
}

TEST_F(FileTest, CheckpointErrors) {
  const ModelConfig cfg = testing::tiny_config();
  LatentVG model(cfg, 5);
  Checkpoint::capture(model, 1).save(dir / "ck.bin");
  {
    std::ofstream(dir / "bad.bin") << "NOTACKPT";
  }
  EXPECT_THROW(Checkpoint::load(dir / "bad.bin"), FormatError);
  fs::copy_file(dir / "ck.bin", dir / "trunc.bin");
  fs::resize_file(dir / "trunc.bin", fs::file_size(dir / "trunc.bin") - 8);
  EXPECT_THROW(Checkpoint::load(dir / "trunc.bin"), FormatError);
  {
    std::ofstream(dir / "ck.bin", std::ios::app | std::ios::binary) << "x";
  }
  EXPECT_THROW(Checkpoint::load(dir / "ck.bin"), FormatError);

  Checkpoint ck = Checkpoint::capture(model, 1);
  ck.tensors.begin()->second = Matrix::Zero(1, 1);
  EXPECT_THROW(ck.apply_to(model), ShapeMismatch);
  ck = Checkpoint::capture(model, 1);
  ck.tensors.erase(ck.tensors.begin());
  EXPECT_THROW(ck.apply_to(model), FormatError);
}

TEST(Checkpoint, NoLatentModelHasNoLatentParameters) {
  ModelConfig cfg = testing::tiny_config();
  cfg.k_list.clear();
  cfg.p_drop_list.clear();
  const LatentVG model(cfg, 1);
  for (const auto& [name, m] : Checkpoint::capture(model, 0).tensors) {
    EXPECT_EQ(name.find("latent"), std::string::npos) << name;
    EXPECT_EQ(name.find("concept"), std::string::npos) << name;
  }
}

}  // namespace
}  // namespace lvg
