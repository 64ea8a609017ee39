#include <gtest/gtest.h>

#include "lvg/synthetic_data.hpp"
#include "lvg/trainer.hpp"
#include "support.hpp"

namespace lvg {
namespace {

TEST(Schedule, WarmupThenCosine) {
  TrainOptions o;
  o.steps = 100;
  o.warmup = 10;
  EXPECT_NEAR(scheduled_lr(1.0, 0, o), 0.1, 1e-12);
  EXPECT_NEAR(scheduled_lr(1.0, 9, o), 1.0, 1e-12);
  EXPECT_NEAR(scheduled_lr(1.0, 99, o), 0.1, 1e-3);
  double prev = 2;
  for (int s = 10; s < 100; ++s) {
    const double lr = scheduled_lr(1.0, s, o);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  o.cosine_decay = false;
  EXPECT_NEAR(scheduled_lr(1.0, 99, o), 1.0, 1e-12);
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ffn_hidden = 32;
  cfg.num_concepts = 8;
  cfg.lr = 1e-3;
  return cfg;
}

TEST(Train, OverfitsFourSamples) {
  const auto data = synth::generate_dataset(4, {}, 11);
  LatentVG model(small_config(), 1);
  TrainOptions o;
  o.steps = 50;
  o.batch = 4;
  o.warmup = 0;
  o.cosine_decay = false;
  o.seed = 2;
  const auto log = train(model, data.samples, o);
  ASSERT_EQ(log.size(), 50u);
  EXPECT_LT(log.back().report.total, log.front().report.total);
  for (const auto& r : log) EXPECT_TRUE(std::isfinite(r.report.total));
}

TEST(Train, SameSeedSameModel) {
  const auto data = synth::generate_dataset(8, {}, 3);
  TrainOptions o;
  o.steps = 3;
  o.batch = 4;
  o.seed = 5;
  LatentVG a(small_config(), 1), b(small_config(), 1);
  train(a, data.samples, o);
  train(b, data.samples, o);
  for (const Parameter& p : a.parameters()) EXPECT_EQ(p.value, b.parameters().at(p.name).value);
}

TEST(Evaluate, RecordsCarryExpressionMasks) {
  const auto data = synth::generate_dataset(6, {}, 2);
  const LatentVG model(small_config(), 1);
  const EvalRecord r = make_record(model, data.samples[0]);
  EXPECT_EQ(r.expression_masks.size(), 3u);
  const MetricReport m = evaluate(model, data.samples);
  EXPECT_EQ(m.sample_count, 6u);
  EXPECT_EQ(m.expression_miou.size(), 3u);
  EXPECT_EQ(m.to_text(), evaluate(model, data.samples).to_text());
}

}  // namespace
}  // namespace lvg
