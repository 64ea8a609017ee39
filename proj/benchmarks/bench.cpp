#include <benchmark/benchmark.h>

#include "lvg/model.hpp"
#include "lvg/optimizer.hpp"
#include "lvg/predictor.hpp"
#include "lvg/synthetic_data.hpp"

namespace {

using namespace lvg;

ModelConfig config_for(bool latent) {
  ModelConfig cfg;
  if (!latent) {
    cfg.k_list.clear();
    cfg.p_drop_list.clear();
  }
  return cfg;
}

const synth::Dataset& data() {
  static const synth::Dataset d = synth::generate_dataset(16, {}, 1);
  return d;
}

void BM_Predict(benchmark::State& state) {
  const LatentVG model(config_for(state.range(0) != 0), 1);
  const SceneSample& s = data().samples[0];
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, s));
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->ArgName("latent")->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  LatentVG model(config_for(state.range(0) != 0), 1);
  AdamW opt({.lr = model.config().lr, .weight_decay = model.config().weight_decay});
  std::vector<const SceneSample*> batch;
  for (const auto& s : data().samples) batch.push_back(&s);
  Rng rng(2);
  for (auto _ : state) {
    ad::Tape tape;
    const BatchLoss loss = model.total_loss(tape, batch, true, rng);
    model.parameters().zero_grad();
    tape.backward(loss.total);
    opt.step(model.parameters());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->ArgName("latent")->Unit(benchmark::kMillisecond);

void BM_GenerateScenes(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate_dataset(64, {}, ++seed));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_GenerateScenes)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
