#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "lvg/metrics.hpp"
#include "lvg/model.hpp"
#include "lvg/predictor.hpp"

namespace lvg {

struct StepRecord {
  int step = 0;
  LossReport report;
  double grad_norm = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainOptions {
  int steps = 3000;
  int batch = 16;
  int warmup = 100;            // linear lr warmup steps
  bool cosine_decay = true;    // decay to 10% of the base lr by the last step
  int log_every = 1;           // JSONL log stride
  int checkpoint_every = 0;    // 0 keeps only the final checkpoint
  std::uint64_t seed = 0;      // batch order, dropout and Gumbel noise
  std::optional<std::filesystem::path> out_dir;  // log + checkpoints when set
  std::function<void(const StepRecord&)> on_step;
};

/// Learning rate at `step` (0-based) under the warmup / cosine schedule.
double scheduled_lr(double base, int step, const TrainOptions& opts);

/// AdamW over shuffled mini-batches. Returns one record per step.
std::vector<StepRecord> train(LatentVG& model, const std::vector<SceneSample>& data,
                              const TrainOptions& opts);

/// Predicts every sample and builds its EvalRecord, including one mask per
/// expression map thresholded on its own.
EvalRecord make_record(const LatentVG& model, const SceneSample& sample,
                       PredictionOutput* prediction = nullptr);

MetricReport evaluate(const LatentVG& model, const std::vector<SceneSample>& data,
                      const MetricOptions& opts = {});

}  // namespace lvg
