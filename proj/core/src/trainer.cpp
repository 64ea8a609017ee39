#include "lvg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "lvg/checkpoint.hpp"
#include "lvg/optimizer.hpp"

namespace lvg {

double scheduled_lr(double base, int step, const TrainOptions& opts) {
  double lr = base;
  if (opts.warmup > 0 && step < opts.warmup) lr *= static_cast<double>(step + 1) / opts.warmup;
  if (opts.cosine_decay && opts.steps > opts.warmup && step >= opts.warmup) {
    const double t = static_cast<double>(step - opts.warmup) / (opts.steps - opts.warmup);
    lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t)));
  }
  return lr;
}

std::vector<StepRecord> train(LatentVG& model, const std::vector<SceneSample>& data,
                              const TrainOptions& opts) {
  const ModelConfig& cfg = model.config();
  if (data.empty()) throw EmptyEvaluation("no training samples");
  const int batch = std::min<int>(opts.batch, static_cast<int>(data.size()));
  if (cfg.latent_count() > 0 && batch < 2) {
    throw BatchTooSmall("contrastive training needs a batch of at least 2");
  }

  Rng order_rng(derive_seed(opts.seed, 1));
  Rng noise_rng(derive_seed(opts.seed, 2));
  AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  std::ofstream log;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    log.open(*opts.out_dir / "train_log.jsonl");
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<StepRecord> history;
  history.reserve(static_cast<std::size_t>(std::max(0, opts.steps)));
  std::vector<const SceneSample*> picked(static_cast<std::size_t>(batch));
  for (int step = 0; step < opts.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& p : picked) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
      }
      p = &data[order[cursor++]];
    }

    model.parameters().zero_grad();
    StepRecord rec;
    rec.step = step;
    {
      ad::Tape tape;
      BatchLoss loss = model.total_loss(tape, picked, true, noise_rng);
      tape.backward(loss.total);
      rec.report = std::move(loss.report);
    }
    rec.grad_norm = clip_grad_norm(model.parameters(), cfg.grad_clip);
    rec.lr = scheduled_lr(cfg.lr, step, opts);
    opt.set_lr(rec.lr);
    opt.step(model.parameters());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (log.is_open() && (step % std::max(1, opts.log_every) == 0 || step + 1 == opts.steps)) {
      nlohmann::json j{{"step", step},
                       {"total", rec.report.total},
                       {"pos_cont", rec.report.pos_cont},
                       {"bce", rec.report.bce},
                       {"dice", rec.report.dice},
                       {"grad_norm", rec.grad_norm},
                       {"lr", rec.lr},
                       {"seconds", rec.seconds}};
      if (cfg.gres_enabled) j["gres_bce"] = rec.report.gres_bce;
      log << j.dump() << "\n";
      log.flush();
    }
    if (opts.out_dir && opts.checkpoint_every > 0 && (step + 1) % opts.checkpoint_every == 0 &&
        step + 1 < opts.steps) {
      Checkpoint::capture(model, static_cast<std::uint64_t>(step + 1))
          .save(*opts.out_dir / ("checkpoint_" + std::to_string(step + 1) + ".bin"));
    }
    if (opts.on_step) opts.on_step(rec);
    history.push_back(std::move(rec));
  }
  model.parameters().zero_grad();
  if (opts.out_dir) {
    Checkpoint::capture(model, static_cast<std::uint64_t>(opts.steps))
        .save(*opts.out_dir / "checkpoint.bin");
  }
  return history;
}

EvalRecord make_record(const LatentVG& model, const SceneSample& sample,
                       PredictionOutput* prediction) {
  const ModelConfig& cfg = model.config();
  PredictionOutput p = predict(model, sample);
  EvalRecord r;
  r.gt = sample.gt_mask;
  r.no_target = sample.no_target;
  r.gt_box = sample.gt_box;
  r.pred = p.mask;
  r.pred_box = p.box;
  r.empty_decision = p.empty_decision;
  for (const Matrix& m : p.per_expression_maps) {
    r.expression_masks.push_back(
        mask_from_probmap(m, cfg.mask_threshold, sample.image.height, sample.image.width));
  }
  if (prediction != nullptr) *prediction = std::move(p);
  return r;
}

MetricReport evaluate(const LatentVG& model, const std::vector<SceneSample>& data,
                      const MetricOptions& opts) {
  std::vector<EvalRecord> records;
  records.reserve(data.size());
  for (const auto& s : data) records.push_back(make_record(model, s));
  return aggregate(records, opts);
}

}  // namespace lvg
