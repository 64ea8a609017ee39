#include <gtest/gtest.h>

#include "lvg/model.hpp"
#include "support.hpp"

namespace lvg {
namespace {

struct GradCheck {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::vector<std::string> worst;
};

// Compares every parameter entry's analytic gradient with central
// differences. Noise is frozen by reseeding the same stream for each pass.
GradCheck check_gradients(LatentVG& model, std::span<const SceneSample* const> batch) {
  auto loss = [&](bool backward) {
    ad::Tape tape(backward);
    Rng noise(99);
    const BatchLoss b = model.total_loss(tape, batch, true, noise);
    if (backward) {
      model.parameters().zero_grad();
      tape.backward(b.total);
    }
    return b.total.value()(0, 0);
  };
  loss(true);
  GradCheck out;
  for (Parameter& p : model.parameters()) {
    const Matrix analytic = p.grad;
    const Matrix numeric = testing::numeric_grad(p, [&] { return loss(false); });
    for (Index i = 0; i < analytic.size(); ++i) {
      const double a = analytic.data()[i], n = numeric.data()[i];
      // Entries whose true gradient is zero only carry difference noise.
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
      ++out.checked;
      if (rel < 1e-4 || std::abs(a - n) < 1e-8) {
        ++out.passed;
      } else if (out.worst.size() < 20) {
        out.worst.push_back(p.name + "[" + std::to_string(i) + "] a=" + std::to_string(a) +
                            " n=" + std::to_string(n));
      }
    }
  }
  return out;
}

TEST(Model, FullLossGradientMatchesFiniteDifferences) {
  ModelConfig cfg = testing::tiny_config();
  cfg.soft_subject = true;
  LatentVG model(cfg, 3);
  Rng rng(4);
  const SceneSample a = testing::random_sample(cfg, rng, 5, 0);
  const SceneSample b = testing::random_sample(cfg, rng, 5, 1);
  const SceneSample* batch[] = {&a, &b};
  const GradCheck g = check_gradients(model, batch);
  for (const auto& w : g.worst) ADD_FAILURE() << w;
  EXPECT_GE(static_cast<double>(g.passed), 0.95 * static_cast<double>(g.checked));
}

}  // namespace
}  // namespace lvg
