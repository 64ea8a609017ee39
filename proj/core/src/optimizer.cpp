#include "lvg/optimizer.hpp"

#include <cmath>

namespace lvg {

void AdamW::step(ParameterStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (Parameter& p : store) {
    if (p.grad.size() == 0) continue;
    auto [it, fresh] = state_.try_emplace(&p);
    Moments& s = it->second;
    if (fresh) {
      s.m = Matrix::Zero(p.value.rows(), p.value.cols());
      s.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    if (p.decay && opts_.weight_decay > 0) p.value *= 1.0 - opts_.lr * opts_.weight_decay;
    s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * p.grad;
    s.v = opts_.beta2 * s.v + (1.0 - opts_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= opts_.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + opts_.eps);
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0;
  for (const Parameter& p : store) {
    if (p.grad.size() != 0) sq += p.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Parameter& p : store) {
      if (p.grad.size() != 0) p.grad *= s;
    }
  }
  return norm;
}

}  // namespace lvg
