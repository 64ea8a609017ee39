#pragma once

#include <unordered_map>

#include "lvg/parameters.hpp"

namespace lvg {

/// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  explicit AdamW(Options opts) : opts_(opts) {}

  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  long step_count() const { return t_; }

  /// Applies one update from the accumulated gradients.
  void step(ParameterStore& store);

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  Options opts_;
  long t_ = 0;
  std::unordered_map<const Parameter*, Moments> state_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace lvg
