#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value in a forward pass is a node on a Tape. Nodes created from
// Parameters accumulate their gradient back into the Parameter when
// Tape::backward runs. A tape built with gradients disabled records values
// only, which is what inference uses.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "lvg/tensor.hpp"

namespace lvg {

struct Parameter;

namespace ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Gradient after Tape::backward; empty when nothing flowed into the node.
  const Matrix& grad() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a trainable parameter. Repeated calls with the same
  /// parameter return the same node.
  Var parameter(Parameter& p);

  /// Records an op result. `backward` is dropped when no input requires grad
  /// or the tape does not record gradients.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient of node `v` (allocating on first touch).
  template <typename Expr>
  void accumulate(const Var& v, const Expr& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    // Gradients never alias the expression feeding them, so products can be
    // written in place instead of through a zeroed temporary.
    if (n.grad.size() == 0) {
      n.grad.noalias() = g;
    } else {
      n.grad.noalias() += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(const Var& root);
  /// Seeds arbitrary output gradients and propagates.
  void backward(std::span<const std::pair<Var, Matrix>> seeds);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void propagate();

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool record_;
};

// ---------------------------------------------------------------------------
// Ops. All shapes are checked; violations throw ShapeMismatch.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var hadamard(const Var& a, const Var& b);
/// Elementwise quotient.
Var divide(const Var& a, const Var& b);
Var scale(const Var& a, Real c);
Var add_scalar(const Var& a, Real c);
/// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (r x c) * col (r x 1) broadcast over columns.
Var mul_col(const Var& a, const Var& col);

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var sigmoid(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// min(a, c) elementwise; zero gradient where a > c.
Var clamp_max(const Var& a, Real c);

Var softmax_rows(const Var& a);
Var softmax_cols(const Var& a);
/// Row-wise log-sum-exp, r x c -> r x 1.
Var logsumexp_rows(const Var& a);
/// Each row divided by its Euclidean norm (plus eps).
Var normalize_rows(const Var& a, Real eps = 1e-12);
/// Pre-norm style layer normalization with learned gain/bias rows (1 x c).
Var layer_norm(const Var& a, const Var& gain, const Var& bias, Real eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column sums, r x c -> 1 x c.
Var sum_rows(const Var& a);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, std::span<const Index> rows);
/// Copy of `a` with row `r` replaced by `row` (1 x c). Gradient of the
/// replaced row flows to `row` only.
Var replace_row(const Var& a, Index r, const Var& row);
/// Multiplies row i by mask[i] (a fixed 0/1 or real weight per row).
Var scale_rows(const Var& a, std::span<const Real> mask);
/// Elementwise product with a constant matrix of the same shape.
Var mask_elements(const Var& a, const Matrix& mask);

/// Forward value of `hard`, gradient routed to `soft` (straight-through).
Var straight_through(const Matrix& hard, const Var& soft);

/// Mean binary cross-entropy between probabilities `p` and fixed targets.
Var bce_mean(const Var& p, const Matrix& target, Real eps = 1e-7);
/// Mean binary cross-entropy on a logit (numerically stable).
Var bce_with_logits(const Var& logits, const Matrix& target);

/// Rearranges a (gh*gw) x (4*c) map whose columns hold the 2x2 sub-pixel
/// block [(0,0),(0,1),(1,0),(1,1)] into a (2gh*2gw) x c raster grid.
Var pixel_shuffle2(const Var& a, Index grid_h, Index grid_w);

/// Multi-head scaled dot-product attention.
struct AttentionResult {
  Var output;
  /// Per-head T_q x T_k attention probabilities.
  std::shared_ptr<std::vector<Matrix>> probs;
};

/// `key_mask[j] == false` excludes key j from every query. Empty mask means
/// all keys are visible.
AttentionResult attention(const Var& q, const Var& k, const Var& v, int heads,
                          std::span<const bool> key_mask = {});

}  // namespace ad
}  // namespace lvg
