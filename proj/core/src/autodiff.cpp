#include "lvg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lvg/parameters.hpp"

namespace lvg::ad {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeMismatch(std::string(op) + ": " + detail);
}

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, record_ ? &p : nullptr, record_});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& v : inputs) needs = needs || requires_grad(v.id());
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward", "root must be 1x1");
  std::pair<Var, Matrix> seed{root, Matrix::Ones(1, 1)};
  backward(std::span<const std::pair<Var, Matrix>>(&seed, 1));
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  for (const auto& [v, g] : seeds) {
    require(g.rows() == v.rows() && g.cols() == v.cols(), "backward", "seed shape");
    accumulate(v, g);
  }
  propagate();
}

void Tape::propagate() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      // Closures may touch nodes_ through accumulate but never append.
      n.backward(*this, n.grad);
    } else if (n.param != nullptr) {
      if (n.param->grad.size() == 0) {
        n.param->grad = n.grad;
      } else {
        n.param->grad += n.grad;
      }
    }
  }
}

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.accumulate(a, g.cwiseProduct(b.value()));
                            t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var divide(const Var& a, const Var& b) {
  require_same(a, b, "divide");
  return a.tape()->record(a.value().cwiseQuotient(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            const Matrix gb = g.cwiseQuotient(b.value());
                            t.accumulate(a, gb);
                            t.accumulate(b, -gb.cwiseProduct(a.value()).cwiseQuotient(b.value()));
                          });
}

Var scale(const Var& a, Real c) {
  return a.tape()->record(a.value() * c, {a},
                          [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

Var add_scalar(const Var& a, Real c) {
  return a.tape()->record(a.value().array() + c, {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row",
          shape_str(a.rows(), a.cols()) + " + " + shape_str(row.rows(), row.cols()));
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col",
          shape_str(a.rows(), a.cols()) + " * " + shape_str(col.rows(), col.cols()));
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape()->record(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g) {
    Matrix ga = g.array().colwise() * col.value().col(0).array();
    t.accumulate(a, ga);
    t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul",
          shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()));
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt",
          shape_str(a.rows(), a.cols()) + " * T(" + shape_str(b.rows(), b.cols()) + ")");
  Matrix out = a.value() * b.value().transpose();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value());
    if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
  });
}

Var transpose(const Var& a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](Real x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  auto saved = std::make_shared<Matrix>(out);
  return a.tape()->record(std::move(out), {a}, [a, saved](Tape& t, const Matrix& g) {
    const Matrix& y = *saved;
    t.accumulate(a, g.cwiseProduct(y).cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var relu(const Var& a) {
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var gelu(const Var& a) {
  constexpr Real inv_sqrt2 = 0.70710678118654752440;
  Matrix out = a.value().unaryExpr(
      [](Real x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Real inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    Matrix d = a.value().unaryExpr([inv_sqrt_2pi](Real x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  auto saved = std::make_shared<Matrix>(out);
  return a.tape()->record(std::move(out), {a}, [a, saved](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(*saved));
  });
}

Var log(const Var& a) {
  return a.tape()->record(a.value().array().log(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var clamp_max(const Var& a, Real c) {
  return a.tape()->record(a.value().cwiseMin(c), {a}, [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() < c).select(g, 0.0));
  });
}

namespace {

Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Real mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& g) {
  const ColVector dots = g.cwiseProduct(y).rowwise().sum();
  Matrix out = g;
  out.colwise() -= dots;
  return out.cwiseProduct(y);
}

}  // namespace

Var softmax_rows(const Var& a) {
  Matrix y = softmax_rows_value(a.value());
  auto saved = std::make_shared<Matrix>(y);
  return a.tape()->record(std::move(y), {a}, [a, saved](Tape& t, const Matrix& g) {
    t.accumulate(a, softmax_rows_backward(*saved, g));
  });
}

Var softmax_cols(const Var& a) {
  Matrix yt = softmax_rows_value(a.value().transpose());
  Matrix y = yt.transpose();
  auto saved = std::make_shared<Matrix>(std::move(yt));
  return a.tape()->record(std::move(y), {a}, [a, saved](Tape& t, const Matrix& g) {
    Matrix gt = g.transpose();
    t.accumulate(a, softmax_rows_backward(*saved, gt).transpose());
  });
}

Var logsumexp_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const Real mx = x.row(r).maxCoeff();
    out(r, 0) = mx + std::log((x.row(r).array() - mx).exp().sum());
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix p = softmax_rows_value(a.value());
    p.array().colwise() *= g.col(0).array();
    t.accumulate(a, p);
  });
}

Var normalize_rows(const Var& a, Real eps) {
  const Matrix& x = a.value();
  ColVector norms = x.rowwise().norm().array() + eps;
  Matrix y = x.array().colwise() / norms.array();
  auto saved = std::make_shared<std::pair<Matrix, ColVector>>(y, norms);
  return a.tape()->record(std::move(y), {a}, [a, saved](Tape& t, const Matrix& g) {
    const auto& [yv, n] = *saved;
    const ColVector dots = g.cwiseProduct(yv).rowwise().sum();
    Matrix dx = g - (yv.array().colwise() * dots.array()).matrix();
    dx.array().colwise() /= n.array();
    t.accumulate(a, dx);
  });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, Real eps) {
  const Matrix& x = a.value();
  const Index c = x.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
          "layer_norm", "gain/bias must be 1x" + std::to_string(c));
  const ColVector mu = x.rowwise().mean();
  Matrix xhat = x.colwise() - mu;
  const ColVector inv_std =
      ((xhat.array().square().rowwise().sum() / static_cast<Real>(c)) + eps).rsqrt();
  xhat.array().colwise() *= inv_std.array();
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  auto saved = std::make_shared<std::pair<Matrix, ColVector>>(std::move(xhat), inv_std);
  return a.tape()->record(
      std::move(y), {a, gain, bias}, [a, gain, bias, saved, c](Tape& t, const Matrix& g) {
        const auto& [xh, istd] = *saved;
        if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(xh).colwise().sum());
        if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
        if (!a.requires_grad()) return;
        Matrix dxh = g.array().rowwise() * gain.value().row(0).array();
        const ColVector m1 = dxh.rowwise().mean();
        const ColVector m2 = dxh.cwiseProduct(xh).rowwise().sum() / static_cast<Real>(c);
        Matrix dx = dxh.colwise() - m1;
        dx -= (xh.array().colwise() * m2.array()).matrix();
        dx.array().colwise() *= istd.array();
        t.accumulate(a, dx);
      });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const Real n = static_cast<Real>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape()->record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var sum_rows(const Var& a) {
  return a.tape()->record(a.value().colwise().sum(), {a}, [a](Tape& t, const Matrix& g) {
    Matrix out(a.rows(), a.cols());
    out.rowwise() = g.row(0);
    t.accumulate(a, out);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const Index c = parts.front().cols();
  Index total = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows", "column mismatch");
    total += p.rows();
  }
  Matrix out(total, c);
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts,
                                      [inputs](Tape& t, const Matrix& g) {
                                        Index o = 0;
                                        for (const Var& p : inputs) {
                                          if (p.requires_grad()) t.accumulate(p, g.middleRows(o, p.rows()));
                                          o += p.rows();
                                        }
                                      });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Index r = parts.front().rows();
  Index total = 0;
  for (const Var& p : parts) {
    require(p.rows() == r, "concat_cols", "row mismatch");
    total += p.cols();
  }
  Matrix out(r, total);
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts,
                                      [inputs](Tape& t, const Matrix& g) {
                                        Index o = 0;
                                        for (const Var& p : inputs) {
                                          if (p.requires_grad()) t.accumulate(p, g.middleCols(o, p.cols()));
                                          o += p.cols();
                                        }
                                      });
}

Var slice_rows(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows",
          "range [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
              std::to_string(a.rows()));
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [a, start, count](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.middleRows(start, count) = g;
                            t.accumulate(a, full);
                          });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", "range");
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.middleCols(start, count) = g;
                            t.accumulate(a, full);
                          });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {a}, [a, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, full);
  });
}

Var replace_row(const Var& a, Index r, const Var& row) {
  require(r >= 0 && r < a.rows() && row.rows() == 1 && row.cols() == a.cols(), "replace_row",
          "row " + std::to_string(r) + " of " + shape_str(a.rows(), a.cols()));
  Matrix out = a.value();
  out.row(r) = row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, r, row](Tape& t, const Matrix& g) {
    if (a.requires_grad()) {
      Matrix ga = g;
      ga.row(r).setZero();
      t.accumulate(a, ga);
    }
    t.accumulate(row, g.row(r));
  });
}

Var scale_rows(const Var& a, std::span<const Real> mask) {
  require(static_cast<Index>(mask.size()) == a.rows(), "scale_rows", "mask length");
  Eigen::Map<const ColVector> m(mask.data(), static_cast<Index>(mask.size()));
  Matrix out = a.value().array().colwise() * m.array();
  ColVector saved = m;
  return a.tape()->record(std::move(out), {a}, [a, saved](Tape& t, const Matrix& g) {
    Matrix ga = g.array().colwise() * saved.array();
    t.accumulate(a, ga);
  });
}

Var mask_elements(const Var& a, const Matrix& mask) {
  require(mask.rows() == a.rows() && mask.cols() == a.cols(), "mask_elements", "mask shape");
  return a.tape()->record(a.value().cwiseProduct(mask), {a},
                          [a, mask](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(mask)); });
}

Var straight_through(const Matrix& hard, const Var& soft) {
  require(hard.rows() == soft.rows() && hard.cols() == soft.cols(), "straight_through",
          "shape");
  return soft.tape()->record(hard, {soft},
                             [soft](Tape& t, const Matrix& g) { t.accumulate(soft, g); });
}

Var bce_mean(const Var& p, const Matrix& target, Real eps) {
  require(target.rows() == p.rows() && target.cols() == p.cols(), "bce_mean", "target shape");
  const Matrix pc = p.value().cwiseMax(eps).cwiseMin(1.0 - eps);
  const Real n = static_cast<Real>(pc.size());
  Matrix out(1, 1);
  out(0, 0) = -(target.array() * pc.array().log() +
                (1.0 - target.array()) * (1.0 - pc.array()).log())
                   .sum() /
              n;
  return p.tape()->record(std::move(out), {p}, [p, target, pc, n, eps](Tape& t, const Matrix& g) {
    // Clamped entries are constant in p.
    const auto inside = (p.value().array() >= eps && p.value().array() <= 1.0 - eps);
    Matrix d = inside.select((pc - target).array() / (pc.array() * (1.0 - pc.array())), 0.0);
    t.accumulate(p, d * (g(0, 0) / n));
  });
}

Var bce_with_logits(const Var& logits, const Matrix& target) {
  require(target.rows() == logits.rows() && target.cols() == logits.cols(), "bce_with_logits",
          "target shape");
  const Matrix& x = logits.value();
  const Real n = static_cast<Real>(x.size());
  Real total = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const Real z = x.data()[i];
    total += std::max(z, 0.0) - z * target.data()[i] + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape()->record(std::move(out), {logits},
                               [logits, target, n](Tape& t, const Matrix& g) {
                                 Matrix s = logits.value().unaryExpr([](Real z) {
                                   return z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                                 : std::exp(z) / (1.0 + std::exp(z));
                                 });
                                 t.accumulate(logits, (s - target) * (g(0, 0) / n));
                               });
}

Var pixel_shuffle2(const Var& a, Index grid_h, Index grid_w) {
  require(a.rows() == grid_h * grid_w && a.cols() % 4 == 0, "pixel_shuffle2",
          shape_str(a.rows(), a.cols()) + " for grid " + shape_str(grid_h, grid_w));
  const Index c = a.cols() / 4;
  const Index out_w = 2 * grid_w;
  Matrix out(4 * grid_h * grid_w, c);
  for (Index r = 0; r < grid_h; ++r) {
    for (Index col = 0; col < grid_w; ++col) {
      const Index src = r * grid_w + col;
      for (Index q = 0; q < 4; ++q) {
        const Index dst = (2 * r + q / 2) * out_w + (2 * col + q % 2);
        out.row(dst) = a.value().row(src).segment(q * c, c);
      }
    }
  }
  return a.tape()->record(std::move(out), {a}, [a, grid_h, grid_w, c, out_w](Tape& t, const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (Index r = 0; r < grid_h; ++r) {
      for (Index col = 0; col < grid_w; ++col) {
        const Index src = r * grid_w + col;
        for (Index q = 0; q < 4; ++q) {
          const Index dst = (2 * r + q / 2) * out_w + (2 * col + q % 2);
          ga.row(src).segment(q * c, c) = g.row(dst);
        }
      }
    }
    t.accumulate(a, ga);
  });
}

AttentionResult attention(const Var& q, const Var& k, const Var& v, int heads,
                          std::span<const bool> key_mask) {
  require(q.cols() == k.cols() && k.rows() == v.rows() && v.cols() == q.cols(), "attention",
          "q " + shape_str(q.rows(), q.cols()) + " k " + shape_str(k.rows(), k.cols()) + " v " +
              shape_str(v.rows(), v.cols()));
  require(heads >= 1 && q.cols() % heads == 0, "attention", "channels not divisible by heads");
  require(key_mask.empty() || static_cast<Index>(key_mask.size()) == k.rows(), "attention",
          "key mask length");
  const Index dh = q.cols() / heads;
  const Index tq = q.rows();
  const Index tk = k.rows();
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(static_cast<std::size_t>(heads));
  Matrix out(tq, q.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix s = (q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose()) *
               inv_sqrt;
    if (!key_mask.empty()) {
      for (Index j = 0; j < tk; ++j) {
        if (!key_mask[static_cast<std::size_t>(j)]) {
          s.col(j).setConstant(-std::numeric_limits<Real>::infinity());
        }
      }
    }
    Matrix p = softmax_rows_value(s);
    out.middleCols(h * dh, dh) = p * v.value().middleCols(h * dh, dh);
    probs->push_back(std::move(p));
  }
  Var res = q.tape()->record(
      std::move(out), {q, k, v}, [q, k, v, probs, heads, dh, inv_sqrt](Tape& t, const Matrix& g) {
        Matrix gq = Matrix::Zero(q.rows(), q.cols());
        Matrix gk = Matrix::Zero(k.rows(), k.cols());
        Matrix gv = Matrix::Zero(v.rows(), v.cols());
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = (*probs)[static_cast<std::size_t>(h)];
          const auto gh = g.middleCols(h * dh, dh);
          gv.middleCols(h * dh, dh).noalias() = p.transpose() * gh;
          Matrix dp = gh * v.value().middleCols(h * dh, dh).transpose();
          Matrix ds = softmax_rows_backward(p, dp) * inv_sqrt;
          gq.middleCols(h * dh, dh).noalias() = ds * k.value().middleCols(h * dh, dh);
          gk.middleCols(h * dh, dh).noalias() = ds.transpose() * q.value().middleCols(h * dh, dh);
        }
        t.accumulate(q, gq);
        t.accumulate(k, gk);
        t.accumulate(v, gv);
      });
  return {res, probs};
}

}  // namespace lvg::ad
