#include "lvg/parameters.hpp"

#include <cmath>

namespace lvg {

Parameter& ParameterStore::add(const std::string& name, Index rows, Index cols, bool decay) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  params_.push_back(Parameter{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), decay});
  index_.emplace(name, params_.size() - 1);
  return params_.back();
}

Parameter& ParameterStore::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace init {

void zeros(Matrix& m) { m.setZero(); }
void ones(Matrix& m) { m.setOnes(); }

void normal(Matrix& m, Rng& rng, Real stddev) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
}

void xavier_uniform(Matrix& m, Rng& rng) {
  const Real bound = std::sqrt(6.0 / static_cast<Real>(m.rows() + m.cols()));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

void orthogonal(Matrix& m, Rng& rng, Real gain) {
  const Index r = m.rows();
  const Index c = m.cols();
  const bool wide = r <= c;
  // Orthonormalize the columns of a tall Gaussian draw, sign-fixed by R's
  // diagonal so the result is Haar-distributed.
  Matrix g(wide ? c : r, wide ? r : c);
  normal(g, rng, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
  const Matrix rr = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < q.cols(); ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  m = (wide ? Matrix(q.transpose()) : q) * gain;
}

}  // namespace init

}  // namespace lvg
