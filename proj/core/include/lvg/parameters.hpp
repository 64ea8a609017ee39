#pragma once

#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lvg/rng.hpp"
#include "lvg/tensor.hpp"

namespace lvg {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // excluded from weight decay when false (norms, biases)

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns every trainable matrix of a model. Addresses are stable for the
/// lifetime of the store; iteration follows registration order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Index rows, Index cols, bool decay = true);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {

void zeros(Matrix& m);
void ones(Matrix& m);
void normal(Matrix& m, Rng& rng, Real stddev);
/// Glorot-uniform for a fan_in x fan_out weight.
void xavier_uniform(Matrix& m, Rng& rng);
/// Semi-orthogonal init: orthonormal rows when rows <= cols, orthonormal
/// columns otherwise.
void orthogonal(Matrix& m, Rng& rng, Real gain = 1.0);

}  // namespace init

}  // namespace lvg
