#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lvg {

using Real = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using ColVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class VocabOverflow : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class EmptyNegatives : public Error {
 public:
  using Error::Error;
};
class BatchTooSmall : public Error {
 public:
  using Error::Error;
};
class DisabledFeature : public Error {
 public:
  using Error::Error;
};
class EmptyEvaluation : public Error {
 public:
  using Error::Error;
};
class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace lvg
