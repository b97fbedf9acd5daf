#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>

namespace actguard {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: non-finite actions, mismatched dimensions, malformed files,
/// too few samples for an estimator.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A parameter outside its documented domain (alpha outside (0,1), negative
/// thresholds, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// T x D action trajectory, one row per timestep. Row-major so a row is a
/// contiguous action vector.
template <typename Scalar>
using ActionMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct BasicEpisode {
  std::string episode_id;
  ActionMatrix<Scalar> actions;
  std::optional<bool> success;
  std::optional<std::string> family;
  std::optional<std::string> source;

  Eigen::Index length() const { return actions.rows(); }
  Eigen::Index dims() const { return actions.cols(); }
};

using Episode = BasicEpisode<double>;
using VectorXd = Vector<double>;
using ActionMatrixXd = ActionMatrix<double>;

}  // namespace actguard
