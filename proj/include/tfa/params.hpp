#pragma once

// Uniform view over a model's parameter tensors, used by the optimizer,
// checkpoints, and gradient checks. Models and their gradients share a type,
// so `params()` on both yields views in the same order.

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tfa {

struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool unit_columns = false;  // decoder dictionaries keep unit-norm columns

  Eigen::Map<Eigen::MatrixXd> map() const { return {data, rows, cols}; }
  Eigen::Index size() const { return rows * cols; }
};

inline ParamView view_of(std::string name, Eigen::MatrixXd& m, bool unit_columns = false) {
  return {std::move(name), m.data(), m.rows(), m.cols(), unit_columns};
}

inline ParamView view_of(std::string name, Eigen::VectorXd& v) {
  return {std::move(name), v.data(), v.size(), 1, false};
}

}  // namespace tfa
