#pragma once

#include <Eigen/Dense>

namespace fedpc {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& z) {
  return z.cwiseMax(typename Derived::Scalar(0));
}

// Column-wise softmax with max-shift for stability. Each column of the
// result is a probability distribution.
inline Matrix softmax_columns(const Eigen::Ref<const Matrix>& logits) {
  Matrix shifted =
      logits.rowwise() - logits.colwise().maxCoeff();
  Matrix e = shifted.array().exp().matrix();
  return e.array().rowwise() / e.colwise().sum().array();
}

}  // namespace fedpc
