#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace ncache {

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using VectorXdRef = Eigen::Ref<const Eigen::VectorXd>;

/// Index into a dataset's ordered class-name list.
struct ClassLabel {
  int index = 0;

  friend auto operator<=>(const ClassLabel&, const ClassLabel&) = default;
};

/// Log probability stored for classes the teacher did not rank in its top-5.
inline constexpr double kTeacherFiller = -100.0;

/// Input, schema or invariant violations. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argmax with ties resolved to the lowest index.
template <typename Derived>
ClassLabel argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return ClassLabel{static_cast<int>(best)};
}

/// Numerically stable log-softmax.
template <typename Derived>
VectorXd log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double shift = logits.maxCoeff();
  const double lse = shift + std::log((logits.array() - shift).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename Derived>
VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  return log_softmax(logits).array().exp().matrix();
}

}  // namespace ncache
