#pragma once

// Instance selection criteria. Each takes a log-probability vector (student
// output or recorded teacher distribution) and returns a scalar score.

#include "ncache/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <limits>
#include <span>

namespace ncache {

/// Difference between the top-two log probabilities. Lower means more
/// uncertain. Invariant under a common shift, so teacher distributions with
/// -100 fillers need no renormalization.
template <typename Derived>
double margin(const Eigen::DenseBase<Derived>& logprobs) {
  if (logprobs.size() < 2) throw std::invalid_argument("margin: need at least two classes");
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (Eigen::Index i = 0; i < logprobs.size(); ++i) {
    const double v = logprobs(i);
    if (!std::isfinite(v)) throw std::invalid_argument("margin: non-finite log probability");
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

/// Shannon entropy (nats) of softmax(logprobs). Higher means more uncertain.
template <typename Derived>
double entropy(const Eigen::MatrixBase<Derived>& logprobs) {
  if (!logprobs.allFinite()) throw std::invalid_argument("entropy: non-finite log probability");
  const VectorXd logp = log_softmax(logprobs);
  double h = 0.0;
  for (Eigen::Index i = 0; i < logp.size(); ++i) {
    const double p = std::exp(logp(i));
    if (p > 0.0) h -= p * logp(i);
  }
  return h;
}

/// Fraction of committee members whose label differs from the current
/// student's. An empty committee carries no signal and scores 0.
inline double qbc_disagreement(ClassLabel current, std::span<const ClassLabel> committee) {
  if (committee.empty()) return 0.0;
  std::size_t differ = 0;
  for (const auto& member : committee) differ += member != current ? 1 : 0;
  return static_cast<double>(differ) / static_cast<double>(committee.size());
}

/// Append-only store of unit-normalized embeddings of teacher-annotated inputs.
class CoresetStore {
 public:
  CoresetStore() = default;
  explicit CoresetStore(Eigen::Index dim) : data_(dim, 0) {}

  Eigen::Index dim() const { return data_.rows(); }
  Eigen::Index size() const { return size_; }
  bool empty() const { return size_ == 0; }

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& embedding) {
    const double norm = embedding.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("coreset: zero-norm embedding");
    if (data_.rows() == 0) data_.resize(embedding.size(), 0);
    if (embedding.size() != data_.rows()) throw std::invalid_argument("coreset: dimension mismatch");
    if (size_ == data_.cols()) data_.conservativeResize(Eigen::NoChange, std::max<Eigen::Index>(16, 2 * size_));
    data_.col(size_++) = embedding / norm;
  }

  /// Unit vectors, one per column.
  auto vectors() const { return data_.leftCols(size_); }

 private:
  MatrixXd data_;
  Eigen::Index size_ = 0;
};

/// Maximum cosine similarity of `embedding` against the store; -inf when the
/// store is empty so that any threshold selects.
template <typename Derived>
double coreset_max_similarity(const Eigen::MatrixBase<Derived>& embedding, const CoresetStore& store) {
  const double norm = embedding.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("coreset: zero-norm embedding");
  if (store.empty()) return -std::numeric_limits<double>::infinity();
  if (embedding.size() != store.dim()) throw std::invalid_argument("coreset: dimension mismatch");
  const double best = (store.vectors().transpose() * embedding).maxCoeff() / norm;
  return std::clamp(best, -1.0, 1.0);
}

}  // namespace ncache
