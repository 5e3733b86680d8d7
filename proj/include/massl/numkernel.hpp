#pragma once

#include "massl/types.hpp"

namespace massl {

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kNearZeroNorm = 1e-12;

/// A vector with ‖v‖₂ = 1 ± 1e-6 and finite entries. Construction validates.
class UnitVec {
 public:
  explicit UnitVec(Vec data);

  const Vec& data() const noexcept { return data_; }
  Eigen::Index dim() const noexcept { return data_.size(); }
  double operator[](Eigen::Index i) const { return data_[i]; }

 private:
  Vec data_;
};

/// A probability vector: entries in [0, 1], summing to 1 ± 1e-9.
class Dist {
 public:
  explicit Dist(Vec probs);

  const Vec& probs() const noexcept { return probs_; }
  Eigen::Index size() const noexcept { return probs_.size(); }
  double operator[](Eigen::Index i) const { return probs_[i]; }

 private:
  Vec probs_;
};

bool all_finite(const Vec& v);

UnitVec l2_normalize(const Vec& v);

/// Dot products of z against each row of `block`; rows are assumed unit-norm so
/// this equals cosine similarity.
Vec cosine_scores(const UnitVec& z, const Mat& block);

Dist tempered_softmax(const Vec& logits, double tau);

/// log softmax(logits / tau), evaluated as logits/tau - c - log Σ exp(logits/tau - c).
Vec tempered_log_softmax(const Vec& logits, double tau);

double cross_entropy(const Dist& target, const Vec& pred_log);

double entropy(const Dist& p);

/// ∂/∂logits of cross_entropy(target, tempered_log_softmax(logits, tau)).
Vec ce_softmax_grad(const Vec& logits, const Dist& target, double tau);

// Row-wise batched forms used by the loss engine. Each row is an independent
// distribution; `tau` scales every row.
Mat rowwise_log_softmax(const Mat& logits, double tau);
Mat rowwise_softmax(const Mat& logits, double tau);

}  // namespace massl

namespace massl {

/// Softmax over consecutive column segments of width `segment` in each row,
/// after dividing by `tau`. Writes log-probabilities to `log_probs` and, when
/// non-null, probabilities to `probs`. `logits.cols()` must be a multiple of
/// `segment`.
void segmented_softmax(const Mat& logits, Eigen::Index segment, double tau, Mat& log_probs,
                       Mat* probs);

}  // namespace massl

namespace massl {

/// Standard normal CDF Φ(x) = erfc(-x/√2)/2, elementwise over n values.
void normal_cdf(const double* x, double* out, std::size_t n);
double normal_cdf(double x);

}  // namespace massl
