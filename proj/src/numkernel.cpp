#include "massl/numkernel.hpp"

#include <cmath>
#include <string>

#if defined(MASSL_HAVE_LIBMVEC) && defined(__AVX2__)
#include <immintrin.h>
extern "C" __m256d _ZGVdN4v_erfc(__m256d);
#endif

#include "massl/errors.hpp"

namespace massl {

namespace {

void require_positive_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    fail(ErrorKind::NonPositiveTemperature, "temperature must be > 0, got " + std::to_string(tau));
  }
}

}  // namespace

bool all_finite(const Vec& v) { return v.allFinite(); }

UnitVec::UnitVec(Vec data) : data_(std::move(data)) {
  if (data_.size() < 1 || !data_.allFinite()) {
    fail(ErrorKind::NotUnitNorm, "unit vector must be nonempty and finite");
  }
  const double n = data_.norm();
  if (std::abs(n - 1.0) > kUnitNormTolerance) {
    fail(ErrorKind::NotUnitNorm, "norm " + std::to_string(n) + " is not 1");
  }
}

Dist::Dist(Vec probs) : probs_(std::move(probs)) {
  if (probs_.size() < 1 || !probs_.allFinite()) {
    fail(ErrorKind::InvalidShape, "distribution must be nonempty and finite");
  }
  if ((probs_.array() < 0.0).any() || (probs_.array() > 1.0).any() ||
      std::abs(probs_.sum() - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidShape, "entries must lie in [0,1] and sum to 1");
  }
}

UnitVec l2_normalize(const Vec& v) {
  const double n = v.norm();
  if (!(n > kNearZeroNorm)) {
    fail(ErrorKind::NearZeroNorm, "cannot normalize vector with norm " + std::to_string(n));
  }
  return UnitVec(v / n);
}

Vec cosine_scores(const UnitVec& z, const Mat& block) {
  if (block.cols() != z.dim()) {
    fail(ErrorKind::DimMismatch, "block has " + std::to_string(block.cols()) +
                                     " columns, vector has dim " + std::to_string(z.dim()));
  }
  return block * z.data();
}

Vec tempered_log_softmax(const Vec& logits, double tau) {
  require_positive_tau(tau);
  if (logits.size() == 0) fail(ErrorKind::InvalidShape, "empty logits");
  const Eigen::ArrayXd scaled = logits.array() / tau;
  const double c = scaled.maxCoeff();
  const double lse = std::log((scaled - c).exp().sum());
  return (scaled - c - lse).matrix();
}

Dist tempered_softmax(const Vec& logits, double tau) {
  Vec p = tempered_log_softmax(logits, tau).array().exp().matrix();
  // exp(log p) can drift the sum by a few ulps.
  p /= p.sum();
  return Dist(std::move(p));
}

double cross_entropy(const Dist& target, const Vec& pred_log) {
  if (pred_log.size() != target.size()) {
    fail(ErrorKind::DimMismatch, "target and prediction sizes differ");
  }
  double h = 0.0;
  for (Eigen::Index k = 0; k < target.size(); ++k) {
    if (target[k] > 0.0) h -= target[k] * pred_log[k];
  }
  return h;
}

double entropy(const Dist& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  }
  return h;
}

Vec ce_softmax_grad(const Vec& logits, const Dist& target, double tau) {
  require_positive_tau(tau);
  if (logits.size() != target.size()) {
    fail(ErrorKind::DimMismatch, "logits and target sizes differ");
  }
  const Vec p = tempered_log_softmax(logits, tau).array().exp().matrix();
  return (p - target.probs()) / tau;
}

Mat rowwise_log_softmax(const Mat& logits, double tau) {
  require_positive_tau(tau);
  Mat out = logits / tau;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r).array();
    const double c = row.maxCoeff();
    row -= c;
    row -= std::log(row.exp().sum());
  }
  return out;
}

Mat rowwise_softmax(const Mat& logits, double tau) {
  Mat out = rowwise_log_softmax(logits, tau).array().exp().matrix();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) /= out.row(r).sum();
  return out;
}

}  // namespace massl

namespace massl {

void segmented_softmax(const Mat& logits, Eigen::Index segment, double tau, Mat& log_probs,
                       Mat* probs) {
  require_positive_tau(tau);
  if (segment < 1 || logits.cols() % segment != 0) {
    fail(ErrorKind::InvalidShape, "segment width must divide the number of columns");
  }
  log_probs.resize(logits.rows(), logits.cols());
  if (probs) probs->resize(logits.rows(), logits.cols());
  const double inv_tau = 1.0 / tau;
  Eigen::ArrayXd e(segment);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index s0 = 0; s0 < logits.cols(); s0 += segment) {
      auto in = logits.row(r).segment(s0, segment).array();
      auto out = log_probs.row(r).segment(s0, segment).array();
      const double c = in.maxCoeff() * inv_tau;
      out = in * inv_tau - c;
      e = out.exp();
      const double total = e.sum();
      out -= std::log(total);
      if (probs) probs->row(r).segment(s0, segment).array() = e / total;
    }
  }
}

}  // namespace massl

namespace massl {

void normal_cdf(const double* x, double* out, std::size_t n) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
#if defined(MASSL_HAVE_LIBMVEC) && defined(__AVX2__)
  // Tail goes through the same vector routine so results never depend on position.
  const __m256d scale = _mm256_set1_pd(-kInvSqrt2);
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_mul_pd(_mm256_loadu_pd(x + i), scale);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_ZGVdN4v_erfc(v), half));
  }
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = i; k < n; ++k) buf[k - i] = x[k];
    __m256d v = _mm256_mul_pd(_mm256_load_pd(buf), scale);
    _mm256_store_pd(buf, _mm256_mul_pd(_ZGVdN4v_erfc(v), half));
    for (std::size_t k = i; k < n; ++k) out[k] = buf[k - i];
  }
#else
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * std::erfc(-x[i] * kInvSqrt2);
#endif
}

double normal_cdf(double x) {
  double out = 0.0;
  normal_cdf(&x, &out, 1);
  return out;
}

}  // namespace massl
