#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "massl/errors.hpp"
#include "massl/numkernel.hpp"
#include "massl/rng.hpp"

using namespace massl;

namespace {

// 80-bit reference softmax straight from the definition.
std::vector<long double> softmax_ld(const std::vector<long double>& logits, long double tau) {
  long double c = logits[0] / tau;
  for (auto v : logits) c = std::max(c, v / tau);
  long double total = 0.0L;
  std::vector<long double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / tau - c);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

Vec random_vec(Rng& rng, Eigen::Index n, double lo, double hi) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

Dist random_dist(Rng& rng, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(rng, 0.0, 1.0) + 1e-3;
  return Dist(v / v.sum());
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

}  // namespace

TEST_CASE("l2_normalize gives unit vectors and rejects zero") {
  Vec v(3);
  v << 3.0, 0.0, 4.0;
  auto u = l2_normalize(v);
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[2] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(kind_of([] { l2_normalize(Vec::Zero(4)); }) == ErrorKind::NearZeroNorm);
  Vec tiny = Vec::Constant(4, 1e-14);
  CHECK(kind_of([&] { l2_normalize(tiny); }) == ErrorKind::NearZeroNorm);
}

TEST_CASE("UnitVec validates the norm") {
  Vec v(2);
  v << 1.0, 1.0;
  CHECK(kind_of([&] { UnitVec u(v); }) == ErrorKind::NotUnitNorm);
  v << 0.6, 0.8;
  CHECK_NOTHROW(UnitVec{v});
}

TEST_CASE("cosine_scores") {
  Vec a(3);
  a << 1.0, 0.0, 0.0;
  Mat block(3, 3);
  block << 1, 0, 0, 0, 1, 0, -1, 0, 0;
  Vec s = cosine_scores(UnitVec(a), block);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 0.0);
  CHECK(s[2] == -1.0);
  Mat wrong(2, 4);
  CHECK(kind_of([&] { cosine_scores(UnitVec(a), wrong); }) == ErrorKind::DimMismatch);
}

TEST_CASE("cosine_scores stays in [-1, 1] on unit inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(uniform_index(rng, 63));
    UnitVec z = l2_normalize(random_vec(rng, d, -1, 1));
    Mat block(16, d);
    for (int r = 0; r < 16; ++r) block.row(r) = l2_normalize(random_vec(rng, d, -5, 5)).data().transpose();
    Vec s = cosine_scores(z, block);
    CHECK(s.maxCoeff() <= 1.0 + 1e-9);
    CHECK(s.minCoeff() >= -1.0 - 1e-9);
  }
}

TEST_CASE("tempered_softmax examples") {
  SUBCASE("equal logits are uniform") {
    for (double tau : {0.04, 0.1, 1.0, 7.0}) {
      Dist p = tempered_softmax(Vec::Constant(5, 0.3), tau);
      for (Eigen::Index i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(0.2).epsilon(1e-15));
    }
  }
  SUBCASE("(0, ln 3) at tau 1") {
    Vec l(2);
    l << 0.0, std::log(3.0);
    Dist p = tempered_softmax(l, 1.0);
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("(0.2, -0.1, 0.5) at tau 0.1 against long double") {
    Vec l(3);
    l << 0.2, -0.1, 0.5;
    Dist p = tempered_softmax(l, 0.1);
    auto ref = softmax_ld({0.2L, -0.1L, 0.5L}, 0.1L);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - static_cast<double>(ref[i])) <= 1e-15);
  }
  SUBCASE("non-positive temperature") {
    CHECK(kind_of([] { tempered_softmax(Vec::Zero(3), 0.0); }) == ErrorKind::NonPositiveTemperature);
    CHECK(kind_of([] { tempered_softmax(Vec::Zero(3), -1.0); }) == ErrorKind::NonPositiveTemperature);
  }
  SUBCASE("no overflow at small tau") {
    Vec l(3);
    l << 1.0, -1.0, 0.99;
    Dist p = tempered_softmax(l, 1e-4);
    CHECK(all_finite(p.probs()));
  }
}

TEST_CASE("tempered_softmax sums to one and ignores shifts") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(uniform_index(rng, 64));
    Vec l = random_vec(rng, n, -1, 1);
    const double tau = uniform(rng, 0.02, 2.0);
    Dist p = tempered_softmax(l, tau);
    CHECK(std::abs(p.probs().sum() - 1.0) <= 1e-12);
    const double shift = uniform(rng, -50, 50);
    Dist q = tempered_softmax((l.array() + shift).matrix(), tau);
    Eigen::Index a = 0, b = 0;
    p.probs().maxCoeff(&a);
    q.probs().maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("tempered_log_softmax matches 80-bit log of the reference") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(uniform_index(rng, 30));
    Vec l = random_vec(rng, n, -1, 1);
    const double tau = uniform(rng, 0.04, 1.0);
    std::vector<long double> ll(l.data(), l.data() + n);
    auto ref = softmax_ld(ll, tau);
    Vec lp = tempered_log_softmax(l, tau);
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(std::abs(lp[i] - static_cast<double>(std::log(ref[i]))) <= 1e-12 * std::max(1.0, std::abs(lp[i])));
    }
  }
}

TEST_CASE("cross_entropy examples") {
  const int n = 7;
  Dist u(Vec::Constant(n, 1.0 / n));
  Vec ulog = Vec::Constant(n, -std::log(static_cast<double>(n)));
  CHECK(cross_entropy(u, ulog) == doctest::Approx(std::log(7.0)).epsilon(1e-14));

  Vec onehot = Vec::Zero(n);
  onehot[3] = 1.0;
  Rng rng(1);
  Vec lp = tempered_log_softmax(random_vec(rng, n, -1, 1), 0.5);
  CHECK(cross_entropy(Dist(onehot), lp) == doctest::Approx(-lp[3]).epsilon(1e-15));

  Vec t(2);
  t << 0.25, 0.75;
  Vec l(2);
  l << 0.0, std::log(3.0);
  const long double ref = -(0.25L * std::log(0.25L) + 0.75L * std::log(0.75L));
  CHECK(std::abs(cross_entropy(Dist(t), tempered_log_softmax(l, 1.0)) - static_cast<double>(ref)) <= 1e-15);

  CHECK(kind_of([&] { cross_entropy(Dist(t), ulog); }) == ErrorKind::DimMismatch);
}

TEST_CASE("cross entropy equals entropy at p and dominates it elsewhere") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(uniform_index(rng, 40));
    Dist p = random_dist(rng, n);
    Vec logp = p.probs().array().log().matrix();
    CHECK(std::abs(cross_entropy(p, logp) - entropy(p)) <= 1e-12);
    Vec other = tempered_log_softmax(random_vec(rng, n, -1, 1), 0.3);
    CHECK(cross_entropy(p, other) >= entropy(p) - 1e-12);
  }
}

TEST_CASE("ce_softmax_grad") {
  Rng rng(21);
  SUBCASE("zero at the target") {
    Vec l = random_vec(rng, 6, -1, 1);
    Dist p = tempered_softmax(l, 0.2);
    CHECK(ce_softmax_grad(l, p, 0.2).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("sums to zero and matches finite differences") {
    const double eps = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(uniform_index(rng, 63));
      Vec l = random_vec(rng, n, -1, 1);
      Dist q = random_dist(rng, n);
      const double tau = uniform(rng, 0.1, 1.0);
      Vec g = ce_softmax_grad(l, q, tau);
      CHECK(std::abs(g.sum()) <= 1e-12);
      for (Eigen::Index k = 0; k < n; ++k) {
        Vec up = l, dn = l;
        up[k] += eps;
        dn[k] -= eps;
        const double fd =
            (cross_entropy(q, tempered_log_softmax(up, tau)) - cross_entropy(q, tempered_log_softmax(dn, tau))) /
            (2 * eps);
        worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(fd)));
      }
    }
    CHECK(worst <= 1e-6);
  }
  CHECK(kind_of([] { ce_softmax_grad(Vec::Zero(2), Dist(Vec::Constant(2, 0.5)), 0.0); }) ==
        ErrorKind::NonPositiveTemperature);
}

TEST_CASE("segmented_softmax agrees with per-segment softmax") {
  Rng rng(2);
  Mat logits(5, 12);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = uniform(rng, -1, 1);
  Mat lp, p;
  segmented_softmax(logits, 4, 0.07, lp, &p);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index s = 0; s < 12; s += 4) {
      Vec ref = tempered_log_softmax(logits.row(r).segment(s, 4).transpose(), 0.07);
      for (Eigen::Index k = 0; k < 4; ++k) {
        CHECK(lp(r, s + k) == doctest::Approx(ref[k]).epsilon(1e-13));
        CHECK(p(r, s + k) == doctest::Approx(std::exp(ref[k])).epsilon(1e-13));
      }
    }
  }
  CHECK(kind_of([&] { segmented_softmax(logits, 5, 0.1, lp, nullptr); }) == ErrorKind::InvalidShape);
}

TEST_CASE("normal_cdf matches erfc") {
  Rng rng(4);
  std::vector<double> x(1001), out(1001);
  for (auto& v : x) v = uniform(rng, -9, 9);
  normal_cdf(x.data(), out.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ref = 0.5 * std::erfc(-x[i] * 0.70710678118654752440);
    CHECK(std::abs(out[i] - ref) <= 2e-15 * ref + 1e-300);
    CHECK(normal_cdf(x[i]) == out[i]);
  }
}
