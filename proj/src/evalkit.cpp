#include "massl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "massl/errors.hpp"
#include "massl/parallel.hpp"
#include "massl/rng.hpp"

namespace massl {

namespace {

int class_count(std::span<const int> a, std::span<const int> b = {}) {
  int m = -1;
  for (int v : a) m = std::max(m, v);
  for (int v : b) m = std::max(m, v);
  return m + 1;
}

void check_labels(const Mat& feats, std::span<const int> labels, const char* what) {
  if (static_cast<std::size_t>(feats.rows()) != labels.size()) {
    fail(ErrorKind::DimMismatch, std::string(what) + ": feature rows and label count differ");
  }
  for (int l : labels) {
    if (l < 0) fail(ErrorKind::InvalidShape, std::string(what) + ": negative label");
  }
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace

std::vector<int> knn_predict(const Mat& train_feats, std::span<const int> train_labels,
                             const Mat& test_feats, const KnnConfig& cfg) {
  if (train_feats.rows() == 0) fail(ErrorKind::EmptyReferenceSet, "k-NN needs reference points");
  check_labels(train_feats, train_labels, "knn reference");
  if (test_feats.cols() != train_feats.cols()) fail(ErrorKind::DimMismatch, "k-NN feature dims differ");
  if (cfg.k < 1 || cfg.k > train_feats.rows()) {
    fail(ErrorKind::InvalidShape, "k must lie in [1, " + std::to_string(train_feats.rows()) + "]");
  }
  if (!(cfg.temperature > 0.0)) fail(ErrorKind::NonPositiveTemperature, "k-NN temperature must be > 0");
  const int classes = class_count(train_labels);
  const auto n_ref = static_cast<std::size_t>(train_feats.rows());
  const auto k = static_cast<std::size_t>(cfg.k);
  std::vector<int> out(static_cast<std::size_t>(test_feats.rows()));
  constexpr Eigen::Index kChunk = 256;
  const std::size_t chunks = (out.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c0, std::size_t c1) {
    std::vector<std::size_t> order(n_ref);
    std::vector<double> votes(static_cast<std::size_t>(classes));
    for (std::size_t c = c0; c < c1; ++c) {
      const Eigen::Index first = static_cast<Eigen::Index>(c) * kChunk;
      const Eigen::Index count = std::min<Eigen::Index>(kChunk, test_feats.rows() - first);
      const Mat sims = test_feats.middleRows(first, count) * train_feats.transpose();
      for (Eigen::Index q = 0; q < count; ++q) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto row = sims.row(q);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            const double sa = row[static_cast<Eigen::Index>(a)];
                            const double sb = row[static_cast<Eigen::Index>(b)];
                            return sa > sb || (sa == sb && a < b);
                          });
        std::fill(votes.begin(), votes.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t r = order[i];
          votes[static_cast<std::size_t>(train_labels[r])] +=
              std::exp(row[static_cast<Eigen::Index>(r)] / cfg.temperature);
        }
        // max_element returns the first maximum, i.e. the lowest class index.
        out[static_cast<std::size_t>(first + q)] =
            static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      }
    }
  });
  return out;
}

double knn_probe(const Mat& train_feats, std::span<const int> train_labels, const Mat& test_feats,
                 std::span<const int> test_labels, const KnnConfig& cfg) {
  check_labels(test_feats, test_labels, "knn query");
  return accuracy(knn_predict(train_feats, train_labels, test_feats, cfg), test_labels);
}

double linear_probe(const Mat& train_feats, std::span<const int> train_labels, const Mat& test_feats,
                    std::span<const int> test_labels, const LinearProbeConfig& cfg) {
  check_labels(train_feats, train_labels, "linear probe train");
  check_labels(test_feats, test_labels, "linear probe test");
  if (train_feats.rows() == 0) fail(ErrorKind::EmptyReferenceSet, "linear probe needs training points");
  if (cfg.epochs < 1 || cfg.batch_size < 1) fail(ErrorKind::InvalidShape, "epochs and batch size must be >= 1");
  const int classes = class_count(train_labels, test_labels);
  const auto n = static_cast<std::size_t>(train_feats.rows());
  const Eigen::Index dim = train_feats.cols();
  Mat weight = Mat::Zero(dim, classes);
  RowVec bias = RowVec::Zero(classes);
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const double total = static_cast<double>(per_epoch) * cfg.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(cfg.seed, {0x6c696eULL});
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - start);
      Mat x(rows, dim);
      for (Eigen::Index r = 0; r < rows; ++r) {
        x.row(r) = train_feats.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
      }
      Mat logits = x * weight;
      logits.rowwise() += bias;
      for (Eigen::Index r = 0; r < rows; ++r) {
        auto row = logits.row(r).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
        logits(r, train_labels[order[start + static_cast<std::size_t>(r)]]) -= 1.0;
      }
      const double lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
      const double scale = lr / static_cast<double>(rows);
      weight -= scale * (x.transpose() * logits);
      bias -= scale * logits.colwise().sum();
    }
  }
  Mat scores = test_feats * weight;
  scores.rowwise() += bias;
  std::vector<int> predicted(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index arg;
    scores.row(r).maxCoeff(&arg);
    predicted[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return accuracy(predicted, test_labels);
}

namespace {

KMeansResult kmeans_once(const Mat& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Mat centers(k, x.cols());
  // k-means++ seeding.
  centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Vec closest = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += closest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    closest = closest.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  const Vec x_sq = x.rowwise().squaredNorm();
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vec c_sq = centers.rowwise().squaredNorm();
    const Mat cross = x * centers.transpose();
    bool changed = false;
    res.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d = x_sq[i] - 2.0 * cross(i, c) + c_sq[c];
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      res.inertia += std::max(best, 0.0);
      if (res.assignment[static_cast<std::size_t>(i)] != arg) {
        res.assignment[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    if (!changed) break;
    Mat sums = Mat::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous center.
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  res.centers = std::move(centers);
  return res;
}

bool has_empty_cluster(const KMeansResult& r, int k) {
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int a : r.assignment) seen[static_cast<std::size_t>(a)] = true;
  return std::find(seen.begin(), seen.end(), false) != seen.end();
}

}  // namespace

KMeansResult kmeans(const Mat& features, int k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1 || features.rows() < k) {
    fail(ErrorKind::InvalidShape, "k-means needs at least k points");
  }
  Rng rng = make_rng(seed, {0x6b6d65616e73ULL});
  KMeansResult best;
  bool found = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult cand = kmeans_once(features, k, rng, max_iter);
    if (has_empty_cluster(cand, k)) continue;
    if (!found || cand.inertia < best.inertia) {
      best = std::move(cand);
      found = true;
    }
  }
  if (!found) fail(ErrorKind::DegenerateClustering, "every k-means restart left a cluster empty");
  return best;
}

double expected_mutual_information(std::span<const std::int64_t> row_sums,
                                   std::span<const std::int64_t> col_sums) {
  std::int64_t n = 0;
  for (auto a : row_sums) n += a;
  const double N = static_cast<double>(n);
  const double lg_n = std::lgamma(N + 1.0);
  double emi = 0.0;
  for (auto a : row_sums) {
    for (auto b : col_sums) {
      const std::int64_t lo = std::max<std::int64_t>(1, a + b - n);
      const std::int64_t hi = std::min(a, b);
      const double A = static_cast<double>(a);
      const double B = static_cast<double>(b);
      const double fixed = std::lgamma(A + 1.0) + std::lgamma(B + 1.0) + std::lgamma(N - A + 1.0) +
                           std::lgamma(N - B + 1.0) - lg_n;
      for (std::int64_t nij = lo; nij <= hi; ++nij) {
        const double x = static_cast<double>(nij);
        const double log_p = fixed - std::lgamma(x + 1.0) - std::lgamma(A - x + 1.0) -
                             std::lgamma(B - x + 1.0) - std::lgamma(N - A - B + x + 1.0);
        emi += (x / N) * std::log(N * x / (A * B)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

ClusterScores compare_labelings(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) fail(ErrorKind::DimMismatch, "labelings differ in length");
  if (truth.empty()) fail(ErrorKind::InvalidShape, "empty labelings");
  // Compact both labelings to 0..R-1 / 0..S-1 so arbitrary ids work.
  auto compact = [](std::span<const int> v, std::vector<int>& out) {
    std::map<int, int> ids;
    for (int x : v) ids.emplace(x, 0);
    int next = 0;
    for (auto& [key, id] : ids) id = next++;
    out.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = ids[v[i]];
    return next;
  };
  std::vector<int> u, w;
  const int R = compact(truth, u);
  const int S = compact(predicted, w);
  const auto n = static_cast<std::int64_t>(truth.size());
  std::vector<std::int64_t> table(static_cast<std::size_t>(R * S), 0);
  std::vector<std::int64_t> a(static_cast<std::size_t>(R), 0), b(static_cast<std::size_t>(S), 0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    ++table[static_cast<std::size_t>(u[i] * S + w[i])];
    ++a[static_cast<std::size_t>(u[i])];
    ++b[static_cast<std::size_t>(w[i])];
  }
  const double N = static_cast<double>(n);

  ClusterScores s;
  // ARI from pair counts.
  auto comb2 = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto v : table) sum_ij += comb2(v);
  for (auto v : a) sum_a += comb2(v);
  for (auto v : b) sum_b += comb2(v);
  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if ((R == 1 && S == 1) || (R == n && S == n) || max_index == expected) {
    s.ari = 1.0;
  } else {
    s.ari = (sum_ij - expected) / (max_index - expected);
  }

  auto H = [&](const std::vector<std::int64_t>& counts) {
    double h = 0.0;
    for (auto c : counts) {
      if (c > 0) {
        const double p = static_cast<double>(c) / N;
        h -= p * std::log(p);
      }
    }
    return h;
  };
  const double hu = H(a);
  const double hv = H(b);
  double mi = 0.0;
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < S; ++j) {
      const auto c = table[static_cast<std::size_t>(i * S + j)];
      if (c == 0) continue;
      const double x = static_cast<double>(c);
      mi += (x / N) * std::log(N * x / (static_cast<double>(a[static_cast<std::size_t>(i)]) *
                                        static_cast<double>(b[static_cast<std::size_t>(j)])));
    }
  }
  mi = std::max(mi, 0.0);
  const double mean_h = 0.5 * (hu + hv);
  if (R == 1 && S == 1) {
    s.nmi = 1.0;
    s.ami = 1.0;
    return s;
  }
  s.nmi = mean_h > 0.0 ? std::min(1.0, mi / mean_h) : 1.0;
  const double emi = expected_mutual_information(a, b);
  double denom = mean_h - emi;
  // Guard the denominator the same way for both signs.
  const double tiny = std::numeric_limits<double>::epsilon();
  if (denom < 0.0) {
    denom = std::min(denom, -tiny);
  } else {
    denom = std::max(denom, tiny);
  }
  s.ami = (mi - emi) / denom;
  return s;
}

ClusterScores clustering_metrics(const Mat& features, std::span<const int> labels, int classes,
                                 std::uint64_t kmeans_seed) {
  if (classes < 2) fail(ErrorKind::InvalidShape, "clustering needs C >= 2");
  check_labels(features, labels, "clustering");
  const KMeansResult km = kmeans(features, classes, kmeans_seed);
  return compare_labelings(labels, km.assignment);
}

namespace {

void fill_feature_stats(Diagnostics& d, const Mat& features) {
  if (features.rows() == 0) fail(ErrorKind::InvalidShape, "diagnostics need a nonempty feature sample");
  const RowVec mean = features.colwise().mean();
  const Mat centered = features.rowwise() - mean;
  const double n = static_cast<double>(features.rows());
  const RowVec var = centered.colwise().squaredNorm() / n;
  d.feature_std = var.array().sqrt().mean();
  const Mat cov = centered.transpose() * centered / n;
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov, Eigen::EigenvaluesOnly);
  const Vec ev = eig.eigenvalues().cwiseMax(0.0);
  const double total = ev.sum();
  if (total <= 0.0) {
    d.effective_rank = 0.0;
  } else {
    double h = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      const double p = ev[i] / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    d.effective_rank = std::exp(h);
  }
}

void finish(Diagnostics& d, std::size_t block_size) {
  if (block_size < 2) fail(ErrorKind::InvalidShape, "entropy ratio needs N_b >= 2");
  d.entropy_ratio = std::clamp(d.mean_target_entropy / std::log(static_cast<double>(block_size)), 0.0, 1.0);
  d.collapsed = d.feature_std < kCollapseStdThreshold || d.entropy_ratio < kCollapseEntropyRatioThreshold;
}

}  // namespace

Diagnostics collapse_diagnostics(const Mat& teacher_dists, const Mat& features) {
  if (teacher_dists.rows() == 0) fail(ErrorKind::InvalidShape, "diagnostics need target distributions");
  Diagnostics d;
  fill_feature_stats(d, features);
  double h = 0.0;
  for (Eigen::Index r = 0; r < teacher_dists.rows(); ++r) {
    for (Eigen::Index c = 0; c < teacher_dists.cols(); ++c) {
      const double p = teacher_dists(r, c);
      if (p > 0.0) h -= p * std::log(p);
    }
  }
  d.mean_target_entropy = h / static_cast<double>(teacher_dists.rows());
  finish(d, static_cast<std::size_t>(teacher_dists.cols()));
  return d;
}

Diagnostics collapse_diagnostics(double mean_target_entropy, std::size_t block_size,
                                 const Mat& features) {
  Diagnostics d;
  fill_feature_stats(d, features);
  d.mean_target_entropy = mean_target_entropy;
  finish(d, block_size);
  return d;
}

}  // namespace massl
