#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "massl/types.hpp"

namespace massl {

struct KnnConfig {
  int k = 20;
  double temperature = 0.07;
};

/// Weighted k-NN on unit-norm features. For each query the k most similar
/// references (cosine; ties broken by lower reference index) vote with weight
/// exp(sim / temperature); the class with the largest total wins, ties going
/// to the lowest class index.
std::vector<int> knn_predict(const Mat& train_feats, std::span<const int> train_labels,
                             const Mat& test_feats, const KnnConfig& cfg);

/// Top-1 accuracy of knn_predict against `test_labels`.
double knn_probe(const Mat& train_feats, std::span<const int> train_labels, const Mat& test_feats,
                 std::span<const int> test_labels, const KnnConfig& cfg);

struct LinearProbeConfig {
  int epochs = 100;
  double lr = 0.5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Softmax regression on frozen features, mini-batch SGD with a cosine
/// learning-rate decay to zero. Returns test top-1 accuracy.
double linear_probe(const Mat& train_feats, std::span<const int> train_labels, const Mat& test_feats,
                    std::span<const int> test_labels, const LinearProbeConfig& cfg);

struct KMeansResult {
  std::vector<int> assignment;
  Mat centers;
  double inertia = 0.0;
};

/// k-means++ seeding then Lloyd iterations until the assignment stops changing
/// (or max_iter), keeping the lowest-inertia restart with no empty cluster.
KMeansResult kmeans(const Mat& features, int k, std::uint64_t seed, int restarts = 10,
                    int max_iter = 300);

struct ClusterScores {
  double nmi = 0.0;
  double ami = 0.0;
  double ari = 0.0;
};

/// NMI (arithmetic-mean normalization), AMI and ARI of two labelings.
ClusterScores compare_labelings(std::span<const int> truth, std::span<const int> predicted);

/// Expected mutual information of two labelings with the given marginals
/// under the permutation (hypergeometric) model.
double expected_mutual_information(std::span<const std::int64_t> row_sums,
                                   std::span<const std::int64_t> col_sums);

ClusterScores clustering_metrics(const Mat& features, std::span<const int> labels, int classes,
                                 std::uint64_t kmeans_seed);

inline constexpr double kCollapseStdThreshold = 0.01;
inline constexpr double kCollapseEntropyRatioThreshold = 0.1;

struct Diagnostics {
  /// Per-dimension standard deviation of the features, averaged over dimensions.
  double feature_std = 0.0;
  /// Mean entropy of the teacher target distributions, in nats.
  double mean_target_entropy = 0.0;
  /// mean_target_entropy / ln N_b, clamped to [0, 1].
  double entropy_ratio = 0.0;
  /// exp of the Shannon entropy of the normalized covariance spectrum.
  double effective_rank = 0.0;
  bool collapsed = false;
};

/// `teacher_dists` holds one target distribution per row (width N_b).
Diagnostics collapse_diagnostics(const Mat& teacher_dists, const Mat& features);

/// Variant for when the mean target entropy has already been reduced.
Diagnostics collapse_diagnostics(double mean_target_entropy, std::size_t block_size,
                                 const Mat& features);

}  // namespace massl
