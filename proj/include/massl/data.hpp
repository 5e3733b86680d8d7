#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "massl/rng.hpp"
#include "massl/types.hpp"

namespace massl {

/// Labeled vectors. Labels are kept for evaluation only; training never reads them.
struct Dataset {
  Mat features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

struct BlobSpec {
  int classes = 10;
  std::size_t per_class = 500;
  std::size_t dim = 32;
  double separation = 4.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
  /// Held-out points per class drawn around the same centers.
  std::size_t test_per_class = 100;
};

/// C centers on the sphere of radius `separation`, per_class points around each
/// with isotropic Gaussian noise. Rows are grouped by class.
Dataset make_blobs(int classes, std::size_t per_class, std::size_t dim, double separation,
                   double noise, std::uint64_t seed);

/// Train split (per_class points/class) and test split (test_per_class
/// points/class) around shared centers. The train split equals make_blobs().
std::pair<Dataset, Dataset> make_blob_splits(const BlobSpec& spec);

/// Vector-space stand-in for image augmentation. Each row is scaled by
/// (1 + u·scale_jitter) with u ~ U[-1, 1], perturbed by N(0, noise_sigma²) per
/// coordinate, then each coordinate is zeroed with probability dropout_prob.
struct AugmentSpec {
  double noise_sigma = 0.0;
  double dropout_prob = 0.0;
  double scale_jitter = 0.0;

  void validate() const;
};

Mat augment(const Mat& rows, const AugmentSpec& spec, Rng& rng);

struct ViewSpec {
  std::size_t globals = 2;
  std::size_t locals = 4;
  AugmentSpec global{0.3, 0.1, 0.2};
  AugmentSpec local{0.5, 0.4, 0.3};
};

struct ViewBatch {
  std::vector<Mat> global_views;
  std::vector<Mat> local_views;
  std::vector<std::size_t> sources;
};

/// Views of dataset rows `indices`. View v draws from a stream keyed by
/// (seed, epoch, batch_index, v) so the result does not depend on call order.
ViewBatch make_views(const Dataset& data, std::span<const std::size_t> indices,
                     const ViewSpec& spec, std::uint64_t seed, std::uint64_t epoch,
                     std::uint64_t batch_index);

/// Reads rows of `d` floats followed by an integer label. A first line with no
/// numeric cell is treated as a header. If `declared_classes` is given, labels
/// must be below it; otherwise the class count is max label + 1.
Dataset load_csv(const std::string& path, std::optional<int> declared_classes = std::nullopt);

void write_csv(const std::string& path, const Dataset& data);

/// Epoch-shuffled index batches of exactly `batch_size`; the remainder is dropped.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t shuffle_seed, std::uint64_t epoch);

}  // namespace massl
