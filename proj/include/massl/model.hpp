#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "massl/types.hpp"

namespace massl {

/// Encoder shape: an MLP backbone (GELU after every layer) followed by a
/// three-layer projection head input→hidden→hidden→output with GELU between,
/// then L2 normalization of the output.
struct ArchConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> backbone_widths = {128, 128};
  std::size_t head_hidden = 128;
  std::size_t output_dim = 32;

  std::size_t layer_count() const noexcept { return backbone_widths.size() + 3; }
};

bool operator==(const ArchConfig& a, const ArchConfig& b);

/// Affine layer y = x·W + b with W stored (fan_in × fan_out).
struct LayerTensors {
  Mat weight;
  Vec bias;
};

struct ModelParams {
  ArchConfig arch;
  std::vector<LayerTensors> layers;
  /// Bumped whenever the optimizer or EMA rewrites the tensors; forward caches
  /// record it so a backward pass on changed parameters is rejected.
  std::uint64_t revision = 0;

  std::size_t parameter_count() const;
  /// All tensors flattened in layer order (weights then bias per layer).
  Vec flatten() const;
  void assign_flat(const Vec& flat);
};

struct ParamGrads {
  std::vector<LayerTensors> layers;

  Vec flatten() const;
  bool all_finite() const;
};

struct ForwardCache {
  std::uint64_t revision = 0;
  const ModelParams* owner = nullptr;
  std::vector<Mat> inputs;       // input activation of each layer
  std::vector<Mat> pre;          // pre-activation of each layer
  std::vector<Mat> cdf;          // Φ(pre) for layers followed by GELU
  Vec raw_norms;                 // ‖v‖ of each pre-normalization output row
  Mat z;                         // normalized outputs
};

double gelu(double x);
double gelu_derivative(double x);

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

/// Rows of `batch` → unit-norm projections. When `cache` is non-null it is
/// filled for a later backward().
Mat forward(const ModelParams& params, const Mat& batch, ForwardCache* cache = nullptr);

/// Gradients of the loss w.r.t. every parameter given ∂loss/∂z.
ParamGrads backward(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z);

/// Backprop through z = v/‖v‖ alone: (I − ẑẑᵀ) g / ‖v‖ per row.
Mat normalize_backward(const Mat& z, const Vec& raw_norms, const Mat& grad_z);

/// teacher ← m·teacher + (1−m)·student, tensor by tensor.
void ema_update(ModelParams& teacher, const ModelParams& student, double momentum);

ParamGrads zeros_like(const ModelParams& params);

}  // namespace massl
