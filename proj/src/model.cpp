#include "massl/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "massl/errors.hpp"
#include "massl/numkernel.hpp"
#include "massl/rng.hpp"

namespace massl {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::vector<std::size_t> layer_dims(const ArchConfig& arch) {
  std::vector<std::size_t> dims{arch.input_dim};
  dims.insert(dims.end(), arch.backbone_widths.begin(), arch.backbone_widths.end());
  dims.push_back(arch.head_hidden);
  dims.push_back(arch.head_hidden);
  dims.push_back(arch.output_dim);
  return dims;
}

bool has_gelu(const ModelParams& p, std::size_t layer) { return layer + 1 < p.layers.size(); }

void check_same_shapes(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) fail(ErrorKind::ShapeMismatch, "layer counts differ");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight.rows() != b.layers[l].weight.rows() ||
        a.layers[l].weight.cols() != b.layers[l].weight.cols() ||
        a.layers[l].bias.size() != b.layers[l].bias.size()) {
      fail(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " shapes differ");
    }
  }
}

}  // namespace

bool operator==(const ArchConfig& a, const ArchConfig& b) {
  return a.input_dim == b.input_dim && a.backbone_widths == b.backbone_widths &&
         a.head_hidden == b.head_hidden && a.output_dim == b.output_dim;
}

double gelu(double x) { return x * normal_cdf(x); }

double gelu_derivative(double x) {
  return normal_cdf(x) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

Vec flatten_layers(const std::vector<LayerTensors>& layers) {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  Vec out(n);
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    out.segment(at, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
    at += l.weight.size();
    out.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return out;
}

}  // namespace

Vec ModelParams::flatten() const { return flatten_layers(layers); }

void ModelParams::assign_flat(const Vec& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    fail(ErrorKind::ShapeMismatch, "flat parameter vector has wrong length");
  }
  Eigen::Index at = 0;
  for (auto& l : layers) {
    l.weight.reshaped<Eigen::RowMajor>() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
  ++revision;
}

Vec ParamGrads::flatten() const { return flatten_layers(layers); }

bool ParamGrads::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  const auto dims = layer_dims(arch);
  for (std::size_t d : dims) {
    if (d < 1) fail(ErrorKind::InvalidShape, "every layer width must be >= 1");
  }
  if (arch.output_dim < 2) fail(ErrorKind::InvalidShape, "output dim must be >= 2");
  ModelParams p;
  p.arch = arch;
  Rng rng = make_rng(seed, {0x696e6974ULL});
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(dims[l + 1]);
    // Uniform(-a, a) with a = sqrt(6 / fan_in) has variance 2 / fan_in.
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    LayerTensors t{Mat(fan_in, fan_out), Vec::Zero(fan_out)};
    for (Eigen::Index i = 0; i < t.weight.size(); ++i) t.weight.data()[i] = uniform(rng, -a, a);
    p.layers.push_back(std::move(t));
  }
  return p;
}

Mat forward(const ModelParams& params, const Mat& batch, ForwardCache* cache) {
  if (params.layers.empty()) fail(ErrorKind::InvalidShape, "model has no layers");
  if (batch.cols() != params.layers.front().weight.rows()) {
    fail(ErrorKind::DimMismatch, "input has " + std::to_string(batch.cols()) + " columns, model expects " +
                                     std::to_string(params.layers.front().weight.rows()));
  }
  const std::size_t L = params.layers.size();
  if (cache) {
    cache->inputs.assign(L, Mat());
    cache->pre.assign(L, Mat());
    cache->cdf.assign(L, Mat());
  }
  Mat act = batch;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = params.layers[l];
    Mat pre(act.rows(), layer.weight.cols());
    pre.noalias() = act * layer.weight;
    pre.rowwise() += layer.bias.transpose();
    if (cache) cache->inputs[l] = std::move(act);
    if (has_gelu(params, l)) {
      Mat cdf(pre.rows(), pre.cols());
      normal_cdf(pre.data(), cdf.data(), static_cast<std::size_t>(pre.size()));
      act = pre.cwiseProduct(cdf);
      if (cache) {
        cache->pre[l] = std::move(pre);
        cache->cdf[l] = std::move(cdf);
      }
    } else {
      act = std::move(pre);
    }
  }
  Vec norms = act.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms[r] > kNearZeroNorm)) {
      fail(ErrorKind::NearZeroNorm, "projection row " + std::to_string(r) + " has zero norm");
    }
  }
  Mat z = norms.cwiseInverse().asDiagonal() * act;
  if (cache) {
    cache->raw_norms = std::move(norms);
    cache->z = z;
    cache->revision = params.revision;
    cache->owner = &params;
  }
  return z;
}

Mat normalize_backward(const Mat& z, const Vec& raw_norms, const Mat& grad_z) {
  const Vec radial = (z.array() * grad_z.array()).rowwise().sum();
  Mat g = grad_z - radial.asDiagonal() * z;
  return raw_norms.cwiseInverse().asDiagonal() * g;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z) {
  if (cache.owner != &params || cache.revision != params.revision ||
      cache.inputs.size() != params.layers.size()) {
    fail(ErrorKind::StaleCache, "forward cache does not belong to the current parameters");
  }
  if (grad_z.rows() != cache.z.rows() || grad_z.cols() != cache.z.cols()) {
    fail(ErrorKind::DimMismatch, "gradient shape differs from cached projections");
  }
  ParamGrads grads;
  grads.layers.resize(params.layers.size());
  Mat delta = normalize_backward(cache.z, cache.raw_norms, grad_z);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    if (has_gelu(params, l)) {
      const Mat& pre = cache.pre[l];
      const Mat& cdf = cache.cdf[l];
      Mat dgelu = cdf + (pre.array() * (-0.5 * pre.array().square()).exp() * kInvSqrt2Pi).matrix();
      delta.array() *= dgelu.array();
    }
    grads.layers[l].weight.resize(params.layers[l].weight.rows(), params.layers[l].weight.cols());
    grads.layers[l].weight.noalias() = cache.inputs[l].transpose() * delta;
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Mat next(delta.rows(), params.layers[l].weight.rows());
      next.noalias() = delta * params.layers[l].weight.transpose();
      delta = std::move(next);
    }
  }
  return grads;
}

void ema_update(ModelParams& teacher, const ModelParams& student, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    fail(ErrorKind::InvalidShape, "EMA momentum must lie in [0, 1]");
  }
  check_same_shapes(teacher, student);
  const double keep = momentum;
  const double take = 1.0 - momentum;
  for (std::size_t l = 0; l < teacher.layers.size(); ++l) {
    auto& t = teacher.layers[l];
    const auto& s = student.layers[l];
    t.weight = keep * t.weight + take * s.weight;
    t.bias = keep * t.bias + take * s.bias;
  }
  ++teacher.revision;
}

ParamGrads zeros_like(const ModelParams& params) {
  ParamGrads g;
  for (const auto& l : params.layers) {
    g.layers.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
  }
  return g;
}

}  // namespace massl
