#include "massl/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "massl/errors.hpp"

namespace massl {

AdamWState make_adamw_state(const ModelParams& params, AdamWHyper hyper) {
  AdamWState s;
  s.hyper = hyper;
  const ParamGrads zeros = zeros_like(params);
  s.first_moment = zeros.layers;
  s.second_moment = zeros.layers;
  return s;
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::uint64_t step, double lr, double weight_decay,
                  const AdamWHyper& hyper) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    fail(ErrorKind::ShapeMismatch, "parameter, gradient and moment sizes differ");
  }
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    params[i] *= decay;
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

void adamw_step(ModelParams& params, const ParamGrads& grads, AdamWState& state, double lr,
                double weight_decay) {
  if (lr < 0.0 || weight_decay < 0.0) {
    fail(ErrorKind::InvalidShape, "learning rate and weight decay must be >= 0");
  }
  if (grads.layers.size() != params.layers.size() ||
      state.first_moment.size() != params.layers.size() ||
      state.second_moment.size() != params.layers.size()) {
    fail(ErrorKind::ShapeMismatch, "optimizer state does not match the parameters");
  }
  if (!grads.all_finite()) fail(ErrorKind::NonFiniteGrad, "gradient contains NaN or Inf");
  const std::uint64_t step = state.step + 1;
  auto as_span = [](auto& t) { return std::span(t.data(), static_cast<std::size_t>(t.size())); };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    auto& m = state.first_moment[l];
    auto& v = state.second_moment[l];
    if (g.weight.size() != p.weight.size() || g.bias.size() != p.bias.size() ||
        m.weight.size() != p.weight.size() || v.bias.size() != p.bias.size()) {
      fail(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " shapes differ");
    }
    adamw_update(as_span(p.weight), std::span<const double>(g.weight.data(), g.weight.size()),
                 as_span(m.weight), as_span(v.weight), step, lr, weight_decay, state.hyper);
    adamw_update(as_span(p.bias), std::span<const double>(g.bias.data(), g.bias.size()),
                 as_span(m.bias), as_span(v.bias), step, lr, 0.0, state.hyper);
  }
  state.step = step;
  ++params.revision;
}

std::string_view to_string(ScheduleKind k) noexcept {
  switch (k) {
    case ScheduleKind::CosineDecay: return "cosine";
    case ScheduleKind::LinearWarmup: return "linear_warmup";
    case ScheduleKind::Constant: return "constant";
  }
  return "constant";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::CosineDecay;
  if (name == "linear_warmup" || name == "linear") return ScheduleKind::LinearWarmup;
  if (name == "constant") return ScheduleKind::Constant;
  fail(ErrorKind::ConfigError, "unknown schedule kind '" + std::string(name) + "'");
}

double eval_schedule(const ScheduleSpec& spec, double t, double total) {
  if (!(t >= 0.0) || !(t <= total)) {
    fail(ErrorKind::OutOfRangeStep, "step " + std::to_string(t) + " outside [0, " +
                                        std::to_string(total) + "]");
  }
  switch (spec.kind) {
    case ScheduleKind::CosineDecay: {
      if (total <= 0.0) return spec.end;
      if (t == total) return spec.end;
      if (t == 0.0) return spec.start;
      return spec.end + (spec.start - spec.end) * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
    }
    case ScheduleKind::LinearWarmup: {
      if (spec.span < 1.0) fail(ErrorKind::ConfigError, "warmup span must be >= 1");
      if (t >= spec.span) return spec.end;
      return spec.start + (spec.end - spec.start) * (t / spec.span);
    }
    case ScheduleKind::Constant:
      return spec.start;
  }
  return spec.start;
}

double teacher_temperature(double epoch, double warmup_epochs, double tau_start, double tau_end) {
  if (epoch >= warmup_epochs) return tau_end;
  if (epoch <= 0.0) return tau_start;
  return tau_start + (tau_end - tau_start) * (epoch / warmup_epochs);
}

}  // namespace massl
