#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "massl/model.hpp"

namespace massl {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<LayerTensors> first_moment;
  std::vector<LayerTensors> second_moment;
  AdamWHyper hyper;
};

AdamWState make_adamw_state(const ModelParams& params, AdamWHyper hyper = {});

/// One AdamW update of a flat tensor. `step` is the 1-based step number used
/// for bias correction. Decoupled decay is applied first: p ← p − lr·wd·p.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::uint64_t step, double lr, double weight_decay,
                  const AdamWHyper& hyper);

/// Applies AdamW to every tensor of `params`. Weight decay is applied to
/// weight matrices only; biases are not decayed.
void adamw_step(ModelParams& params, const ParamGrads& grads, AdamWState& state, double lr,
                double weight_decay);

enum class ScheduleKind { CosineDecay, LinearWarmup, Constant };

std::string_view to_string(ScheduleKind k) noexcept;
ScheduleKind parse_schedule_kind(std::string_view name);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Constant;
  double start = 0.0;
  double end = 0.0;
  /// Warmup length for LinearWarmup; ignored by the other kinds.
  double span = 1.0;
};

double eval_schedule(const ScheduleSpec& spec, double t, double total);

/// Linear ramp from tau_start to tau_end over the first warmup_epochs, then flat.
double teacher_temperature(double epoch, double warmup_epochs, double tau_start, double tau_end);

}  // namespace massl
