#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "massl/checkpoint.hpp"
#include "massl/config.hpp"
#include "massl/data.hpp"
#include "massl/evalkit.hpp"
#include "massl/memory.hpp"
#include "massl/model.hpp"
#include "massl/objective.hpp"
#include "massl/optim.hpp"

namespace massl {

struct MetricsRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wd = 0.0;
  double tau_t = 0.0;
  double ema_momentum = 0.0;
  Diagnostics diagnostics;
  double wall_ms = 0.0;

  /// One JSON object on a single line. Wall-clock time is left out so that
  /// runs with the same seed produce identical lines.
  std::string to_jsonl() const;
  static MetricsRecord from_jsonl(const std::string& line);
};

enum class StepPhase {
  /// Loss and teacher targets computed; memory not yet updated.
  LossComputed,
  /// This step's teacher projections have been enqueued.
  MemoryUpdated,
};

struct StepEvent {
  StepPhase phase;
  std::uint64_t step;
  /// Memory insertion count when the targets were computed.
  std::uint64_t inserted_at_loss;
  /// The plan-ordered memory snapshot both branches were scored against.
  const Mat* plan_memory;
};

/// Owns all mutable training state (student, teacher, optimizer, memory) and
/// advances it one optimization step at a time.
class Trainer {
 public:
  using Observer = std::function<void(const StepEvent&, const Trainer&)>;

  explicit Trainer(TrainConfig cfg);
  explicit Trainer(const Checkpoint& ckpt);

  const TrainConfig& config() const noexcept { return cfg_; }
  std::uint64_t step() const noexcept { return step_; }
  std::uint64_t epoch() const noexcept { return step_ / steps_per_epoch_; }
  std::uint64_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::uint64_t total_steps() const noexcept { return total_steps_; }
  bool finished() const noexcept { return step_ >= total_steps_; }

  const ModelParams& student() const noexcept { return student_; }
  const ModelParams& teacher() const noexcept { return teacher_; }
  const AdamWState& optimizer() const noexcept { return optimizer_; }
  const Memory& memory() const noexcept { return memory_; }
  const Dataset& train_data() const noexcept { return train_; }
  const Dataset& test_data() const noexcept { return test_; }

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  /// Runs one step and returns its metrics. `diagnostics` is filled on every step.
  MetricsRecord run_step();

  /// True when the step just completed (step() - 1) is a logging point.
  bool is_log_step(std::uint64_t completed_step) const;

  Checkpoint snapshot() const;

  /// Unit-norm projections of `features` under the evaluation encoder.
  Mat embed(const Mat& features) const;

 private:
  void load_data();
  void refresh_epoch_batches(std::uint64_t epoch);

  TrainConfig cfg_;
  Dataset train_;
  Dataset test_;
  ModelParams student_;
  ModelParams teacher_;
  AdamWState optimizer_;
  Memory memory_;
  std::uint64_t step_ = 0;
  std::uint64_t steps_per_epoch_ = 1;
  std::uint64_t total_steps_ = 1;
  std::uint64_t batches_epoch_ = ~std::uint64_t{0};
  std::vector<std::vector<std::size_t>> epoch_batches_;
  Observer observer_;
};

/// Unit-norm projections of `features` under `params`, computed in chunks.
Mat embed(const ModelParams& params, const Mat& features);

/// Loads the datasets described by a config: (train, test). The test set is the
/// blob test split, the test CSV, or the training set when neither exists.
std::pair<Dataset, Dataset> load_datasets(const TrainConfig& cfg);

}  // namespace massl
