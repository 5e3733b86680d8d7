#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "massl/data.hpp"
#include "massl/memory.hpp"
#include "massl/model.hpp"
#include "massl/optim.hpp"

namespace massl {

/// Which teacher projections enter the memory after each step.
enum class EnqueuePolicy { OneGlobal, BothGlobals };

std::string_view to_string(EnqueuePolicy p) noexcept;

struct DataConfig {
  /// Empty: synthetic blobs from `blobs`. Otherwise a CSV file (see load_csv).
  std::string csv_path;
  /// Optional held-out CSV used for evaluation; empty means evaluate on the
  /// blob test split, or on the training CSV itself.
  std::string test_csv_path;
  BlobSpec blobs;
};

struct TrainConfig {
  DataConfig data;
  ArchConfig arch;

  std::size_t memory_size = 1024;
  std::size_t block_size = 256;
  SamplingStrategy sampling = SamplingStrategy::Stochastic;
  EnqueuePolicy enqueue = EnqueuePolicy::OneGlobal;

  double tau_s = 0.1;
  double tau_t_start = 0.04;
  double tau_t_end = 0.07;
  double tau_t_warmup_epochs = 30;

  ViewSpec views;

  double lr = 1e-3;
  double lr_end = 1e-6;
  double wd_start = 0.04;
  double wd_end = 0.4;
  AdamWHyper adamw;

  double ema_start = 0.996;
  double ema_end = 1.0;

  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  std::string out_dir = "runs/default";
  /// Write a checkpoint every this many epochs (0: only the final one).
  std::size_t checkpoint_every = 0;
  /// Emit a metrics record every this many steps (0: once per epoch).
  std::size_t log_every = 0;

  /// k values reported by the end-of-training k-NN evaluation.
  std::vector<int> eval_k = {20};
  double knn_temperature = 0.07;
  /// Evaluate with the teacher encoder (true) or the student.
  bool eval_teacher = true;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// Flat key/value view of every field, in a fixed order. Keys are dotted
/// ("data.classes", "views.global.noise_sigma").
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg);

/// Sets one field from its textual value; unknown keys are a ConfigError.
void apply_key_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Parses `key = value` lines. '#' starts a comment; blank lines are ignored.
TrainConfig parse_config_text(std::string_view text);
TrainConfig load_config(const std::string& path);

/// The same `key = value` format, loadable by parse_config_text.
std::string format_config(const TrainConfig& cfg);

/// JSON object of the key/value view (used for the checkpoint config echo).
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(std::string_view json);

/// Full-scale hyperparameters (memory 65536, block 16384, batch 1024,
/// lr 1e-5 → 1e-6, 2 global + 10 local views, 2048-d head, 256-d output).
/// Too large to train at desk scale; provided for reference.
TrainConfig full_scale_preset();

}  // namespace massl
