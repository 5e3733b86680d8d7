#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "massl/config.hpp"
#include "massl/evalkit.hpp"
#include "massl/trainer.hpp"

namespace massl {

struct TrainOptions {
  /// Continue from this checkpoint instead of starting fresh.
  std::string resume_path;
  /// Write metrics, summary and checkpoints under config.out_dir.
  bool write_files = true;
  /// Print one progress line per logged record to stderr.
  bool verbose = false;
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  /// k → top-1 k-NN accuracy of the final evaluation encoder.
  std::map<int, double> knn;
  Diagnostics final_diagnostics;
  /// Whether any logged record during training tripped the collapse flag.
  bool collapsed_any = false;
  double wall_seconds = 0.0;
};

/// The full training loop: steps, metrics (metrics.jsonl, timing.csv),
/// periodic and final checkpoints, and a final k-NN + diagnostics evaluation
/// written to summary.csv.
TrainResult run_training(const TrainConfig& cfg, const TrainOptions& opts = {});

/// End-of-run evaluation for a trainer: k-NN over cfg.eval_k (reference = train
/// split, queries = test split) and collapse diagnostics on the test embeddings.
void final_evaluation(const Trainer& trainer, TrainResult& result);

/// A single-row table of named metrics.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<double> values;

  double at(const std::string& column) const;
};

void write_table_csv(const std::string& path, const MetricsTable& table);
MetricsTable read_table_csv(const std::string& path);

/// Resolves a dataset description against a checkpoint's config:
///   "train" / "test"          the checkpoint's own training / held-out data
///   "csv:PATH" or "PATH.csv"  a CSV file
///   "blobs:key=value,..."     synthetic blobs; keys classes, per_class, dim,
///                             separation, noise, seed, split (train|test)
Dataset resolve_dataset(const std::string& spec, const TrainConfig& cfg);

struct EvalRequest {
  std::string checkpoint;
  std::string data = "test";
  std::string reference = "train";
  std::vector<int> knn_k = {10, 20, 100, 200};
  bool linear = false;
  bool cluster = false;
  std::string out_csv;
};

MetricsTable run_eval(const EvalRequest& req);

struct AblationRow {
  std::string sweep;
  std::string setting;
  std::uint64_t seed = 0;
  double knn = 0.0;
  bool collapsed_any = false;
  bool collapsed_final = false;
  double feature_std = 0.0;
  double entropy_ratio = 0.0;
};

struct AblationRequest {
  TrainConfig base;
  /// "memory-size", "block-size" or "sampling".
  std::string sweep;
  /// Settings to sweep; empty picks the defaults for the sweep.
  std::vector<std::string> values;
  std::size_t seeds = 3;
  std::string out_dir;
  bool verbose = false;
};

/// Applies one sweep setting to a config. Memory sizes below the batch size or
/// block size shrink those to the memory size.
TrainConfig apply_sweep_setting(const TrainConfig& base, const std::string& sweep, const std::string& value);

std::vector<std::string> default_sweep_values(const std::string& sweep);

/// Trains and evaluates every (setting, seed) and writes ablation.csv.
std::vector<AblationRow> run_ablation(const AblationRequest& req);

/// Writes one row per dataset point: D embedding values then the label.
void run_export(const std::string& checkpoint, const std::string& data, const std::string& out_path);

}  // namespace massl
