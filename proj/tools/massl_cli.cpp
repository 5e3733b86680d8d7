// massl: train / eval / ablate / export.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "massl/commands.hpp"
#include "massl/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',' || c == ' ') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> parse_k_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      massl::fail(massl::ErrorKind::ConfigError, "bad k value '" + item + "'");
    }
  }
  if (out.empty()) massl::fail(massl::ErrorKind::ConfigError, "empty k list");
  return out;
}

void print_table(const massl::MetricsTable& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) std::printf("%-16s %.6f\n", t.columns[i].c_str(), t.values[i]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-augmented self-supervised learning on vector datasets"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume;
  std::uint64_t seed = 0;
  int epochs = 0;
  bool verbose = false;
  auto* train = app.add_subcommand("train", "Train student/teacher encoders");
  train->add_option("--config", config_path, "Config file (key = value lines)")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Override train.seed");
  train->add_option("--out", out_dir, "Override train.out_dir");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--epochs", epochs, "Override train.epochs");
  train->add_flag("-v,--verbose", verbose, "Log progress to stderr");

  massl::EvalRequest eval_req;
  std::string k_list = "10,20,100,200";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on frozen features");
  eval->add_option("--checkpoint", eval_req.checkpoint)->required();
  eval->add_option("--data", eval_req.data, "Query data: train | test | csv:PATH | blobs:k=v,...")->required();
  eval->add_option("--reference", eval_req.reference, "Reference set for k-NN and linear probe")
      ->default_val("train");
  eval->add_option("--knn-k", k_list, "Comma-separated k values")->default_val("10,20,100,200");
  eval->add_flag("--linear", eval_req.linear, "Run the linear probe");
  eval->add_flag("--cluster", eval_req.cluster, "Run k-means clustering metrics");
  eval->add_option("--out", eval_req.out_csv, "Write the metrics table as CSV");

  std::string ablate_config, sweep, values, ablate_out;
  std::size_t seeds = 3;
  int ablate_epochs = 0;
  bool ablate_verbose = false;
  auto* ablate = app.add_subcommand("ablate", "Sweep memory size, block size or sampling strategy");
  ablate->add_option("--config", ablate_config)->required();
  ablate->add_option("--sweep", sweep, "memory-size | block-size | sampling")->required();
  ablate->add_option("--seeds", seeds, "Seeds per setting")->default_val(3);
  ablate->add_option("--values", values, "Comma-separated settings (default: sweep preset)");
  ablate->add_option("--out", ablate_out, "Output directory");
  ablate->add_option("--epochs", ablate_epochs, "Override train.epochs");
  ablate->add_flag("-v,--verbose", ablate_verbose);

  std::string export_ckpt, export_data, export_out;
  auto* exp = app.add_subcommand("export", "Write embeddings of a dataset as CSV");
  exp->add_option("--checkpoint", export_ckpt)->required();
  exp->add_option("--data", export_data)->required();
  exp->add_option("--out", export_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      massl::TrainConfig cfg = massl::load_config(config_path);
      if (*seed_opt) cfg.seed = seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (epochs > 0) cfg.epochs = static_cast<std::size_t>(epochs);
      cfg.validate();
      massl::TrainOptions opts;
      opts.resume_path = resume;
      opts.verbose = verbose;
      const auto result = massl::run_training(cfg, opts);
      for (const auto& [k, acc] : result.knn) std::printf("knn_k%-3d %.4f\n", k, acc);
      std::printf("collapsed_any %d\n", result.collapsed_any ? 1 : 0);
      std::printf("wall_seconds %.1f\n", result.wall_seconds);
    } else if (*eval) {
      eval_req.knn_k = parse_k_list(k_list);
      print_table(massl::run_eval(eval_req));
    } else if (*ablate) {
      massl::AblationRequest req;
      req.base = massl::load_config(ablate_config);
      if (ablate_epochs > 0) req.base.epochs = static_cast<std::size_t>(ablate_epochs);
      req.sweep = sweep;
      req.values = split_list(values);
      req.seeds = seeds;
      req.out_dir = ablate_out;
      req.verbose = ablate_verbose;
      for (const auto& r : massl::run_ablation(req)) {
        std::printf("%s=%s seed=%llu knn=%.4f collapsed_any=%d\n", r.sweep.c_str(), r.setting.c_str(),
                    static_cast<unsigned long long>(r.seed), r.knn, r.collapsed_any ? 1 : 0);
      }
    } else if (*exp) {
      massl::run_export(export_ckpt, export_data, export_out);
    }
  } catch (const massl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == massl::ErrorKind::ConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
