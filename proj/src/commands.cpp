#include "massl/commands.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "massl/errors.hpp"
#include "massl/numkernel.hpp"

namespace fs = std::filesystem;

namespace massl {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create directory '" + dir + "': " + ec.message());
}

std::string checkpoint_name(std::uint64_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_e%04llu.bin", static_cast<unsigned long long>(epoch));
  return buf;
}

/// Keeps the metrics lines of steps before `step`; used when resuming into a
/// directory that already holds a longer run.
std::vector<std::string> metrics_before(const std::string& path, std::uint64_t step) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (MetricsRecord::from_jsonl(line).step < step) kept.push_back(line);
  }
  return kept;
}

/// Mean teacher-target entropy of `features` against the memory under a fresh
/// stochastic plan, averaged over rows and blocks.
double target_entropy(const Mat& features, const Memory& memory, std::size_t block_size, double tau,
                      std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x6576616cULL});
  const BlockPlan plan = sample_blocks(memory.capacity(), block_size, SamplingStrategy::Stochastic, rng);
  const Mat plan_memory = memory.gather_plan(plan);
  const Eigen::Index rows = std::min<Eigen::Index>(features.rows(), 1024);
  Mat log_q, q;
  segmented_softmax(features.topRows(rows) * plan_memory.transpose(), static_cast<Eigen::Index>(block_size),
                    tau, log_q, &q);
  const double blocks = static_cast<double>(memory.capacity() / block_size);
  return -(q.array() * log_q.array()).sum() / (static_cast<double>(rows) * blocks);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

void final_evaluation(const Trainer& trainer, TrainResult& result) {
  const TrainConfig& cfg = trainer.config();
  const Mat train_z = trainer.embed(trainer.train_data().features);
  const Mat test_z = trainer.embed(trainer.test_data().features);
  for (int k : cfg.eval_k) {
    KnnConfig kc{std::min<int>(k, static_cast<int>(train_z.rows())), cfg.knn_temperature};
    result.knn[k] = knn_probe(train_z, trainer.train_data().labels, test_z, trainer.test_data().labels, kc);
  }
  const double h = target_entropy(test_z, trainer.memory(), cfg.block_size, cfg.tau_t_end, cfg.seed);
  result.final_diagnostics = collapse_diagnostics(h, cfg.block_size, test_z);
}

TrainResult run_training(const TrainConfig& cfg_in, const TrainOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  std::unique_ptr<Trainer> trainer;
  if (!opts.resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(opts.resume_path);
    ckpt.config.out_dir = cfg_in.out_dir;
    trainer = std::make_unique<Trainer>(ckpt);
  } else {
    trainer = std::make_unique<Trainer>(cfg_in);
  }
  const TrainConfig& cfg = trainer->config();

  std::ofstream metrics, timing;
  if (opts.write_files) {
    ensure_dir(cfg.out_dir);
    const std::string metrics_path = cfg.out_dir + "/metrics.jsonl";
    std::vector<std::string> kept;
    if (!opts.resume_path.empty()) kept = metrics_before(metrics_path, trainer->step());
    metrics.open(metrics_path, std::ios::trunc);
    for (const auto& line : kept) metrics << line << '\n';
    timing.open(cfg.out_dir + "/timing.csv", opts.resume_path.empty() ? std::ios::trunc : std::ios::app);
    if (opts.resume_path.empty()) timing << "step,wall_ms\n";
    std::ofstream(cfg.out_dir + "/config.txt") << format_config(cfg);
    if (!metrics || !timing) fail(ErrorKind::IoError, "cannot write metrics under '" + cfg.out_dir + "'");
  }

  TrainResult result;
  double window_ms = 0.0;
  while (!trainer->finished()) {
    MetricsRecord rec = trainer->run_step();
    window_ms += rec.wall_ms;
    if (trainer->is_log_step(rec.step)) {
      rec.wall_ms = window_ms;
      window_ms = 0.0;
      result.collapsed_any = result.collapsed_any || rec.diagnostics.collapsed;
      if (opts.write_files) {
        metrics << rec.to_jsonl() << '\n';
        timing << rec.step << ',' << fmt_double(rec.wall_ms) << '\n';
      }
      if (opts.verbose) {
        std::fprintf(stderr, "epoch %4llu step %7llu loss %.5f std %.4f H/lnNb %.3f%s\n",
                     static_cast<unsigned long long>(rec.epoch), static_cast<unsigned long long>(rec.step),
                     rec.loss, rec.diagnostics.feature_std, rec.diagnostics.entropy_ratio,
                     rec.diagnostics.collapsed ? " COLLAPSED" : "");
      }
      result.records.push_back(rec);
    }
    const bool epoch_end = trainer->step() % trainer->steps_per_epoch() == 0;
    if (opts.write_files && cfg.checkpoint_every > 0 && epoch_end && !trainer->finished() &&
        trainer->epoch() % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.out_dir + "/" + checkpoint_name(trainer->epoch()), trainer->snapshot());
    }
  }
  metrics.flush();

  final_evaluation(*trainer, result);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opts.write_files) {
    save_checkpoint(cfg.out_dir + "/final.bin", trainer->snapshot());
    MetricsTable summary;
    for (const auto& [k, acc] : result.knn) {
      summary.columns.push_back("knn_k" + std::to_string(k));
      summary.values.push_back(acc);
    }
    const Diagnostics& d = result.final_diagnostics;
    summary.columns.insert(summary.columns.end(), {"feature_std", "target_entropy", "entropy_ratio",
                                                   "effective_rank", "collapsed_final", "collapsed_any"});
    summary.values.insert(summary.values.end(), {d.feature_std, d.mean_target_entropy, d.entropy_ratio,
                                                 d.effective_rank, d.collapsed ? 1.0 : 0.0,
                                                 result.collapsed_any ? 1.0 : 0.0});
    write_table_csv(cfg.out_dir + "/summary.csv", summary);
  }
  return result;
}

double MetricsTable::at(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == column) return values[i];
  }
  fail(ErrorKind::InvalidShape, "no column '" + column + "'");
}

void write_table_csv(const std::string& path, const MetricsTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (std::size_t i = 0; i < table.values.size(); ++i) out << (i ? "," : "") << fmt_double(table.values[i]);
  out << '\n';
  if (!out) fail(ErrorKind::IoError, "failed writing '" + path + "'");
}

MetricsTable read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row)) fail(ErrorKind::EmptyFile, "'" + path + "' is incomplete");
  MetricsTable t;
  t.columns = split(header, ',');
  for (const auto& cell : split(row, ',')) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      fail(ErrorKind::ParseError, "'" + path + "': bad value '" + cell + "'");
    }
    t.values.push_back(v);
  }
  if (t.values.size() != t.columns.size()) fail(ErrorKind::ParseError, "'" + path + "': column count mismatch");
  return t;
}

Dataset resolve_dataset(const std::string& spec, const TrainConfig& cfg) {
  if (spec == "train" || spec == "test") {
    auto [train, test] = load_datasets(cfg);
    return spec == "train" ? std::move(train) : std::move(test);
  }
  if (spec.rfind("csv:", 0) == 0) return load_csv(spec.substr(4));
  if (spec.rfind("blobs:", 0) == 0 || spec == "blobs") {
    BlobSpec b = cfg.data.blobs;
    bool test_split = false;
    if (spec.size() > 6) {
      for (const auto& kv : split(spec.substr(6), ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail(ErrorKind::ConfigError, "bad blobs option '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        try {
          if (key == "classes") b.classes = std::stoi(value);
          else if (key == "per_class") b.per_class = std::stoul(value);
          else if (key == "test_per_class") b.test_per_class = std::stoul(value);
          else if (key == "dim") b.dim = std::stoul(value);
          else if (key == "separation") b.separation = std::stod(value);
          else if (key == "noise") b.noise = std::stod(value);
          else if (key == "seed") b.seed = std::stoull(value);
          else if (key == "split") test_split = value == "test";
          else fail(ErrorKind::ConfigError, "unknown blobs option '" + key + "'");
        } catch (const std::logic_error&) {
          fail(ErrorKind::ConfigError, "bad value for blobs option '" + key + "'");
        }
      }
    }
    auto [train, test] = make_blob_splits(b);
    return test_split ? std::move(test) : std::move(train);
  }
  if (spec.size() > 4 && spec.substr(spec.size() - 4) == ".csv") return load_csv(spec);
  fail(ErrorKind::ConfigError, "unrecognized data spec '" + spec + "'");
}

MetricsTable run_eval(const EvalRequest& req) {
  const Checkpoint ckpt = load_checkpoint(req.checkpoint);
  const TrainConfig& cfg = ckpt.config;
  const Dataset query = resolve_dataset(req.data, cfg);
  const Dataset reference = resolve_dataset(req.reference, cfg);
  if (query.dim() != cfg.arch.input_dim || reference.dim() != cfg.arch.input_dim) {
    fail(ErrorKind::DimMismatch, "dataset dim does not match the checkpoint's input dim " +
                                     std::to_string(cfg.arch.input_dim));
  }
  const ModelParams& encoder = cfg.eval_teacher ? ckpt.teacher : ckpt.student;
  const Mat ref_z = embed(encoder, reference.features);
  const Mat query_z = embed(encoder, query.features);

  MetricsTable t;
  for (int k : req.knn_k) {
    t.columns.push_back("knn_k" + std::to_string(k));
    t.values.push_back(knn_probe(ref_z, reference.labels, query_z, query.labels, {k, cfg.knn_temperature}));
  }
  if (req.linear) {
    LinearProbeConfig lp;
    lp.seed = cfg.seed;
    t.columns.push_back("linear");
    t.values.push_back(linear_probe(ref_z, reference.labels, query_z, query.labels, lp));
  }
  if (req.cluster) {
    const ClusterScores s = clustering_metrics(query_z, query.labels, std::max(2, query.num_classes), cfg.seed);
    t.columns.insert(t.columns.end(), {"nmi", "ami", "ari"});
    t.values.insert(t.values.end(), {s.nmi, s.ami, s.ari});
  }
  const double h = target_entropy(query_z, ckpt.memory, cfg.block_size, cfg.tau_t_end, cfg.seed);
  const Diagnostics d = collapse_diagnostics(h, cfg.block_size, query_z);
  t.columns.insert(t.columns.end(), {"feature_std", "target_entropy", "entropy_ratio", "effective_rank", "collapsed"});
  t.values.insert(t.values.end(), {d.feature_std, d.mean_target_entropy, d.entropy_ratio, d.effective_rank,
                                   d.collapsed ? 1.0 : 0.0});
  if (!req.out_csv.empty()) write_table_csv(req.out_csv, t);
  return t;
}

std::vector<std::string> default_sweep_values(const std::string& sweep) {
  if (sweep == "memory-size") return {"64", "128", "256", "512", "1024", "2048"};
  if (sweep == "block-size") return {"32", "64", "128", "256", "512", "1024"};
  if (sweep == "sampling") return {"stochastic", "blockwise"};
  fail(ErrorKind::ConfigError, "unknown sweep '" + sweep + "' (memory-size, block-size, sampling)");
}

TrainConfig apply_sweep_setting(const TrainConfig& base, const std::string& sweep, const std::string& value) {
  TrainConfig cfg = base;
  if (sweep == "memory-size") {
    apply_key_value(cfg, "memory.size", value);
    cfg.block_size = std::min(cfg.block_size, cfg.memory_size);
    const std::size_t per_step = cfg.enqueue == EnqueuePolicy::BothGlobals ? 2 : 1;
    cfg.batch_size = std::min(cfg.batch_size, cfg.memory_size / per_step);
  } else if (sweep == "block-size") {
    apply_key_value(cfg, "memory.block_size", value);
  } else if (sweep == "sampling") {
    apply_key_value(cfg, "memory.sampling", value);
  } else {
    fail(ErrorKind::ConfigError, "unknown sweep '" + sweep + "' (memory-size, block-size, sampling)");
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> run_ablation(const AblationRequest& req) {
  const auto values = req.values.empty() ? default_sweep_values(req.sweep) : req.values;
  if (req.seeds < 1) fail(ErrorKind::ConfigError, "need at least one seed");
  const std::string out_dir = req.out_dir.empty() ? req.base.out_dir + "/ablate_" + req.sweep : req.out_dir;
  ensure_dir(out_dir);
  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    for (std::size_t s = 0; s < req.seeds; ++s) {
      TrainConfig cfg = apply_sweep_setting(req.base, req.sweep, value);
      cfg.seed = req.base.seed + s;
      cfg.out_dir = out_dir + "/" + value + "_seed" + std::to_string(cfg.seed);
      TrainOptions opts;
      opts.verbose = req.verbose;
      const TrainResult r = run_training(cfg, opts);
      AblationRow row;
      row.sweep = req.sweep;
      row.setting = value;
      row.seed = cfg.seed;
      const int k = r.knn.count(20) ? 20 : cfg.eval_k.front();
      row.knn = r.knn.at(k);
      row.collapsed_any = r.collapsed_any;
      row.collapsed_final = r.final_diagnostics.collapsed;
      row.feature_std = r.final_diagnostics.feature_std;
      row.entropy_ratio = r.final_diagnostics.entropy_ratio;
      rows.push_back(row);
      if (req.verbose) {
        std::fprintf(stderr, "[%s=%s seed %llu] knn %.4f collapsed_any %d (%.1fs)\n", req.sweep.c_str(),
                     value.c_str(), static_cast<unsigned long long>(cfg.seed), row.knn, row.collapsed_any,
                     r.wall_seconds);
      }
    }
  }
  std::ofstream out(out_dir + "/ablation.csv", std::ios::trunc);
  out << "sweep,setting,seed,knn,collapsed_any,collapsed_final,feature_std,entropy_ratio\n";
  for (const auto& r : rows) {
    out << r.sweep << ',' << r.setting << ',' << r.seed << ',' << fmt_double(r.knn) << ',' << r.collapsed_any
        << ',' << r.collapsed_final << ',' << fmt_double(r.feature_std) << ',' << fmt_double(r.entropy_ratio)
        << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing '" + out_dir + "/ablation.csv'");
  return rows;
}

void run_export(const std::string& checkpoint, const std::string& data, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset ds = resolve_dataset(data, ckpt.config);
  if (ds.dim() != ckpt.config.arch.input_dim) fail(ErrorKind::DimMismatch, "dataset dim does not match checkpoint");
  const Mat z = embed(ckpt.config.eval_teacher ? ckpt.teacher : ckpt.student, ds.features);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + out_path + "'");
  char buf[32];
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(z(r, c)));
      out.write(buf, end - buf);
      out.put(',');
    }
    out << ds.labels[static_cast<std::size_t>(r)] << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing '" + out_path + "'");
}

}  // namespace massl
