// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance                      every criterion
//   acceptance -c 4 -c 9            selected criteria
//   acceptance --train desk         retrain the cached desk runs (criteria 4, 9)
//   acceptance --train sweep        retrain the cached memory sweep (criterion 5)
//
// Exit status: 0 when every selected criterion passes, 1 otherwise. With
// --known-gap N, a failure of criterion N alone exits with 77 instead.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "massl/commands.hpp"
#include "massl/config.hpp"
#include "massl/evalkit.hpp"
#include "massl/objective.hpp"
#include "massl/optim.hpp"
#include "massl/trainer.hpp"
#include "oracles.hpp"

using namespace massl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

struct Options {
  std::string desk_config = std::string(MASSL_SOURCE_DIR) + "/configs/desk.conf";
  std::string work_dir = "acceptance_runs";
  std::size_t sweep_epochs = 100;
  bool verbose = false;
};

Outcome criterion_1(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t params = 0;
  const double worst = oracle::end_to_end_gradient_error(&params);
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && params <= 2000 && secs < 30.0,
          fmt("max relative error %.2e over %zu parameters, %.2f s", worst, params, secs)};
}

Outcome criterion_2(const Options&) {
  double worst_grad = 0.0, worst_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto d = static_cast<Eigen::Index>(2 + uniform_index(rng, 14));
    const std::size_t nb = 2 + uniform_index(rng, 7);
    const std::size_t K = nb * (1 + uniform_index(rng, 4));
    const double tau = uniform(rng, 0.05, 0.5);
    Mat z = oracle::unit_rows(rng, static_cast<Eigen::Index>(1 + uniform_index(rng, 6)), d);
    std::vector<Mat> S{z, z, z, z}, T{z, z};
    Memory mem(K, static_cast<std::size_t>(d), seed);
    Rng prng(seed + 100);
    auto plan = sample_blocks(K, nb, SamplingStrategy::Stochastic, prng);
    auto rep = massl_loss(S, T, mem, plan, LossConfig{tau, tau, nb});
    for (const auto& g : rep.grads) worst_grad = std::max(worst_grad, g.cwiseAbs().maxCoeff());
    worst_gap = std::max(worst_gap, std::abs(rep.loss - rep.mean_target_entropy));
  }
  return {worst_grad <= 1e-10 && worst_gap <= 1e-9,
          fmt("max |grad| %.2e, max |loss - entropy| %.2e over 20 instances", worst_grad, worst_gap)};
}

Outcome criterion_3(const Options&) {
  int cover_fail = 0, fifo_fail = 0;
  Rng pick(5);
  for (std::uint64_t t = 0; t < 1000; ++t) cover_fail += !oracle::plan_is_disjoint_cover(t, pick);
  Rng rng(99);
  for (std::uint64_t t = 0; t < 1000; ++t) fifo_fail += !oracle::memory_matches_last_k(t, rng);
  return {cover_fail == 0 && fifo_fail == 0,
          fmt("partition failures %d/1000, last-K failures %d/1000", cover_fail, fifo_fail)};
}

// Cached training results: one row per run plus the CPU seconds spent.
struct RunTable {
  std::vector<AblationRow> rows;
  double cpu_seconds = 0.0;
};

void write_runs(const std::string& path, const RunTable& t) {
  std::ofstream out(path, std::ios::trunc);
  out << "cpu_seconds," << t.cpu_seconds << "\n";
  out.precision(17);
  for (const auto& r : t.rows) {
    out << r.setting << ',' << r.seed << ',' << r.knn << ',' << r.collapsed_any << ',' << r.collapsed_final << ','
        << r.feature_std << ',' << r.entropy_ratio << "\n";
  }
}

bool read_runs(const std::string& path, RunTable& t) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line.rfind("cpu_seconds,", 0) != 0) return false;
  t.cpu_seconds = std::stod(line.substr(12));
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> f;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) return false;
    AblationRow r;
    r.setting = f[0];
    r.seed = std::stoull(f[1]);
    r.knn = std::stod(f[2]);
    r.collapsed_any = f[3] == "1";
    r.collapsed_final = f[4] == "1";
    r.feature_std = std::stod(f[5]);
    r.entropy_ratio = std::stod(f[6]);
    t.rows.push_back(r);
  }
  return true;
}

RunTable train_table(const Options& opt, const std::string& name, const std::string& sweep,
                     std::size_t epochs, std::size_t batch_size) {
  TrainConfig base = load_config(opt.desk_config);
  if (epochs > 0) base.epochs = epochs;
  if (batch_size > 0) base.batch_size = batch_size;
  AblationRequest req;
  req.base = base;
  req.sweep = sweep;
  req.seeds = 3;
  req.out_dir = opt.work_dir + "/" + name;
  req.verbose = opt.verbose;
  const double c0 = cpu_seconds();
  RunTable t;
  t.rows = run_ablation(req);
  t.cpu_seconds = cpu_seconds() - c0;
  write_runs(opt.work_dir + "/" + name + ".csv", t);
  return t;
}

RunTable desk_runs(const Options& opt) {
  RunTable t;
  if (read_runs(opt.work_dir + "/desk.csv", t)) return t;
  return train_table(opt, "desk", "sampling", 0, 0);
}

RunTable sweep_runs(const Options& opt) {
  RunTable t;
  if (read_runs(opt.work_dir + "/sweep.csv", t)) return t;
  // the smallest K caps the batch; every K uses it so runs differ only in memory
  return train_table(opt, "sweep", "memory-size", opt.sweep_epochs, 64);
}

const AblationRow* find_row(const RunTable& t, const std::string& setting, std::uint64_t seed) {
  for (const auto& r : t.rows) {
    if (r.setting == setting && r.seed == seed) return &r;
  }
  return nullptr;
}

Outcome criterion_4(const Options& opt) {
  const RunTable t = desk_runs(opt);
  int contrast = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto* s = find_row(t, "stochastic", seed);
    const auto* b = find_row(t, "blockwise", seed);
    if (!s || !b) return {false, "missing desk runs"};
    const bool ok = s->knn >= 0.85 && (s->knn - b->knn >= 0.20 || b->collapsed_any);
    contrast += ok;
    detail += fmt("seed %llu stochastic %.3f blockwise %.3f%s; ", static_cast<unsigned long long>(seed), s->knn,
                  b->knn, b->collapsed_any ? " (collapsed)" : "");
  }
  detail += fmt("contrast in %d/3 seeds, %.0f CPU s", contrast, t.cpu_seconds);
  return {contrast >= 2 && t.cpu_seconds < 1800.0, detail};
}

Outcome criterion_5(const Options& opt) {
  const RunTable t = sweep_runs(opt);
  std::map<std::size_t, std::vector<double>> by_k;
  for (const auto& r : t.rows) by_k[std::stoul(r.setting)].push_back(r.knn);
  if (!by_k.count(64) || !by_k.count(2048)) return {false, "missing sweep runs"};
  std::map<std::size_t, double> mean;
  std::string detail;
  for (auto& [k, v] : by_k) {
    mean[k] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    detail += fmt("K=%zu %.4f; ", k, mean[k]);
  }
  std::size_t best = mean.begin()->first;
  for (auto& [k, m] : mean) {
    if (m > mean[best]) best = k;
  }
  detail += fmt("best K %zu", best);
  return {mean[2048] >= mean[64] - 0.01 && best >= 512, detail};
}

Outcome criterion_6(const Options&) {
  const TrainConfig p = full_scale_preset();
  const double steps_per_epoch =
      std::floor(static_cast<double>(p.data.blobs.classes * p.data.blobs.per_class) / static_cast<double>(p.batch_size));
  const double total = static_cast<double>(p.epochs) * std::max(1.0, steps_per_epoch);
  bool ok = true;
  for (auto [start, end] : {std::pair{p.lr, p.lr_end}, std::pair{p.wd_start, p.wd_end}, std::pair{p.ema_start, p.ema_end}}) {
    const ScheduleSpec s{ScheduleKind::CosineDecay, start, end, 1.0};
    ok = ok && eval_schedule(s, 0, total) == start && eval_schedule(s, total, total) == end;
  }
  ok = ok && p.tau_t_start == 0.04 && p.tau_t_end == 0.07 && p.tau_t_warmup_epochs == 30;
  ok = ok && teacher_temperature(0, p.tau_t_warmup_epochs, p.tau_t_start, p.tau_t_end) == 0.04;
  for (std::size_t e = 30; e < p.epochs; ++e) {
    ok = ok && teacher_temperature(static_cast<double>(e), p.tau_t_warmup_epochs, p.tau_t_start, p.tau_t_end) == 0.07;
  }
  return {ok, fmt("lr %g->%g, wd %g->%g, momentum %g->%g exact; tau_t 0.04 at epoch 0, 0.07 from epoch 30", p.lr,
                  p.lr_end, p.wd_start, p.wd_end, p.ema_start, p.ema_end)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_7(const Options& opt) {
  TrainConfig c = load_config(opt.desk_config);
  c.epochs = 6;
  c.checkpoint_every = 3;
  c.log_every = 5;
  const fs::path root = fs::path(opt.work_dir) / "determinism";
  fs::remove_all(root);
  c.out_dir = (root / "a").string();
  const TrainResult a = run_training(c);
  c.out_dir = (root / "b").string();
  run_training(c);
  const std::string ja = slurp(root / "a" / "metrics.jsonl");
  const bool identical = !ja.empty() && ja == slurp(root / "b" / "metrics.jsonl");

  c.out_dir = (root / "resumed").string();
  TrainOptions opts;
  opts.resume_path = (root / "a" / "checkpoint_e0003.bin").string();
  const TrainResult r = run_training(c, opts);
  double worst = r.records.empty() ? 1.0 : 0.0;
  const std::size_t offset = a.records.size() - std::min(a.records.size(), r.records.size());
  for (std::size_t i = 0; i < r.records.size() && offset + i < a.records.size(); ++i) {
    const auto& x = a.records[offset + i];
    const auto& y = r.records[i];
    if (x.step != y.step || x.epoch != y.epoch) worst = 1.0;
    for (auto [u, v] : {std::pair{x.loss, y.loss}, std::pair{x.lr, y.lr}, std::pair{x.wd, y.wd},
                        std::pair{x.tau_t, y.tau_t}, std::pair{x.ema_momentum, y.ema_momentum},
                        std::pair{x.diagnostics.feature_std, y.diagnostics.feature_std},
                        std::pair{x.diagnostics.mean_target_entropy, y.diagnostics.mean_target_entropy},
                        std::pair{x.diagnostics.entropy_ratio, y.diagnostics.entropy_ratio},
                        std::pair{x.diagnostics.effective_rank, y.diagnostics.effective_rank}}) {
      worst = std::max(worst, std::abs(u - v));
    }
    if (x.diagnostics.collapsed != y.diagnostics.collapsed) worst = 1.0;
  }
  return {identical && worst <= 1e-12,
          fmt("same-seed JSONL %s; resumed %zu records, max field difference %.2e",
              identical ? "byte-identical" : "DIFFERS", r.records.size(), worst)};
}

Outcome criterion_8(const Options&) {
  Rng rng(2);
  int knn_mismatch = 0;
  for (int k : {1, 20, 200}) {
    Mat train = oracle::unit_rows(rng, 200, 8);
    Mat test = oracle::unit_rows(rng, 200, 8);
    auto labels = oracle::random_labels(rng, 200, 5);
    knn_mismatch += knn_predict(train, labels, test, KnnConfig{k, 0.07}) != oracle::naive_knn(train, labels, test, k, 0.07);
  }
  double worst_label = 0.0;
  Rng lrng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto u = oracle::nondegenerate_labels(lrng, 20);
    auto v = oracle::nondegenerate_labels(lrng, 20);
    const auto s = compare_labelings(u, v);
    const auto o = oracle::labeling_scores(u, v);
    worst_label = std::max({worst_label, std::abs(s.nmi - static_cast<double>(o.nmi)),
                            std::abs(s.ami - static_cast<double>(o.ami)), std::abs(s.ari - static_cast<double>(o.ari))});
  }
  double worst_adam = 0.0;
  Rng arng(4);
  for (double wd : {0.0, 0.05}) {
    std::vector<double> param{0.7}, m{0.0}, v{0.0};
    oracle::ScalarAdamW ref{0.7};
    for (std::uint64_t t = 1; t <= 100; ++t) {
      const double g = standard_normal(arng);
      const double lr = 1e-2 * (1.0 + 0.5 * std::sin(static_cast<double>(t)));
      std::vector<double> grad{g};
      adamw_update(param, grad, m, v, t, lr, wd, AdamWHyper{});
      ref.step(g, lr, wd);
      worst_adam = std::max(worst_adam, std::abs(param[0] - ref.p));
    }
  }
  return {knn_mismatch == 0 && worst_label <= 1e-9 && worst_adam <= 1e-12,
          fmt("k-NN mismatches %d/3 k values on 200 points; NMI/AMI/ARI max error %.2e; AdamW max error %.2e",
              knn_mismatch, worst_label, worst_adam)};
}

Outcome criterion_9(const Options& opt) {
  const RunTable t = desk_runs(opt);
  int tripped = 0, seen = 0;
  for (const auto& r : t.rows) {
    if (r.setting != "stochastic") continue;
    ++seen;
    tripped += r.collapsed_any;
  }
  return {seen == 3 && tripped == 0, fmt("collapse flag tripped in %d of %d stochastic runs", tripped, seen)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  Options opt;
  std::vector<int> selected;
  std::vector<int> known_gaps;
  std::string train;
  app.add_option("-c,--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--known-gap", known_gaps, "Criteria whose failure exits with 77");
  app.add_option("--train", train, "Retrain cached runs: desk | sweep")->check(CLI::IsMember({"desk", "sweep"}));
  app.add_option("--work-dir", opt.work_dir, "Directory for training runs");
  app.add_option("--config", opt.desk_config, "Desk config");
  app.add_option("--sweep-epochs", opt.sweep_epochs, "Epochs per memory-sweep run");
  app.add_flag("-v,--verbose", opt.verbose);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(opt.work_dir);

  try {
    if (train == "desk") {
      fs::remove(opt.work_dir + "/desk.csv");
      desk_runs(opt);
    } else if (train == "sweep") {
      fs::remove(opt.work_dir + "/sweep.csv");
      sweep_runs(opt);
    }
    if (!train.empty() && selected.empty()) return 0;

    const std::vector<std::function<Outcome(const Options&)>> criteria{
        criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
        criterion_6, criterion_7, criterion_8, criterion_9};
    if (selected.empty()) {
      selected.resize(9);
      std::iota(selected.begin(), selected.end(), 1);
    }
    std::set<int> failed;
    for (int c : selected) {
      Outcome o;
      try {
        o = criteria[static_cast<std::size_t>(c - 1)](opt);
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
      std::printf("criterion %d: %s  %s\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str());
      std::fflush(stdout);
      if (!o.pass) failed.insert(c);
    }
    if (failed.empty()) return 0;
    const bool all_known = std::all_of(failed.begin(), failed.end(), [&](int c) {
      return std::find(known_gaps.begin(), known_gaps.end(), c) != known_gaps.end();
    });
    return all_known ? 77 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
