#include "massl/trainer.hpp"

#include <chrono>
#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "massl/errors.hpp"
#include "massl/rng.hpp"

namespace massl {

namespace {

constexpr std::uint64_t kPlanStream = 0x706c616eULL;
constexpr Eigen::Index kEmbedChunk = 1024;

Mat stack_rows(const std::vector<const Mat*>& parts) {
  Eigen::Index rows = 0;
  for (const Mat* p : parts) rows += p->rows();
  Mat out(rows, parts.front()->cols());
  Eigen::Index at = 0;
  for (const Mat* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

std::vector<Mat> split_rows(const Mat& m, std::size_t parts) {
  const Eigen::Index each = m.rows() / static_cast<Eigen::Index>(parts);
  std::vector<Mat> out;
  out.reserve(parts);
  for (std::size_t i = 0; i < parts; ++i) out.emplace_back(m.middleRows(static_cast<Eigen::Index>(i) * each, each));
  return out;
}

}  // namespace

std::string MetricsRecord::to_jsonl() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["lr"] = lr;
  j["wd"] = wd;
  j["tau_t"] = tau_t;
  j["ema_momentum"] = ema_momentum;
  j["feature_std"] = diagnostics.feature_std;
  j["target_entropy"] = diagnostics.mean_target_entropy;
  j["entropy_ratio"] = diagnostics.entropy_ratio;
  j["effective_rank"] = diagnostics.effective_rank;
  j["collapsed"] = diagnostics.collapsed;
  return j.dump();
}

MetricsRecord MetricsRecord::from_jsonl(const std::string& line) {
  MetricsRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.step = j.at("step").get<std::uint64_t>();
    r.epoch = j.at("epoch").get<std::uint64_t>();
    r.loss = j.at("loss").get<double>();
    r.lr = j.at("lr").get<double>();
    r.wd = j.at("wd").get<double>();
    r.tau_t = j.at("tau_t").get<double>();
    r.ema_momentum = j.at("ema_momentum").get<double>();
    r.diagnostics.feature_std = j.at("feature_std").get<double>();
    r.diagnostics.mean_target_entropy = j.at("target_entropy").get<double>();
    r.diagnostics.entropy_ratio = j.at("entropy_ratio").get<double>();
    r.diagnostics.effective_rank = j.at("effective_rank").get<double>();
    r.diagnostics.collapsed = j.at("collapsed").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("bad metrics record: ") + e.what());
  }
  return r;
}

std::pair<Dataset, Dataset> load_datasets(const TrainConfig& cfg) {
  std::pair<Dataset, Dataset> out;
  if (!cfg.data.csv_path.empty()) {
    out.first = load_csv(cfg.data.csv_path);
    out.second = cfg.data.test_csv_path.empty() ? out.first : load_csv(cfg.data.test_csv_path);
  } else {
    out = make_blob_splits(cfg.data.blobs);
    if (out.second.size() == 0) out.second = out.first;
  }
  if (out.first.dim() != cfg.arch.input_dim || out.second.dim() != cfg.arch.input_dim) {
    fail(ErrorKind::ConfigError, "dataset dim " + std::to_string(out.first.dim()) +
                                     " does not match arch.input_dim " + std::to_string(cfg.arch.input_dim));
  }
  return out;
}

Mat embed(const ModelParams& params, const Mat& features) {
  Mat out(features.rows(), static_cast<Eigen::Index>(params.arch.output_dim));
  for (Eigen::Index at = 0; at < features.rows(); at += kEmbedChunk) {
    const Eigen::Index n = std::min(kEmbedChunk, features.rows() - at);
    out.middleRows(at, n) = forward(params, features.middleRows(at, n));
  }
  return out;
}

namespace {

// Per-step matrices are a few MB; keep them on the heap instead of fresh mmaps.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
  });
#endif
}

}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), memory_(1, 2, 0) {
  tune_allocator();
  cfg_.validate();
  load_data();
  student_ = init_params(cfg_.arch, cfg_.seed);
  teacher_ = student_;
  optimizer_ = make_adamw_state(student_, cfg_.adamw);
  memory_ = Memory(cfg_.memory_size, cfg_.arch.output_dim, cfg_.seed);
}

Trainer::Trainer(const Checkpoint& ckpt)
    : cfg_(ckpt.config),
      student_(ckpt.student),
      teacher_(ckpt.teacher),
      optimizer_(ckpt.optimizer),
      memory_(ckpt.memory),
      step_(ckpt.step) {
  tune_allocator();
  cfg_.validate();
  if (ckpt.rng_seed != cfg_.seed) fail(ErrorKind::ConfigError, "checkpoint RNG seed differs from its config");
  if (memory_.capacity() != cfg_.memory_size || memory_.dim() != cfg_.arch.output_dim) {
    fail(ErrorKind::DimMismatch, "checkpoint memory shape differs from its config");
  }
  load_data();
}

void Trainer::load_data() {
  auto [train, test] = load_datasets(cfg_);
  train_ = std::move(train);
  test_ = std::move(test);
  if (train_.size() < cfg_.batch_size) {
    fail(ErrorKind::ConfigError, "training set smaller than one batch");
  }
  steps_per_epoch_ = train_.size() / cfg_.batch_size;
  total_steps_ = steps_per_epoch_ * cfg_.epochs;
}

void Trainer::refresh_epoch_batches(std::uint64_t epoch) {
  if (batches_epoch_ == epoch) return;
  epoch_batches_ = batches(train_.size(), cfg_.batch_size, cfg_.seed, epoch);
  batches_epoch_ = epoch;
}

bool Trainer::is_log_step(std::uint64_t completed_step) const {
  const std::uint64_t every = cfg_.log_every == 0 ? steps_per_epoch_ : cfg_.log_every;
  return (completed_step + 1) % every == 0 || completed_step + 1 == total_steps_;
}

MetricsRecord Trainer::run_step() {
  if (finished()) fail(ErrorKind::OutOfRangeStep, "training already finished");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t s = step_;
  const std::uint64_t epoch = s / steps_per_epoch_;
  const std::uint64_t batch_index = s % steps_per_epoch_;
  refresh_epoch_batches(epoch);
  const auto& indices = epoch_batches_[batch_index];

  const ViewBatch views = make_views(train_, indices, cfg_.views, cfg_.seed, epoch, batch_index);
  std::vector<const Mat*> student_parts;
  std::vector<const Mat*> teacher_parts;
  for (const auto& v : views.global_views) {
    student_parts.push_back(&v);
    teacher_parts.push_back(&v);
  }
  for (const auto& v : views.local_views) student_parts.push_back(&v);

  ForwardCache cache;
  const Mat student_z = forward(student_, stack_rows(student_parts), &cache);
  const Mat teacher_z = forward(teacher_, stack_rows(teacher_parts));
  const std::vector<Mat> student_views = split_rows(student_z, student_parts.size());
  const std::vector<Mat> teacher_views = split_rows(teacher_z, teacher_parts.size());

  Rng plan_rng = make_rng(cfg_.seed, {kPlanStream, s});
  const BlockPlan plan = sample_blocks(cfg_.memory_size, cfg_.block_size, cfg_.sampling, plan_rng);
  const Mat plan_memory = memory_.gather_plan(plan);

  const double tau_t = teacher_temperature(static_cast<double>(epoch), cfg_.tau_t_warmup_epochs,
                                           cfg_.tau_t_start, cfg_.tau_t_end);
  const LossConfig lcfg{cfg_.tau_s, tau_t, cfg_.block_size, cfg_.sampling};
  const LossReport report = massl_loss(student_views, teacher_views, plan_memory, lcfg);
  const std::uint64_t inserted_at_loss = memory_.inserted();
  if (observer_) observer_({StepPhase::LossComputed, s, inserted_at_loss, &plan_memory}, *this);

  std::vector<const Mat*> grad_parts;
  for (const auto& g : report.grads) grad_parts.push_back(&g);
  const ParamGrads grads = backward(student_, cache, stack_rows(grad_parts));

  const double T = static_cast<double>(total_steps_);
  const double t = static_cast<double>(s);
  const double lr = eval_schedule({ScheduleKind::CosineDecay, cfg_.lr, cfg_.lr_end, 1.0}, t, T);
  const double wd = eval_schedule({ScheduleKind::CosineDecay, cfg_.wd_start, cfg_.wd_end, 1.0}, t, T);
  const double momentum = eval_schedule({ScheduleKind::CosineDecay, cfg_.ema_start, cfg_.ema_end, 1.0}, t, T);
  adamw_step(student_, grads, optimizer_, lr, wd);
  ema_update(teacher_, student_, momentum);

  if (cfg_.enqueue == EnqueuePolicy::OneGlobal) {
    memory_.enqueue(teacher_views[0]);
  } else {
    memory_.enqueue(stack_rows({&teacher_views[0], &teacher_views[1]}));
  }
  if (observer_) observer_({StepPhase::MemoryUpdated, s, inserted_at_loss, &plan_memory}, *this);
  ++step_;

  MetricsRecord rec;
  rec.step = s;
  rec.epoch = epoch;
  rec.loss = report.loss;
  rec.lr = lr;
  rec.wd = wd;
  rec.tau_t = tau_t;
  rec.ema_momentum = momentum;
  rec.diagnostics = collapse_diagnostics(report.mean_target_entropy, cfg_.block_size, teacher_views[0]);
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config = cfg_;
  c.step = step_;
  c.epoch = epoch();
  c.rng_seed = cfg_.seed;
  c.student = student_;
  c.teacher = teacher_;
  c.optimizer = optimizer_;
  c.memory = memory_;
  return c;
}

Mat Trainer::embed(const Mat& features) const {
  return massl::embed(cfg_.eval_teacher ? teacher_ : student_, features);
}

}  // namespace massl
