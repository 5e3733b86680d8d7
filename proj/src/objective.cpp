#include "massl/objective.hpp"

#include <cmath>
#include <string>

#include "massl/errors.hpp"

namespace massl {

namespace {

void check_views(std::span<const Mat> views, Eigen::Index rows, Eigen::Index dim, const char* side) {
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Mat& m = views[v];
    if (m.rows() != rows || m.cols() != dim) {
      fail(ErrorKind::MismatchedBatch, std::string(side) + " view " + std::to_string(v) + " is " +
                                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                           ", expected " + std::to_string(rows) + "x" +
                                           std::to_string(dim));
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double n = m.row(r).norm();
      if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitNormTolerance) {
        fail(ErrorKind::NotUnitNorm, std::string(side) + " view " + std::to_string(v) + " row " +
                                         std::to_string(r) + " has norm " + std::to_string(n));
      }
    }
  }
}

}  // namespace

std::vector<Dist> view_memory_dists(const UnitVec& z, const BlockPlan& plan, const Memory& mem,
                                    double tau) {
  std::vector<Dist> out;
  out.reserve(plan.block_count());
  for (const auto& block : plan.blocks) {
    out.push_back(tempered_softmax(cosine_scores(z, mem.gather(block)), tau));
  }
  return out;
}

LossReport massl_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                      const Memory& mem, const BlockPlan& plan, const LossConfig& cfg) {
  if (plan.block_size() != cfg.block_size) {
    fail(ErrorKind::InvalidShape, "plan block size differs from loss configuration");
  }
  return massl_loss(student_views, teacher_views, mem.gather_plan(plan), cfg);
}

LossReport massl_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                      const Mat& plan_memory, const LossConfig& cfg) {
  if (student_views.empty() || teacher_views.empty()) {
    fail(ErrorKind::EmptyViewSet, "need at least one student and one teacher view");
  }
  const auto S = student_views.size();
  const auto T = teacher_views.size();
  // Pairs (i, j) with i == j compare a global view with itself and are skipped.
  const std::size_t pairs = S * T - std::min(S, T);
  if (pairs == 0) fail(ErrorKind::EmptyViewSet, "no student/teacher view pair with i != j");

  const auto block = static_cast<Eigen::Index>(cfg.block_size);
  const Eigen::Index K = plan_memory.rows();
  if (block < 2 || K % block != 0) {
    fail(ErrorKind::IndivisibleBlockSize, "block size must be >= 2 and divide the memory size");
  }
  const Eigen::Index rows = student_views[0].rows();
  const Eigen::Index dim = plan_memory.cols();
  if (rows < 1) fail(ErrorKind::MismatchedBatch, "empty batch");
  check_views(student_views, rows, dim, "student");
  check_views(teacher_views, rows, dim, "teacher");

  const auto blocks = static_cast<double>(K / block);
  const double scale = 1.0 / (static_cast<double>(pairs) * blocks * static_cast<double>(rows));

  const Mat memory_t = plan_memory.transpose();
  // Rows are processed in small chunks so every intermediate stays in cache.
  const Eigen::Index chunk = std::min<Eigen::Index>(rows, 16);
  const auto St = static_cast<Eigen::Index>(S);
  const auto Tt = static_cast<Eigen::Index>(T);
  Mat zt(Tt * chunk, dim), zs(St * chunk, dim);
  Mat t_scores(Tt * chunk, K), s_scores(St * chunk, K);
  Mat log_q, q, log_p, p;
  Mat target_sum(chunk, K), paired(chunk, K);
  Mat grad_scores(St * chunk, K), grad_z(St * chunk, dim);
  std::vector<double> teacher_entropy(T, 0.0);

  LossReport report;
  report.pair_count = pairs;
  report.grads.assign(S, Mat(rows, dim));
  double loss = 0.0;
  for (Eigen::Index r0 = 0; r0 < rows; r0 += chunk) {
    const Eigen::Index c = std::min(chunk, rows - r0);
    if (c != chunk) {
      zt.resize(Tt * c, dim);
      zs.resize(St * c, dim);
      t_scores.resize(Tt * c, K);
      s_scores.resize(St * c, K);
      target_sum.resize(c, K);
      paired.resize(c, K);
      grad_scores.resize(St * c, K);
      grad_z.resize(St * c, dim);
    }
    for (Eigen::Index j = 0; j < Tt; ++j) zt.middleRows(j * c, c) = teacher_views[j].middleRows(r0, c);
    for (Eigen::Index i = 0; i < St; ++i) zs.middleRows(i * c, c) = student_views[i].middleRows(r0, c);

    t_scores.noalias() = zt * memory_t;
    segmented_softmax(t_scores, block, cfg.tau_t, log_q, &q);
    target_sum.setZero();
    for (Eigen::Index j = 0; j < Tt; ++j) {
      teacher_entropy[j] -= (q.middleRows(j * c, c).array() * log_q.middleRows(j * c, c).array()).sum();
      target_sum += q.middleRows(j * c, c);
    }

    s_scores.noalias() = zs * memory_t;
    segmented_softmax(s_scores, block, cfg.tau_s, log_p, &p);
    for (Eigen::Index i = 0; i < St; ++i) {
      // Targets of every teacher view except the coincident one.
      double partners = static_cast<double>(T);
      if (i < Tt) {
        paired = target_sum - q.middleRows(i * c, c);
        partners -= 1.0;
      } else {
        paired = target_sum;
      }
      loss -= (paired.array() * log_p.middleRows(i * c, c).array()).sum();
      // Σ_j (p_i - q_j) / tau_s, chained through s = z · m.
      grad_scores.middleRows(i * c, c) = (partners * p.middleRows(i * c, c) - paired) * (scale / cfg.tau_s);
    }
    grad_z.noalias() = grad_scores * plan_memory;
    for (Eigen::Index i = 0; i < St; ++i) report.grads[i].middleRows(r0, c) = grad_z.middleRows(i * c, c);
  }

  double entropy_total = 0.0;
  for (double h : teacher_entropy) entropy_total += h;
  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < S; ++i) entropy_sum += i < T ? entropy_total - teacher_entropy[i] : entropy_total;
  report.loss = loss * scale;
  report.mean_target_entropy = entropy_sum * scale;
  return report;
}

}  // namespace massl
