#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "massl/memory.hpp"
#include "massl/numkernel.hpp"

namespace massl {

struct LossConfig {
  double tau_s = 0.1;
  double tau_t = 0.04;
  std::size_t block_size = 256;
  SamplingStrategy strategy = SamplingStrategy::Stochastic;
};

struct LossReport {
  double loss = 0.0;
  /// ∂loss/∂z for each student view, shaped like that view's projections.
  std::vector<Mat> grads;
  /// Target entropy averaged with the same weights as the loss (pairs, blocks, rows).
  double mean_target_entropy = 0.0;
  std::size_t pair_count = 0;
};

/// One distribution per block: softmax(cos(z, M_b) / tau).
std::vector<Dist> view_memory_dists(const UnitVec& z, const BlockPlan& plan, const Memory& mem,
                                    double tau);

/// Memory-block consistency loss.
///
/// Student view i is paired with every teacher view j except j == i (the same
/// global view seen by both branches). For each pair, block and batch row the
/// term is H(p_t^{j,b}, p_s^{i,b}) with p = softmax(cos(z, M_b) / tau); the loss
/// is the mean over all of those terms. Gradients flow to the student views
/// only.
LossReport massl_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                      const Memory& mem, const BlockPlan& plan, const LossConfig& cfg);

/// Same as above, on a memory already permuted into plan order (see
/// Memory::gather_plan) with consecutive blocks of `cfg.block_size` rows.
LossReport massl_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                      const Mat& plan_memory, const LossConfig& cfg);

}  // namespace massl
