#include "massl/memory.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "massl/errors.hpp"
#include "massl/numkernel.hpp"

namespace massl {

namespace {

void store_row(Mat& slots, std::size_t at, const Eigen::Ref<const RowVec>& row) {
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    slots(static_cast<Eigen::Index>(at), c) = static_cast<double>(static_cast<float>(row[c]));
  }
}

}  // namespace

std::string_view to_string(SamplingStrategy s) noexcept {
  return s == SamplingStrategy::Stochastic ? "stochastic" : "blockwise";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
  if (name == "stochastic" || name == "Stochastic") return SamplingStrategy::Stochastic;
  if (name == "blockwise" || name == "Blockwise") return SamplingStrategy::Blockwise;
  fail(ErrorKind::ConfigError, "unknown sampling strategy '" + std::string(name) + "'");
}

std::vector<std::size_t> BlockPlan::flattened() const {
  std::vector<std::size_t> out;
  out.reserve(block_count() * block_size());
  for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
  return out;
}

BlockPlan sample_blocks(std::size_t capacity, std::size_t block_size, SamplingStrategy strategy,
                        Rng& rng) {
  if (block_size < 2 || capacity == 0 || capacity % block_size != 0) {
    fail(ErrorKind::IndivisibleBlockSize, "block size " + std::to_string(block_size) +
                                              " must be >= 2 and divide memory size " +
                                              std::to_string(capacity));
  }
  std::vector<std::size_t> order(capacity);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (strategy == SamplingStrategy::Stochastic) {
    for (std::size_t i = capacity - 1; i > 0; --i) {
      std::swap(order[i], order[uniform_index(rng, i + 1)]);
    }
  }
  BlockPlan plan;
  plan.strategy = strategy;
  const std::size_t count = capacity / block_size;
  plan.blocks.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(b * block_size);
    plan.blocks.emplace_back(first, first + static_cast<std::ptrdiff_t>(block_size));
  }
  return plan;
}

Memory::Memory(std::size_t capacity, std::size_t dim, std::uint64_t seed) {
  if (capacity < 1 || dim < 2) {
    fail(ErrorKind::InvalidShape, "memory needs K >= 1 and D >= 2, got K=" +
                                      std::to_string(capacity) + " D=" + std::to_string(dim));
  }
  Rng rng = make_rng(seed, {0x6d656d6fULL});
  slots_.resize(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim));
  ages_.resize(capacity);
  Vec v(static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < capacity; ++k) {
    double n = 0.0;
    do {
      for (Eigen::Index c = 0; c < v.size(); ++c) v[c] = standard_normal(rng);
      n = v.norm();
    } while (n <= kNearZeroNorm);
    store_row(slots_, k, (v / n).transpose());
    ages_[k] = k;
  }
  inserted_ = capacity;
}

Memory Memory::restore(Mat slots, std::vector<std::uint64_t> ages, std::size_t cursor,
                       std::uint64_t inserted) {
  if (slots.rows() < 1 || slots.cols() < 2 || ages.size() != static_cast<std::size_t>(slots.rows()) ||
      cursor >= ages.size()) {
    fail(ErrorKind::InvalidShape, "inconsistent serialized memory");
  }
  for (Eigen::Index r = 0; r < slots.rows(); ++r) {
    if (std::abs(slots.row(r).norm() - 1.0) > kUnitNormTolerance) {
      fail(ErrorKind::NotUnitNorm, "serialized memory slot " + std::to_string(r) + " is not unit-norm");
    }
  }
  Memory m;
  m.slots_ = std::move(slots);
  m.ages_ = std::move(ages);
  m.cursor_ = cursor;
  m.inserted_ = inserted;
  return m;
}

void Memory::enqueue(const Mat& batch) {
  const auto n = static_cast<std::size_t>(batch.rows());
  if (n > capacity()) {
    fail(ErrorKind::BatchTooLarge, "batch of " + std::to_string(n) + " exceeds memory size " +
                                       std::to_string(capacity()));
  }
  if (static_cast<std::size_t>(batch.cols()) != dim()) {
    fail(ErrorKind::DimMismatch, "batch dim " + std::to_string(batch.cols()) +
                                     " != memory dim " + std::to_string(dim()));
  }
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const double norm = batch.row(r).norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
      fail(ErrorKind::NotUnitNorm, "row " + std::to_string(r) + " has norm " + std::to_string(norm));
    }
  }
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    store_row(slots_, cursor_, batch.row(r));
    ages_[cursor_] = inserted_++;
    cursor_ = (cursor_ + 1) % capacity();
  }
}

Mat Memory::gather(std::span<const std::size_t> block) const {
  Mat out(static_cast<Eigen::Index>(block.size()), slots_.cols());
  for (std::size_t j = 0; j < block.size(); ++j) {
    if (block[j] >= capacity()) {
      fail(ErrorKind::IndexOutOfRange, "index " + std::to_string(block[j]) + " outside memory of size " +
                                           std::to_string(capacity()));
    }
    out.row(static_cast<Eigen::Index>(j)) = slots_.row(static_cast<Eigen::Index>(block[j]));
  }
  return out;
}

Mat Memory::gather_plan(const BlockPlan& plan) const {
  const auto flat = plan.flattened();
  if (flat.size() != capacity()) {
    fail(ErrorKind::InvalidShape, "plan covers " + std::to_string(flat.size()) +
                                      " indices, memory has " + std::to_string(capacity()));
  }
  return gather(flat);
}

}  // namespace massl
