#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "massl/rng.hpp"
#include "massl/types.hpp"

namespace massl {

enum class SamplingStrategy { Stochastic, Blockwise };

std::string_view to_string(SamplingStrategy s) noexcept;
SamplingStrategy parse_sampling_strategy(std::string_view name);

/// A partition of the memory indices {0..K-1} into B blocks of N_b indices.
struct BlockPlan {
  std::vector<std::vector<std::size_t>> blocks;
  SamplingStrategy strategy = SamplingStrategy::Stochastic;

  std::size_t block_count() const noexcept { return blocks.size(); }
  std::size_t block_size() const noexcept { return blocks.empty() ? 0 : blocks.front().size(); }
  /// All indices, block after block.
  std::vector<std::size_t> flattened() const;
};

/// Stochastic: a uniform random permutation of {0..K-1} cut into consecutive
/// chunks of N_b. Blockwise: the contiguous slices {0..N_b-1}, {N_b..2N_b-1}, ...
/// and `rng` is left untouched.
BlockPlan sample_blocks(std::size_t capacity, std::size_t block_size, SamplingStrategy strategy,
                        Rng& rng);

/// Fixed-capacity FIFO ring of unit vectors.
///
/// Slots are written at `cursor()`, which then advances modulo K, so the slot
/// at the cursor always holds the oldest entry. Every write stamps the slot
/// with a monotonically increasing insertion id (its age). Slot values are
/// rounded to single precision on write so that a checkpoint holding them as
/// 32-bit floats restores the memory exactly.
class Memory {
 public:
  /// Pre-fills all K slots with normalized standard-normal draws; the initial
  /// fill counts as insertions 0..K-1 in slot order.
  Memory(std::size_t capacity, std::size_t dim, std::uint64_t seed);

  /// Rebuilds a memory from serialized state.
  static Memory restore(Mat slots, std::vector<std::uint64_t> ages, std::size_t cursor,
                        std::uint64_t inserted);

  std::size_t capacity() const noexcept { return static_cast<std::size_t>(slots_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(slots_.cols()); }
  std::size_t cursor() const noexcept { return cursor_; }
  /// Total number of insertions so far, including the initial fill.
  std::uint64_t inserted() const noexcept { return inserted_; }
  const Mat& slots() const noexcept { return slots_; }
  const std::vector<std::uint64_t>& ages() const noexcept { return ages_; }

  /// Replaces the N oldest slots with the rows of `batch`, in row order.
  void enqueue(const Mat& batch);

  /// Rows of the memory at `block` indices. The result is a copy.
  Mat gather(std::span<const std::size_t> block) const;

  /// The whole memory permuted into plan order: block b occupies rows
  /// [b*N_b, (b+1)*N_b).
  Mat gather_plan(const BlockPlan& plan) const;

 private:
  Memory() = default;

  Mat slots_;
  std::vector<std::uint64_t> ages_;
  std::size_t cursor_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace massl
