#pragma once

#include <cstdint>
#include <string>

#include "massl/config.hpp"
#include "massl/memory.hpp"
#include "massl/model.hpp"
#include "massl/optim.hpp"

namespace massl {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'S', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue training bit-exactly from `step`.
///
/// Every random stream in training is derived from (config seed, epoch, batch,
/// view) or (config seed, step), so the step counter plus the seed is the full
/// RNG state.
struct Checkpoint {
  TrainConfig config;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t rng_seed = 0;
  ModelParams student;
  ModelParams teacher;
  AdamWState optimizer;
  Memory memory{1, 2, 0};
};

/// Little-endian binary layout:
///   "MSSL" | u32 version | u32 n + n bytes of config JSON
///   | u64 step | u64 epoch | u64 rng_seed
///   | u32 tensor count, then per tensor:
///       u32 n + name | u8 dtype (0 = f32, 1 = f64) | u32 rank | u64 dims[rank] | data
///   | u64 adam step | f64 beta1, beta2, eps
///   | memory: u64 K | u64 D | u64 cursor | u64 inserted | u64 ages[K] | f32 slots[K*D]
/// Model and optimizer tensors are f64 so that resumed training matches an
/// uninterrupted run exactly; memory slots are already single-precision values.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace massl
