#pragma once

// TFAM model checkpoints.
//
// Layout (little-endian):
//   "TFAM", u16 version (= 1), u16 flags (bit 0: optimizer state present)
//   u32 kind (0 relu, 1 topk, 2 batchtopk, 3 temporal, 4 temporal-pred-only)
//   u32 n, u32 latents, u32 k, f64 lambda
//   u32 d_attn, u32 novel_kind (0 topk, 1 batchtopk), u32 value_mode
//   (0 identity, 1 learned), u32 split_dictionary
//   u64 step, f64 norm_scale (0 when absent)
//   u32 tensor count, then per tensor:
//     u16 name length, name bytes, u32 rows, u32 cols, rows*cols f64 row-major
// Optimizer moments are stored as tensors named "adam_m/<param>" and
// "adam_v/<param>". A human-readable "<path>.meta.json" accompanies the file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tfa/model.hpp"

namespace tfa {

inline constexpr std::uint16_t kTfamVersion = 1;

struct AdamState {
  std::vector<Eigen::MatrixXd> m;  // first moments, ordered as params()
  std::vector<Eigen::MatrixXd> v;  // second moments
};

struct Checkpoint {
  AnyModel model;
  std::optional<double> norm_scale;
  std::uint64_t step = 0;
  std::optional<AdamState> adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tfa
