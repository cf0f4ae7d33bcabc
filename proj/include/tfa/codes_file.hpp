#pragma once

// TFAC latent-code files.
//
// Layout (little-endian):
//   "TFAC", u16 version (= 1), u16 flags (bit 0: predictive codes present)
//   u32 model kind (as in TFAM), u32 n_seq, u32 latents
//   n_seq x u32 sequence lengths
//   per token, in sequence order:
//     [latents x f32 dense predictive code]   when flag bit 0 is set
//     u32 nnz, then nnz x (u32 index, f32 value) with strictly increasing indices
// Values are stored as float32.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "tfa/model.hpp"

namespace tfa {

inline constexpr std::uint16_t kTfacVersion = 1;

struct CodeSet {
  ModelKind kind = ModelKind::kTopK;
  std::size_t latents = 0;
  std::vector<Eigen::MatrixXd> sparse;      // per sequence, T x latents (SAE codes or novel codes)
  std::vector<Eigen::MatrixXd> predictive;  // empty, or one T x latents matrix per sequence

  bool has_predictive() const { return !predictive.empty(); }
  void validate() const;
};

void save_codes(const CodeSet& codes, const std::filesystem::path& path);
CodeSet load_codes(const std::filesystem::path& path);

}  // namespace tfa
