#pragma once

// Baseline sparse autoencoders: ReLU (L1 penalty), TopK, and BatchTopK.
//
//   pre  = W_enc (x - b_dec) + b_enc
//   z    = relu(pre) | topk(pre) | batchtopk(pre)
//   xhat = W_dec z + b_dec
//
// Loss is the per-token mean of ||x - xhat||^2, plus lambda * mean ||z||_1 for
// the ReLU kind. Gradients treat the TopK/BatchTopK selection as fixed and use
// subgradient 0 at 0 for ReLU.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfa/params.hpp"

namespace tfa {

enum class SaeKind { kRelu, kTopK, kBatchTopK };

std::string to_string(SaeKind kind);
SaeKind sae_kind_from_string(const std::string& s);

struct SaeModel {
  SaeKind kind = SaeKind::kTopK;
  std::size_t k = 1;
  double lambda = 1e-3;
  Eigen::MatrixXd w_dec;  // n x M
  Eigen::VectorXd b_dec;  // n
  Eigen::MatrixXd w_enc;  // M x n
  Eigen::VectorXd b_enc;  // M

  std::size_t input_dim() const { return static_cast<std::size_t>(w_dec.rows()); }
  std::size_t latents() const { return static_cast<std::size_t>(w_dec.cols()); }

  std::vector<ParamView> params();
  /// Same shapes, all zeros.
  SaeModel zeros_like() const;
  void check_shapes() const;
};

/// Random unit decoder columns, W_enc = W_dec^T, b_enc = 0, b_dec = `mean`
/// (or zero).
SaeModel init_sae(SaeKind kind, std::size_t n, std::size_t latents, std::size_t k, double lambda,
                  std::uint64_t seed, const std::optional<Eigen::VectorXd>& mean = std::nullopt);

Eigen::MatrixXd sae_preactivations(const SaeModel& m, const Eigen::MatrixXd& x);

/// Single-token encode. For BatchTopK this is the one-token batch, i.e. TopK.
Eigen::VectorXd encode(const SaeModel& m, const Eigen::VectorXd& x);

struct SaeEncoding {
  Eigen::MatrixXd pre;
  Eigen::MatrixXd codes;
  std::size_t shortfall = 0;
};

/// Encodes a batch of tokens (rows). BatchTopK selects across the batch.
SaeEncoding encode_batch(const SaeModel& m, const Eigen::MatrixXd& x);

Eigen::MatrixXd decode(const SaeModel& m, const Eigen::MatrixXd& codes);
Eigen::VectorXd decode(const SaeModel& m, const Eigen::VectorXd& code);

struct SaeLoss {
  double total = 0.0;
  double mse = 0.0;       // mean over tokens of ||x - xhat||^2
  double penalty = 0.0;   // lambda * mean ||z||_1 (ReLU only)
  double nmse = 0.0;
  double mean_l0 = 0.0;
  std::size_t shortfall = 0;
};

SaeLoss sae_loss(const SaeModel& m, const Eigen::MatrixXd& x);

struct SaeGradient {
  SaeLoss loss;
  SaeModel grad;  // parameter gradients, same shapes as the model
};

SaeGradient sae_backward(const SaeModel& m, const Eigen::MatrixXd& x);

struct ReconstructionMetrics {
  double nmse = 0.0;
  double explained_variance = 0.0;
};

/// nmse = sum ||x - xhat||^2 / sum ||x||^2;
/// EV = 1 - sum_d var(x_d - xhat_d) / sum_d var(x_d), variances over rows.
ReconstructionMetrics reconstruction_metrics(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat);

double nmse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat);

}  // namespace tfa
