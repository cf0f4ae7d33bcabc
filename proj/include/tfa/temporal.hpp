#pragma once

// Temporal Feature Analyzer: a predictive code obtained by causal attention
// over past latents, and a sparse novel code for what the prediction misses.
//
// For one sequence with rows x_t (t = 0..T-1) and u_t = x_t - b_dec:
//   v_t    = relu(D_p^T u_t)
//   q_t    = W_Q v_t,  k_t = W_K v_t,  val_t = W_V v_t   (W_V = I by default)
//   z_p,0  = 0;  z_p,t = sum_{s<t} softmax_s(q_t . k_s / sqrt(d)) val_s
//   z_n,t  = select(relu(D_n^T (u_t - D_p z_p,t)))      (TopK or BatchTopK)
//   xhat_t = b_dec + D_p z_p,t + D_n z_n,t
// D_p and D_n are the same matrix unless the split-dictionary mode is on.
// BatchTopK selects across every token of the sequences passed together.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfa/params.hpp"

namespace tfa {

enum class NovelKind { kTopK, kBatchTopK };
enum class ValueMode { kIdentity, kLearned };

std::string to_string(NovelKind kind);
std::string to_string(ValueMode mode);
NovelKind novel_kind_from_string(const std::string& s);
ValueMode value_mode_from_string(const std::string& s);

struct TemporalModel {
  NovelKind novel_kind = NovelKind::kBatchTopK;
  ValueMode value_mode = ValueMode::kIdentity;
  std::size_t k = 4;          // novel sparsity budget
  std::size_t d_attn = 64;
  bool pred_only = false;
  bool split_dictionary = false;

  Eigen::MatrixXd dict;        // n x M; predictive (and novel, unless split)
  Eigen::MatrixXd dict_novel;  // n x M when split, else empty
  Eigen::VectorXd b_dec;       // n
  Eigen::MatrixXd w_q;         // d_attn x M
  Eigen::MatrixXd w_k;         // d_attn x M
  Eigen::MatrixXd w_v;         // M x M when learned, else empty

  std::size_t input_dim() const { return static_cast<std::size_t>(dict.rows()); }
  std::size_t latents() const { return static_cast<std::size_t>(dict.cols()); }
  const Eigen::MatrixXd& novel_dict() const { return split_dictionary ? dict_novel : dict; }

  std::vector<ParamView> params();
  TemporalModel zeros_like() const;
  void check_shapes() const;
};

struct TemporalInit {
  std::size_t n = 0;
  std::size_t latents = 0;
  std::size_t k = 4;
  std::size_t d_attn = 64;
  NovelKind novel_kind = NovelKind::kBatchTopK;
  ValueMode value_mode = ValueMode::kIdentity;
  bool pred_only = false;
  bool split_dictionary = false;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> mean;  // initial b_dec
};

/// Random unit dictionary columns; W_Q, W_K Gaussian with std 1/sqrt(M);
/// learned W_V starts at the identity.
TemporalModel init_temporal(const TemporalInit& init);

/// v = relu(D^T (x - b_dec)) for each row.
Eigen::MatrixXd encode_latent(const TemporalModel& m, const Eigen::MatrixXd& x);

struct PredictiveCode {
  Eigen::MatrixXd z;     // T x M
  Eigen::MatrixXd attn;  // T x T, row t has weights over s < t; row 0 is zero
};

/// Causal attention over latent rows v (T x M).
PredictiveCode predictive_code(const TemporalModel& m, const Eigen::MatrixXd& v);

/// Pre-activations D_n^T (x - b_dec - D_p z_p) per row.
Eigen::MatrixXd novel_preactivations(const TemporalModel& m, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& z_p);

/// Novel codes for one token batch using the model's sparsity rule.
Eigen::MatrixXd novel_code(const TemporalModel& m, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& z_p);

struct TemporalCodes {
  Eigen::MatrixXd z_p;     // T x M
  Eigen::MatrixXd z_n;     // T x M
  Eigen::MatrixXd attn;    // T x T
  Eigen::MatrixXd xhat_p;  // b_dec + D_p z_p
  Eigen::MatrixXd xhat_n;  // b_dec + D_n z_n
  Eigen::MatrixXd xhat;    // b_dec + D_p z_p + D_n z_n
};

/// Forward pass over several sequences at once (BatchTopK pools their tokens).
std::vector<TemporalCodes> tfa_forward(const TemporalModel& m,
                                       const std::vector<Eigen::MatrixXd>& sequences);
TemporalCodes tfa_forward(const TemporalModel& m, const Eigen::MatrixXd& sequence);

struct TemporalLoss {
  double total = 0.0;
  double mse = 0.0;          // mean over tokens of ||x - xhat||^2
  double nmse = 0.0;
  double pred_nmse = 0.0;    // ||x - xhat_p||^2 / ||x||^2
  double novel_nmse = 0.0;   // ||x - xhat_n||^2 / ||x||^2
  double mean_l0 = 0.0;      // novel code
  std::size_t shortfall = 0;
};

TemporalLoss tfa_loss(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences);

struct TemporalGradient {
  TemporalLoss loss;
  TemporalModel grad;
};

TemporalGradient tfa_backward(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences);

struct ComponentStats {
  std::optional<double> component_cosine;  // mean cos(xhat_p - b, xhat_n - b); absent if novel is 0
  std::optional<double> error_cosine;      // mean cos(x - xhat_p, x - xhat_n)
  double pred_norm_fraction = 0.0;         // mean ||xhat_p - b|| / (||xhat_p - b|| + ||xhat_n - b||)
  double novel_norm_fraction = 0.0;
  double nmse = 0.0;
  double pred_nmse = 0.0;
  double novel_nmse = 0.0;
  double explained_variance = 0.0;
  double pred_explained_variance = 0.0;
  double novel_explained_variance = 0.0;
  std::string value_mode;
};

ComponentStats component_stats(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences);

}  // namespace tfa
