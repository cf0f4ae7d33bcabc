#pragma once

// Temporal-structure and representation-geometry measurements.
//
// Code and activation matrices are T x dim with one row per token.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "tfa/activation_store.hpp"

namespace tfa {

/// Gram U-statistic estimate of intrinsic dimension, (M^2 - M) / (|G|_F^2 - M),
/// for M unit-norm sample rows. Mutually orthogonal samples give +infinity.
double ustat(const Eigen::MatrixXd& samples);

/// Positions reached by at least two sequences.
std::vector<std::size_t> shared_positions(const ActivationSet& set);

/// U-statistic at each position across the sequences long enough to reach it.
/// Rows are unit-normalized first.
std::vector<double> ustat_curve(const ActivationSet& set, const std::vector<std::size_t>& positions);

struct AutocorrMap {
  std::vector<std::size_t> lags;
  std::vector<std::size_t> positions;
  Eigen::MatrixXd values;  // lags x positions
};

/// Entry (w, t) is the mean over sequences of cos(x_t, x_{t-w}). Positions
/// default to every t from the largest lag to the shortest length minus one.
AutocorrMap autocorr_map(const ActivationSet& set, const std::vector<std::size_t>& lags,
                         std::vector<std::size_t> positions = {});

/// Entry (i, j) is the mean over sequences of cos(x_i, x_j), for positions
/// below the shortest length. Zero rows have similarity 0.
Eigen::MatrixXd position_similarity(const ActivationSet& set);

/// Replaces every diagonal |i - j| = k of a square matrix with its mean.
Eigen::MatrixXd diagonal_mean_surrogate(const Eigen::MatrixXd& s);

/// Fraction of the across-sample variance of x_t captured by projecting each
/// sample onto the row space of its own context x_{t-w} .. x_{t-1}. All rows
/// are centered by the across-sample mean of x_t.
double context_projection_ev(const ActivationSet& set, std::size_t t, std::size_t w);

/// (tr C)^2 / tr(C^2) for the second-moment matrix C of the rows.
double effective_rank(const Eigen::MatrixXd& codes);

/// Same ratio for a given symmetric second-moment or covariance matrix.
double effective_rank_of_moment(const Eigen::MatrixXd& c);

/// Centered linear CKA, |Y^T X|_F^2 / (|X^T X|_F |Y^T Y|_F).
double linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct SimilarityMatrix {
  Eigen::MatrixXd values;
  bool centered = false;
};

/// Pairwise cosine similarity of rows, optionally after subtracting the row
/// mean. Rows that are zero (relative to the largest input row) have
/// similarity 0 with everything, themselves included.
SimilarityMatrix cosine_similarity_matrix(const Eigen::MatrixXd& codes, bool center);

/// Path length over endpoint distance.
double tortuosity(const Eigen::MatrixXd& path);

enum class FourierCutoff { kEqualEnergy, kTenthNyquist };

struct FourierSplit {
  Eigen::MatrixXd slow;  // mean plus frequencies below the cutoff
  Eigen::MatrixXd fast;  // everything else; slow + fast == input
  std::size_t cutoff = 0;
  double slow_energy = 0.0;  // spectral energy below the cutoff, mean excluded
  double total_energy = 0.0;
};

/// Per-dimension DFT over time with one shared cutoff frequency index. In
/// equal-energy mode the cutoff is the smallest index whose cumulative energy
/// (frequencies 1..cutoff, pooled over dimensions) reaches half the total. In
/// tenth-Nyquist mode frequencies up to 0.1 * T/2 are slow.
FourierSplit fourier_split(const Eigen::MatrixXd& sequence,
                           FourierCutoff mode = FourierCutoff::kEqualEnergy);

/// Eigenvalues of a symmetric kernel, descending, normalized to sum 1.
Eigen::VectorXd kernel_spectrum(const Eigen::MatrixXd& k);

struct SwitchReport {
  double rate = 0.0;
  std::vector<std::size_t> positions;  // t where support(t) != support(t + 1)
};

SwitchReport support_switch_rate(const Eigen::MatrixXd& codes);

struct PcaResult {
  Eigen::MatrixXd projection;  // T x k
  Eigen::MatrixXd basis;       // dim x k, orthonormal columns
  Eigen::VectorXd ratios;      // explained variance ratios, descending
};

PcaResult pca_project(const Eigen::MatrixXd& codes, std::size_t k);

}  // namespace tfa
