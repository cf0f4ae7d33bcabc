#pragma once

// Sparsity rules applied to pre-activation matrices (rows are tokens).
// Ties are broken by value descending, then by position ascending, so the
// selection is a deterministic function of the input.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace tfa {

struct Selection {
  Eigen::MatrixXd codes;     // same shape as the input; zero outside the kept set
  std::size_t shortfall = 0; // topk: rows with fewer than K positives; batch: B*K minus kept
};

/// max(0, pre) elementwise.
Eigen::MatrixXd relu(const Eigen::MatrixXd& pre);

/// Per row, keep the K largest strictly positive entries.
Selection topk_rows(const Eigen::MatrixXd& pre, std::size_t k);

/// Keep the rows * K largest strictly positive entries of the whole matrix.
Selection batch_topk(const Eigen::MatrixXd& pre, std::size_t k);

/// Indices of nonzero entries of a code vector, ascending.
std::vector<std::size_t> support_of(const Eigen::Ref<const Eigen::RowVectorXd>& code);

/// Nonzero count per row.
Eigen::VectorXd row_l0(const Eigen::MatrixXd& codes);

}  // namespace tfa
