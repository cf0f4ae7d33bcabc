#include "tfa/sparsity.hpp"

#include <algorithm>
#include <numeric>

namespace tfa {

Eigen::MatrixXd relu(const Eigen::MatrixXd& pre) { return pre.cwiseMax(0.0); }

Selection topk_rows(const Eigen::MatrixXd& pre, std::size_t k) {
  Selection out{Eigen::MatrixXd::Zero(pre.rows(), pre.cols()), 0};
  std::vector<Eigen::Index> idx;
  for (Eigen::Index r = 0; r < pre.rows(); ++r) {
    idx.clear();
    for (Eigen::Index c = 0; c < pre.cols(); ++c) {
      if (pre(r, c) > 0.0) idx.push_back(c);
    }
    if (idx.size() < k) ++out.shortfall;
    std::size_t keep = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        if (pre(r, a) != pre(r, b)) return pre(r, a) > pre(r, b);
                        return a < b;
                      });
    for (std::size_t j = 0; j < keep; ++j) out.codes(r, idx[j]) = pre(r, idx[j]);
  }
  return out;
}

Selection batch_topk(const Eigen::MatrixXd& pre, std::size_t k) {
  Selection out{Eigen::MatrixXd::Zero(pre.rows(), pre.cols()), 0};
  // Column-major linear index orders by (col, row); we want (row, col).
  std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
  for (Eigen::Index r = 0; r < pre.rows(); ++r) {
    for (Eigen::Index c = 0; c < pre.cols(); ++c) {
      if (pre(r, c) > 0.0) idx.emplace_back(r, c);
    }
  }
  std::size_t budget = static_cast<std::size_t>(pre.rows()) * k;
  std::size_t keep = std::min(budget, idx.size());
  out.shortfall = budget - keep;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](const auto& a, const auto& b) {
                      double va = pre(a.first, a.second);
                      double vb = pre(b.first, b.second);
                      if (va != vb) return va > vb;
                      return a < b;
                    });
  for (std::size_t j = 0; j < keep; ++j) {
    out.codes(idx[j].first, idx[j].second) = pre(idx[j].first, idx[j].second);
  }
  return out;
}

std::vector<std::size_t> support_of(const Eigen::Ref<const Eigen::RowVectorXd>& code) {
  std::vector<std::size_t> s;
  for (Eigen::Index j = 0; j < code.size(); ++j) {
    if (code(j) != 0.0) s.push_back(static_cast<std::size_t>(j));
  }
  return s;
}

Eigen::VectorXd row_l0(const Eigen::MatrixXd& codes) {
  return (codes.array() != 0.0).cast<double>().rowwise().sum();
}

}  // namespace tfa
