#include "tfa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include <unsupported/Eigen/FFT>

#include "tfa/error.hpp"

namespace tfa {

namespace {

constexpr double kUnitTolerance = 1e-6;

double safe_cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Eigen::MatrixXd center_rows(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

std::size_t min_seq_length(const ActivationSet& set) {
  if (set.sequences.empty()) throw DataError("activation set is empty");
  return set.min_length();
}

}  // namespace

double ustat(const Eigen::MatrixXd& samples) {
  const auto m = samples.rows();
  if (m < 2) throw DataError("ustat needs at least two samples");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(samples.row(i).norm() - 1.0) > kUnitTolerance) {
      throw DataError("ustat samples must be unit norm (row " + std::to_string(i) + ")");
    }
  }
  Eigen::MatrixXd g = samples * samples.transpose();
  g.diagonal().setZero();
  double off = g.squaredNorm();
  double pairs = static_cast<double>(m) * static_cast<double>(m - 1);
  if (off <= pairs * 1e-24) return std::numeric_limits<double>::infinity();
  return pairs / off;
}

std::vector<std::size_t> shared_positions(const ActivationSet& set) {
  std::vector<std::size_t> lengths;
  for (const auto& s : set.sequences) lengths.push_back(static_cast<std::size_t>(s.rows()));
  std::sort(lengths.begin(), lengths.end(), std::greater<>());
  std::vector<std::size_t> out;
  if (lengths.size() < 2) return out;
  for (std::size_t t = 0; t < lengths[1]; ++t) out.push_back(t);
  return out;
}

std::vector<double> ustat_curve(const ActivationSet& set, const std::vector<std::size_t>& positions) {
  std::vector<double> out;
  out.reserve(positions.size());
  for (auto t : positions) {
    std::vector<Eigen::RowVectorXd> rows;
    for (const auto& s : set.sequences) {
      if (static_cast<std::size_t>(s.rows()) <= t) continue;
      Eigen::RowVectorXd r = s.row(static_cast<Eigen::Index>(t));
      double norm = r.norm();
      if (norm == 0.0) throw DataError("zero activation at position " + std::to_string(t));
      rows.push_back(r / norm);
    }
    if (rows.size() < 2) {
      throw DataError("position " + std::to_string(t) + " is reached by fewer than two sequences");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(set.dim));
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
    out.push_back(ustat(x));
  }
  return out;
}

AutocorrMap autocorr_map(const ActivationSet& set, const std::vector<std::size_t>& lags,
                         std::vector<std::size_t> positions) {
  if (lags.empty()) throw ConfigError("autocorr_map needs at least one lag");
  std::size_t min_len = min_seq_length(set);
  std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
  if (max_lag >= min_len) {
    throw DataError("lag " + std::to_string(max_lag) + " does not fit the shortest sequence (" +
                    std::to_string(min_len) + " tokens)");
  }
  if (positions.empty()) {
    for (std::size_t t = max_lag; t < min_len; ++t) positions.push_back(t);
  }
  for (auto t : positions) {
    if (t < max_lag || t >= min_len) {
      throw DataError("position " + std::to_string(t) + " outside [max lag, shortest length)");
    }
  }
  AutocorrMap out{lags, positions,
                  Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lags.size()),
                                        static_cast<Eigen::Index>(positions.size()))};
  const double b = static_cast<double>(set.sequences.size());
  for (std::size_t li = 0; li < lags.size(); ++li) {
    for (std::size_t pi = 0; pi < positions.size(); ++pi) {
      auto t = static_cast<Eigen::Index>(positions[pi]);
      auto w = static_cast<Eigen::Index>(lags[li]);
      double sum = 0.0;
      for (const auto& s : set.sequences) sum += safe_cosine(s.row(t), s.row(t - w));
      out.values(static_cast<Eigen::Index>(li), static_cast<Eigen::Index>(pi)) = sum / b;
    }
  }
  return out;
}

Eigen::MatrixXd position_similarity(const ActivationSet& set) {
  const auto len = static_cast<Eigen::Index>(min_seq_length(set));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(len, len);
  for (const auto& s : set.sequences) {
    Eigen::MatrixXd unit = s.topRows(len);
    for (Eigen::Index t = 0; t < len; ++t) {
      double nrm = unit.row(t).norm();
      if (nrm > 0.0) unit.row(t) /= nrm;
    }
    out.noalias() += unit * unit.transpose();
  }
  out /= static_cast<double>(set.sequences.size());
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd diagonal_mean_surrogate(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw DataError("diagonal_mean_surrogate needs a square matrix");
  const auto n = s.rows();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double upper = 0.0;
    double lower = 0.0;
    for (Eigen::Index i = 0; i + k < n; ++i) {
      upper += s(i, i + k);
      lower += s(i + k, i);
    }
    upper /= static_cast<double>(n - k);
    lower /= static_cast<double>(n - k);
    for (Eigen::Index i = 0; i + k < n; ++i) {
      out(i, i + k) = upper;
      out(i + k, i) = lower;
    }
  }
  return out;
}

double context_projection_ev(const ActivationSet& set, std::size_t t, std::size_t w) {
  if (w == 0) throw ConfigError("context window must be at least one token");
  if (w > t) throw DataError("context window " + std::to_string(w) + " reaches before position 0");
  std::vector<const Eigen::MatrixXd*> samples;
  for (const auto& s : set.sequences) {
    if (static_cast<std::size_t>(s.rows()) > t) samples.push_back(&s);
  }
  if (samples.size() < 2) {
    throw DataError("position " + std::to_string(t) + " is reached by fewer than two sequences");
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto d = static_cast<Eigen::Index>(set.dim);
  const auto ti = static_cast<Eigen::Index>(t);
  const auto wi = static_cast<Eigen::Index>(w);
  Eigen::MatrixXd targets(n, d);
  for (Eigen::Index b = 0; b < n; ++b) targets.row(b) = samples[static_cast<std::size_t>(b)]->row(ti);
  Eigen::RowVectorXd mu = targets.colwise().mean();
  Eigen::MatrixXd centered = targets.rowwise() - mu;
  Eigen::MatrixXd proj(n, d);
  for (Eigen::Index b = 0; b < n; ++b) {
    Eigen::MatrixXd ctx = samples[static_cast<std::size_t>(b)]->middleRows(ti - wi, wi).rowwise() - mu;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ctx, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double tol = sv.size() > 0 ? sv(0) * 1e-10 : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > tol) ++rank;
    Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
    Eigen::VectorXd x = centered.row(b).transpose();
    proj.row(b) = (v * (v.transpose() * x)).transpose();
  }
  double total = centered.squaredNorm();
  if (!(total > 0.0)) throw DataError("targets have zero variance at position " + std::to_string(t));
  return center_rows(proj).squaredNorm() / total;
}

double effective_rank(const Eigen::MatrixXd& codes) {
  double tr = codes.squaredNorm();
  if (!(tr > 0.0)) throw DataError("effective rank of an all-zero matrix");
  double tr2 = codes.rows() < codes.cols() ? (codes * codes.transpose()).squaredNorm()
                                           : (codes.transpose() * codes).squaredNorm();
  return tr * tr / tr2;
}

double effective_rank_of_moment(const Eigen::MatrixXd& c) {
  if (c.rows() != c.cols()) throw DataError("second-moment matrix must be square");
  double tr = c.trace();
  if (tr == 0.0) throw DataError("effective rank of a zero-trace matrix");
  return tr * tr / (c * c).trace();
}

double linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) throw DataError("linear_cka inputs have different row counts");
  Eigen::MatrixXd xc = center_rows(x);
  Eigen::MatrixXd yc = center_rows(y);
  double denom = (xc.transpose() * xc).norm() * (yc.transpose() * yc).norm();
  if (!(denom > 0.0)) throw DataError("linear_cka input has zero variance");
  return (yc.transpose() * xc).squaredNorm() / denom;
}

SimilarityMatrix cosine_similarity_matrix(const Eigen::MatrixXd& codes, bool center) {
  if (codes.rows() < 2) throw DataError("similarity matrix needs at least two rows");
  double scale = codes.rowwise().norm().maxCoeff();
  Eigen::MatrixXd x = center ? center_rows(codes) : codes;
  Eigen::VectorXd norms = x.rowwise().norm();
  double floor = scale * 1e-10;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (norms(i) <= floor || norms(i) == 0.0) {
      x.row(i).setZero();
    } else {
      x.row(i) /= norms(i);
    }
  }
  SimilarityMatrix out{x * x.transpose(), center};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).isZero(0.0)) out.values(i, i) = 1.0;
  }
  out.values = 0.5 * (out.values + out.values.transpose()).eval();
  return out;
}

double tortuosity(const Eigen::MatrixXd& path) {
  if (path.rows() < 2) throw DataError("tortuosity needs at least two points");
  double length = 0.0;
  for (Eigen::Index i = 0; i + 1 < path.rows(); ++i) length += (path.row(i + 1) - path.row(i)).norm();
  double chord = (path.row(path.rows() - 1) - path.row(0)).norm();
  if (chord <= length * 1e-12 || chord == 0.0) throw DataError("tortuosity of a path with coincident endpoints");
  return length / chord;
}

FourierSplit fourier_split(const Eigen::MatrixXd& sequence, FourierCutoff mode) {
  const auto t = sequence.rows();
  const auto n = sequence.cols();
  if (t < 4) throw DataError("fourier_split needs at least four time steps");
  const auto half = static_cast<std::size_t>(t / 2);
  auto band = [t](Eigen::Index k) { return static_cast<std::size_t>(std::min(k, t - k)); };

  Eigen::FFT<double> fft;
  std::vector<std::vector<std::complex<double>>> spectra(static_cast<std::size_t>(n));
  std::vector<double> energy(half + 1, 0.0);
  for (Eigen::Index c = 0; c < n; ++c) {
    std::vector<std::complex<double>> in(static_cast<std::size_t>(t));
    for (Eigen::Index i = 0; i < t; ++i) in[static_cast<std::size_t>(i)] = sequence(i, c);
    auto& out = spectra[static_cast<std::size_t>(c)];
    fft.fwd(out, in);
    for (Eigen::Index k = 1; k < t; ++k) energy[band(k)] += std::norm(out[static_cast<std::size_t>(k)]);
  }
  const double scale = 1.0 / static_cast<double>(t);
  double total = 0.0;
  for (std::size_t f = 1; f <= half; ++f) total += energy[f] * scale;

  FourierSplit out;
  out.total_energy = total;
  if (mode == FourierCutoff::kEqualEnergy) {
    out.cutoff = 1;
    double cum = 0.0;
    for (std::size_t f = 1; f <= half; ++f) {
      cum += energy[f] * scale;
      out.cutoff = f;
      if (cum >= 0.5 * total) break;
    }
  } else {
    out.cutoff = static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(t))) + 1;
  }
  for (std::size_t f = 1; f < out.cutoff; ++f) out.slow_energy += energy[f] * scale;

  out.slow.resize(t, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    auto spec = spectra[static_cast<std::size_t>(c)];
    for (Eigen::Index k = 0; k < t; ++k) {
      if (band(k) >= out.cutoff) spec[static_cast<std::size_t>(k)] = 0.0;
    }
    std::vector<std::complex<double>> back;
    fft.inv(back, spec);
    for (Eigen::Index i = 0; i < t; ++i) out.slow(i, c) = back[static_cast<std::size_t>(i)].real();
  }
  out.fast = sequence - out.slow;
  return out;
}

Eigen::VectorXd kernel_spectrum(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.rows() == 0) throw DataError("kernel must be a non-empty square matrix");
  double tol = 1e-9 * std::max(1.0, k.cwiseAbs().maxCoeff());
  if (((k - k.transpose()).cwiseAbs().array() > tol).any()) throw DataError("kernel is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = es.eigenvalues().reverse();
  double sum = ev.sum();
  if (!(std::abs(sum) > 0.0)) throw DataError("kernel has zero trace");
  return ev / sum;
}

SwitchReport support_switch_rate(const Eigen::MatrixXd& codes) {
  if (codes.rows() < 2) throw DataError("support switching needs at least two codes");
  SwitchReport out;
  for (Eigen::Index t = 0; t + 1 < codes.rows(); ++t) {
    bool same = ((codes.row(t).array() != 0.0) == (codes.row(t + 1).array() != 0.0)).all();
    if (!same) out.positions.push_back(static_cast<std::size_t>(t));
  }
  out.rate = static_cast<double>(out.positions.size()) / static_cast<double>(codes.rows() - 1);
  return out;
}

PcaResult pca_project(const Eigen::MatrixXd& codes, std::size_t k) {
  const auto ki = static_cast<Eigen::Index>(k);
  if (k == 0) throw ConfigError("pca_project needs k >= 1");
  if (codes.rows() <= ki) throw DataError("pca_project needs more rows than components");
  if (codes.cols() < ki) throw DataError("pca_project: k exceeds the code dimension");
  Eigen::MatrixXd xc = center_rows(codes);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
  Eigen::VectorXd s2 = svd.singularValues().array().square();
  double total = s2.sum();
  PcaResult out;
  out.basis = svd.matrixV().leftCols(ki);
  for (Eigen::Index j = 0; j < ki; ++j) {
    Eigen::Index arg = 0;
    out.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, j) < 0.0) out.basis.col(j) *= -1.0;
  }
  out.ratios = Eigen::VectorXd::Zero(ki);
  if (total > 0.0) {
    for (Eigen::Index j = 0; j < ki && j < s2.size(); ++j) out.ratios(j) = s2(j) / total;
  }
  out.projection = xc * out.basis;
  return out;
}

}  // namespace tfa
