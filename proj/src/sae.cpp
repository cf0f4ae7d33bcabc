#include "tfa/sae.hpp"

#include <random>

#include "tfa/error.hpp"
#include "tfa/rng.hpp"
#include "tfa/sparsity.hpp"

namespace tfa {

std::string to_string(SaeKind kind) {
  switch (kind) {
    case SaeKind::kRelu: return "relu";
    case SaeKind::kTopK: return "topk";
    case SaeKind::kBatchTopK: return "batchtopk";
  }
  return "?";
}

SaeKind sae_kind_from_string(const std::string& s) {
  if (s == "relu") return SaeKind::kRelu;
  if (s == "topk") return SaeKind::kTopK;
  if (s == "batchtopk") return SaeKind::kBatchTopK;
  throw ConfigError("unknown SAE kind '" + s + "'");
}

std::vector<ParamView> SaeModel::params() {
  return {view_of("w_dec", w_dec, true), view_of("b_dec", b_dec), view_of("w_enc", w_enc),
          view_of("b_enc", b_enc)};
}

SaeModel SaeModel::zeros_like() const {
  SaeModel z = *this;
  z.w_dec.setZero();
  z.b_dec.setZero();
  z.w_enc.setZero();
  z.b_enc.setZero();
  return z;
}

void SaeModel::check_shapes() const {
  auto n = w_dec.rows();
  auto m = w_dec.cols();
  if (n == 0 || m == 0) throw ConfigError("SAE has empty dictionary");
  if (b_dec.size() != n || w_enc.rows() != m || w_enc.cols() != n || b_enc.size() != m) {
    throw ConfigError("SAE parameter shapes are inconsistent");
  }
  if (kind != SaeKind::kRelu && k == 0) throw ConfigError("TopK budget must be at least 1");
}

SaeModel init_sae(SaeKind kind, std::size_t n, std::size_t latents, std::size_t k, double lambda,
                  std::uint64_t seed, const std::optional<Eigen::VectorXd>& mean) {
  if (n == 0 || latents == 0) throw ConfigError("SAE dimensions must be positive");
  if (kind != SaeKind::kRelu && (k == 0 || k > latents)) {
    throw ConfigError("TopK budget must be in [1, latents]");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  SaeModel m;
  m.kind = kind;
  m.k = k;
  m.lambda = lambda;
  auto rng = make_rng(seed, 17);
  std::normal_distribution<double> nd(0.0, 1.0);
  m.w_dec.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(latents));
  for (Eigen::Index j = 0; j < m.w_dec.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.w_dec.rows(); ++i) m.w_dec(i, j) = nd(rng);
  }
  m.w_dec.colwise().normalize();
  m.w_enc = m.w_dec.transpose();
  m.b_enc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(latents));
  if (mean) {
    if (static_cast<std::size_t>(mean->size()) != n) throw ConfigError("mean has wrong length");
    m.b_dec = *mean;
  } else {
    m.b_dec = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  }
  return m;
}

Eigen::MatrixXd sae_preactivations(const SaeModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.w_dec.rows()) throw DataError("input width does not match model");
  return ((x.rowwise() - m.b_dec.transpose()) * m.w_enc.transpose()).rowwise() +
         m.b_enc.transpose();
}

SaeEncoding encode_batch(const SaeModel& m, const Eigen::MatrixXd& x) {
  SaeEncoding e;
  e.pre = sae_preactivations(m, x);
  switch (m.kind) {
    case SaeKind::kRelu:
      e.codes = relu(e.pre);
      break;
    case SaeKind::kTopK: {
      auto s = topk_rows(e.pre, m.k);
      e.codes = std::move(s.codes);
      e.shortfall = s.shortfall;
      break;
    }
    case SaeKind::kBatchTopK: {
      auto s = batch_topk(e.pre, m.k);
      e.codes = std::move(s.codes);
      e.shortfall = s.shortfall;
      break;
    }
  }
  return e;
}

Eigen::VectorXd encode(const SaeModel& m, const Eigen::VectorXd& x) {
  return encode_batch(m, x.transpose()).codes.row(0).transpose();
}

Eigen::MatrixXd decode(const SaeModel& m, const Eigen::MatrixXd& codes) {
  if (codes.cols() != m.w_dec.cols()) throw DataError("code width does not match model");
  return (codes * m.w_dec.transpose()).rowwise() + m.b_dec.transpose();
}

Eigen::VectorXd decode(const SaeModel& m, const Eigen::VectorXd& code) {
  return decode(m, Eigen::MatrixXd(code.transpose())).row(0).transpose();
}

namespace {

struct SaeForward {
  SaeEncoding enc;
  Eigen::MatrixXd xhat;
  SaeLoss loss;
};

SaeForward forward(const SaeModel& m, const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw DataError("empty batch");
  SaeForward f;
  f.enc = encode_batch(m, x);
  f.xhat = decode(m, f.enc.codes);
  double n = static_cast<double>(x.rows());
  f.loss.mse = (f.xhat - x).squaredNorm() / n;
  if (m.kind == SaeKind::kRelu) {
    f.loss.penalty = m.lambda * f.enc.codes.cwiseAbs().sum() / n;
  }
  f.loss.total = f.loss.mse + f.loss.penalty;
  double energy = x.squaredNorm();
  f.loss.nmse = energy > 0.0 ? (f.xhat - x).squaredNorm() / energy : 0.0;
  f.loss.mean_l0 = row_l0(f.enc.codes).mean();
  f.loss.shortfall = f.enc.shortfall;
  return f;
}

}  // namespace

SaeLoss sae_loss(const SaeModel& m, const Eigen::MatrixXd& x) { return forward(m, x).loss; }

SaeGradient sae_backward(const SaeModel& m, const Eigen::MatrixXd& x) {
  auto f = forward(m, x);
  double n = static_cast<double>(x.rows());
  SaeGradient out{f.loss, m.zeros_like()};
  auto& g = out.grad;

  Eigen::MatrixXd g_e = (2.0 / n) * (f.xhat - x);  // B x n
  g.w_dec = g_e.transpose() * f.enc.codes;
  g.b_dec = g_e.colwise().sum().transpose();

  Eigen::MatrixXd g_z = g_e * m.w_dec;  // B x M
  if (m.kind == SaeKind::kRelu) {
    g_z.array() += (m.lambda / n) * (f.enc.codes.array() > 0.0).cast<double>();
  }
  Eigen::MatrixXd g_pre = ((f.enc.codes.array() != 0.0).cast<double>() * g_z.array()).matrix();
  Eigen::MatrixXd centered = x.rowwise() - m.b_dec.transpose();
  g.w_enc = g_pre.transpose() * centered;
  g.b_enc = g_pre.colwise().sum().transpose();
  g.b_dec -= m.w_enc.transpose() * g.b_enc;
  return out;
}

ReconstructionMetrics reconstruction_metrics(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) {
    throw DataError("reconstruction shape does not match input");
  }
  if (x.rows() == 0) throw DataError("empty input");
  ReconstructionMetrics r;
  r.nmse = nmse(x, xhat);
  auto var_sum = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    return c.squaredNorm() / static_cast<double>(m.rows());
  };
  double total = var_sum(x);
  if (!(total > 0.0)) throw DataError("explained variance undefined for zero-variance input");
  r.explained_variance = 1.0 - var_sum(x - xhat) / total;
  return r;
}

double nmse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat) {
  double energy = x.squaredNorm();
  if (!(energy > 0.0)) throw DataError("NMSE undefined for all-zero input");
  return (x - xhat).squaredNorm() / energy;
}

}  // namespace tfa
