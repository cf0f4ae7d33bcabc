#include "tfa/temporal.hpp"

#include <cmath>
#include <random>

#include "tfa/error.hpp"
#include "tfa/rng.hpp"
#include "tfa/sae.hpp"
#include "tfa/sparsity.hpp"

namespace tfa {

std::string to_string(NovelKind kind) {
  return kind == NovelKind::kTopK ? "topk" : "batchtopk";
}

std::string to_string(ValueMode mode) {
  return mode == ValueMode::kIdentity ? "identity" : "learned";
}

NovelKind novel_kind_from_string(const std::string& s) {
  if (s == "topk") return NovelKind::kTopK;
  if (s == "batchtopk") return NovelKind::kBatchTopK;
  throw ConfigError("unknown novel kind '" + s + "'");
}

ValueMode value_mode_from_string(const std::string& s) {
  if (s == "identity") return ValueMode::kIdentity;
  if (s == "learned") return ValueMode::kLearned;
  throw ConfigError("unknown value mode '" + s + "'");
}

std::vector<ParamView> TemporalModel::params() {
  std::vector<ParamView> p{view_of("dict", dict, true)};
  if (split_dictionary) p.push_back(view_of("dict_novel", dict_novel, true));
  p.push_back(view_of("b_dec", b_dec));
  p.push_back(view_of("w_q", w_q));
  p.push_back(view_of("w_k", w_k));
  if (value_mode == ValueMode::kLearned) p.push_back(view_of("w_v", w_v));
  return p;
}

TemporalModel TemporalModel::zeros_like() const {
  TemporalModel z = *this;
  z.dict.setZero();
  z.dict_novel.setZero();
  z.b_dec.setZero();
  z.w_q.setZero();
  z.w_k.setZero();
  z.w_v.setZero();
  return z;
}

void TemporalModel::check_shapes() const {
  auto n = dict.rows();
  auto m = dict.cols();
  auto d = static_cast<Eigen::Index>(d_attn);
  if (n == 0 || m == 0) throw ConfigError("temporal model has empty dictionary");
  if (d_attn == 0 || d > m) throw ConfigError("d_attn must be in [1, latents]");
  if (b_dec.size() != n || w_q.rows() != d || w_q.cols() != m || w_k.rows() != d ||
      w_k.cols() != m) {
    throw ConfigError("temporal model parameter shapes are inconsistent");
  }
  if (split_dictionary && (dict_novel.rows() != n || dict_novel.cols() != m)) {
    throw ConfigError("novel dictionary shape is inconsistent");
  }
  if (value_mode == ValueMode::kLearned && (w_v.rows() != m || w_v.cols() != m)) {
    throw ConfigError("value projection shape is inconsistent");
  }
  if (!pred_only && (k == 0 || k > static_cast<std::size_t>(m))) {
    throw ConfigError("novel budget must be in [1, latents]");
  }
}

TemporalModel init_temporal(const TemporalInit& init) {
  if (init.n == 0 || init.latents == 0) throw ConfigError("model dimensions must be positive");
  TemporalModel m;
  m.novel_kind = init.novel_kind;
  m.value_mode = init.value_mode;
  m.k = init.k;
  m.d_attn = init.d_attn;
  m.pred_only = init.pred_only;
  m.split_dictionary = init.split_dictionary;

  auto n = static_cast<Eigen::Index>(init.n);
  auto lat = static_cast<Eigen::Index>(init.latents);
  auto d = static_cast<Eigen::Index>(init.d_attn);
  auto rng = make_rng(init.seed, 29);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& w, Eigen::Index r, Eigen::Index c, double scale) {
    w.resize(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) w(i, j) = scale * nd(rng);
    }
  };
  fill(m.dict, n, lat, 1.0);
  m.dict.colwise().normalize();
  if (init.split_dictionary) {
    fill(m.dict_novel, n, lat, 1.0);
    m.dict_novel.colwise().normalize();
  }
  double s = 1.0 / std::sqrt(static_cast<double>(init.latents));
  fill(m.w_q, d, lat, s);
  fill(m.w_k, d, lat, s);
  if (init.value_mode == ValueMode::kLearned) m.w_v = Eigen::MatrixXd::Identity(lat, lat);
  if (init.mean) {
    if (init.mean->size() != n) throw ConfigError("mean has wrong length");
    m.b_dec = *init.mean;
  } else {
    m.b_dec = Eigen::VectorXd::Zero(n);
  }
  m.check_shapes();
  return m;
}

Eigen::MatrixXd encode_latent(const TemporalModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.dict.rows()) throw DataError("input width does not match model");
  return ((x.rowwise() - m.b_dec.transpose()) * m.dict).cwiseMax(0.0);
}

namespace {

struct Attention {
  Eigen::MatrixXd q, k, val, attn, z;
};

Attention attend(const TemporalModel& m, const Eigen::MatrixXd& v) {
  Attention a;
  const auto t_len = v.rows();
  a.q = v * m.w_q.transpose();
  a.k = v * m.w_k.transpose();
  a.val = m.value_mode == ValueMode::kLearned ? Eigen::MatrixXd(v * m.w_v.transpose()) : v;
  a.attn = Eigen::MatrixXd::Zero(t_len, t_len);
  a.z = Eigen::MatrixXd::Zero(t_len, v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.d_attn));
  for (Eigen::Index t = 1; t < t_len; ++t) {
    Eigen::RowVectorXd s = (a.k.topRows(t) * a.q.row(t).transpose()).transpose() * scale;
    double mx = s.maxCoeff();
    Eigen::RowVectorXd w = (s.array() - mx).exp();
    w /= w.sum();
    a.attn.row(t).head(t) = w;
    a.z.row(t) = w * a.val.topRows(t);
  }
  return a;
}

struct SeqCache {
  Eigen::MatrixXd u, a, v;
  Attention att;
  Eigen::MatrixXd xp, r, c, zn, mask;
};

struct Forward {
  std::vector<SeqCache> seqs;
  std::size_t shortfall = 0;
};

Forward run_forward(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences) {
  m.check_shapes();
  Forward f;
  f.seqs.resize(sequences.size());
  const Eigen::MatrixXd& dn = m.novel_dict();
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& x = sequences[i];
    if (x.cols() != m.dict.rows()) throw DataError("input width does not match model");
    if (x.rows() == 0) throw DataError("empty sequence");
    auto& c = f.seqs[i];
    c.u = x.rowwise() - m.b_dec.transpose();
    c.a = c.u * m.dict;
    c.v = c.a.cwiseMax(0.0);
    c.att = attend(m, c.v);
    c.xp = c.att.z * m.dict.transpose();
    c.r = c.u - c.xp;
    total += x.rows();
  }

  const auto lat = m.dict.cols();
  if (m.pred_only) {
    for (auto& c : f.seqs) {
      c.zn = Eigen::MatrixXd::Zero(c.u.rows(), lat);
      c.mask = c.zn;
    }
    return f;
  }

  for (auto& c : f.seqs) c.c = c.r * dn;
  if (m.novel_kind == NovelKind::kTopK) {
    for (auto& c : f.seqs) {
      auto sel = topk_rows(c.c, m.k);
      c.zn = std::move(sel.codes);
      f.shortfall += sel.shortfall;
    }
  } else {
    Eigen::MatrixXd all(total, lat);
    Eigen::Index r = 0;
    for (auto& c : f.seqs) {
      all.middleRows(r, c.c.rows()) = c.c;
      r += c.c.rows();
    }
    auto sel = batch_topk(all, m.k);
    f.shortfall = sel.shortfall;
    r = 0;
    for (auto& c : f.seqs) {
      c.zn = sel.codes.middleRows(r, c.c.rows());
      r += c.c.rows();
    }
  }
  for (auto& c : f.seqs) c.mask = (c.zn.array() != 0.0).cast<double>().matrix();
  return f;
}

TemporalCodes codes_from(const TemporalModel& m, const SeqCache& c) {
  TemporalCodes out;
  out.z_p = c.att.z;
  out.z_n = c.zn;
  out.attn = c.att.attn;
  Eigen::RowVectorXd b = m.b_dec.transpose();
  out.xhat_p = c.xp.rowwise() + b;
  Eigen::MatrixXd xn = c.zn * m.novel_dict().transpose();
  out.xhat_n = xn.rowwise() + b;
  out.xhat = (c.xp + xn).rowwise() + b;
  return out;
}

TemporalLoss loss_from(const TemporalModel& m, const Forward& f,
                       const std::vector<Eigen::MatrixXd>& sequences) {
  TemporalLoss l;
  double err = 0.0, err_p = 0.0, err_n = 0.0, energy = 0.0, l0 = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& c = f.seqs[i];
    Eigen::MatrixXd xn = c.zn * m.novel_dict().transpose();
    // x - xhat = u - xp - xn, and so on for the components.
    err += (c.u - c.xp - xn).squaredNorm();
    err_p += (c.u - c.xp).squaredNorm();
    err_n += (c.u - xn).squaredNorm();
    energy += sequences[i].squaredNorm();
    l0 += c.mask.sum();
    tokens += static_cast<std::size_t>(c.u.rows());
  }
  if (tokens == 0) throw DataError("no tokens");
  l.mse = err / static_cast<double>(tokens);
  l.total = l.mse;
  l.nmse = energy > 0.0 ? err / energy : 0.0;
  l.pred_nmse = energy > 0.0 ? err_p / energy : 0.0;
  l.novel_nmse = energy > 0.0 ? err_n / energy : 0.0;
  l.mean_l0 = l0 / static_cast<double>(tokens);
  l.shortfall = f.shortfall;
  return l;
}

}  // namespace

PredictiveCode predictive_code(const TemporalModel& m, const Eigen::MatrixXd& v) {
  if (v.cols() != m.dict.cols()) throw DataError("latent width does not match model");
  auto a = attend(m, v);
  return {std::move(a.z), std::move(a.attn)};
}

Eigen::MatrixXd novel_preactivations(const TemporalModel& m, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& z_p) {
  Eigen::MatrixXd r = (x.rowwise() - m.b_dec.transpose()) - z_p * m.dict.transpose();
  return r * m.novel_dict();
}

Eigen::MatrixXd novel_code(const TemporalModel& m, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& z_p) {
  Eigen::MatrixXd pre = novel_preactivations(m, x, z_p);
  if (m.pred_only) return Eigen::MatrixXd::Zero(pre.rows(), pre.cols());
  return m.novel_kind == NovelKind::kTopK ? topk_rows(pre, m.k).codes : batch_topk(pre, m.k).codes;
}

std::vector<TemporalCodes> tfa_forward(const TemporalModel& m,
                                       const std::vector<Eigen::MatrixXd>& sequences) {
  auto f = run_forward(m, sequences);
  std::vector<TemporalCodes> out;
  out.reserve(sequences.size());
  for (const auto& c : f.seqs) out.push_back(codes_from(m, c));
  return out;
}

TemporalCodes tfa_forward(const TemporalModel& m, const Eigen::MatrixXd& sequence) {
  return tfa_forward(m, std::vector<Eigen::MatrixXd>{sequence}).front();
}

TemporalLoss tfa_loss(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences) {
  return loss_from(m, run_forward(m, sequences), sequences);
}

TemporalGradient tfa_backward(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences) {
  auto f = run_forward(m, sequences);
  TemporalGradient out{loss_from(m, f, sequences), m.zeros_like()};
  auto& g = out.grad;
  const Eigen::MatrixXd& dn = m.novel_dict();
  Eigen::MatrixXd& g_dn = m.split_dictionary ? g.dict_novel : g.dict;
  const double n_tok = [&] {
    double t = 0;
    for (const auto& c : f.seqs) t += static_cast<double>(c.u.rows());
    return t;
  }();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.d_attn));

  for (const auto& c : f.seqs) {
    const auto t_len = c.u.rows();
    Eigen::MatrixXd xn = c.zn * dn.transpose();
    Eigen::MatrixXd g_e = (2.0 / n_tok) * (c.xp + xn - c.u);  // d loss / d xhat

    // Novel path: xn = D_n z_n, z_n = mask * (D_n^T r), r = u - xp.
    Eigen::MatrixXd g_r = Eigen::MatrixXd::Zero(t_len, c.u.cols());
    if (!m.pred_only) {
      g_dn += g_e.transpose() * c.zn;
      Eigen::MatrixXd g_c = c.mask.cwiseProduct(g_e * dn);
      g_dn += c.r.transpose() * g_c;
      g_r = g_c * dn.transpose();
    }

    // Predictive decode: xp = D_p z_p.
    Eigen::MatrixXd g_xp = g_e - g_r;
    g.dict += g_xp.transpose() * c.att.z;
    Eigen::MatrixXd g_zp = g_xp * m.dict;

    // Attention.
    const auto& att = c.att;
    Eigen::MatrixXd g_val = att.attn.transpose() * g_zp;
    Eigen::MatrixXd g_alpha = g_zp * att.val.transpose();
    Eigen::MatrixXd g_s = Eigen::MatrixXd::Zero(t_len, t_len);
    for (Eigen::Index t = 1; t < t_len; ++t) {
      auto alpha = att.attn.row(t).head(t);
      auto ga = g_alpha.row(t).head(t);
      double dot = alpha.dot(ga);
      g_s.row(t).head(t) = alpha.cwiseProduct((ga.array() - dot).matrix());
    }
    Eigen::MatrixXd g_q = scale * g_s * att.k;
    Eigen::MatrixXd g_k = scale * g_s.transpose() * att.q;
    g.w_q += g_q.transpose() * c.v;
    g.w_k += g_k.transpose() * c.v;
    Eigen::MatrixXd g_v = g_q * m.w_q + g_k * m.w_k;
    if (m.value_mode == ValueMode::kLearned) {
      g.w_v += g_val.transpose() * c.v;
      g_v += g_val * m.w_v;
    } else {
      g_v += g_val;
    }

    // Latent encoder: v = relu(a), a = u D_p.
    Eigen::MatrixXd g_a = (c.a.array() > 0.0).cast<double>().matrix().cwiseProduct(g_v);
    g.dict += c.u.transpose() * g_a;

    // Bias: xhat = b + ..., u = x - b.
    Eigen::MatrixXd g_u = g_r + g_a * m.dict.transpose();
    g.b_dec += (g_e - g_u).colwise().sum().transpose();
  }
  return out;
}

ComponentStats component_stats(const TemporalModel& m, const std::vector<Eigen::MatrixXd>& sequences) {
  if (sequences.empty()) throw DataError("no sequences");
  auto codes = tfa_forward(m, sequences);
  ComponentStats s;
  s.value_mode = to_string(m.value_mode);
  Eigen::RowVectorXd b = m.b_dec.transpose();

  double cos_sum = 0.0, err_cos_sum = 0.0, frac_sum = 0.0;
  std::size_t cos_count = 0, err_count = 0, frac_count = 0, rows = 0;
  for (const auto& c : codes) rows += static_cast<std::size_t>(c.xhat.rows());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), m.dict.rows());
  Eigen::MatrixXd xh = x, xp = x, xn = x;
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto& c = codes[i];
    const auto t_len = c.xhat.rows();
    x.middleRows(r, t_len) = sequences[i];
    xh.middleRows(r, t_len) = c.xhat;
    xp.middleRows(r, t_len) = c.xhat_p;
    xn.middleRows(r, t_len) = c.xhat_n;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      Eigen::RowVectorXd p = c.xhat_p.row(t) - b;
      Eigen::RowVectorXd q = c.xhat_n.row(t) - b;
      double np = p.norm(), nq = q.norm();
      if (np > 0.0 && nq > 0.0) {
        cos_sum += p.dot(q) / (np * nq);
        ++cos_count;
      }
      if (np + nq > 0.0) {
        frac_sum += np / (np + nq);
        ++frac_count;
      }
      Eigen::RowVectorXd ep = sequences[i].row(t) - c.xhat_p.row(t);
      Eigen::RowVectorXd en = sequences[i].row(t) - c.xhat_n.row(t);
      if (ep.norm() > 0.0 && en.norm() > 0.0) {
        err_cos_sum += ep.dot(en) / (ep.norm() * en.norm());
        ++err_count;
      }
    }
    r += t_len;
  }
  bool novel_zero = (xn.rowwise() - b).squaredNorm() == 0.0;
  if (!novel_zero && cos_count > 0) s.component_cosine = cos_sum / static_cast<double>(cos_count);
  if (!novel_zero && err_count > 0) s.error_cosine = err_cos_sum / static_cast<double>(err_count);
  s.pred_norm_fraction = frac_count ? frac_sum / static_cast<double>(frac_count) : 0.0;
  s.novel_norm_fraction = frac_count ? 1.0 - s.pred_norm_fraction : 0.0;
  if (novel_zero) s.novel_norm_fraction = 0.0;

  auto full = reconstruction_metrics(x, xh);
  auto pred = reconstruction_metrics(x, xp);
  auto nov = reconstruction_metrics(x, xn);
  s.nmse = full.nmse;
  s.pred_nmse = pred.nmse;
  s.novel_nmse = nov.nmse;
  s.explained_variance = full.explained_variance;
  s.pred_explained_variance = pred.explained_variance;
  s.novel_explained_variance = nov.explained_variance;
  return s;
}

}  // namespace tfa
