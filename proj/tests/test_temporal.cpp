#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "tfa/error.hpp"
#include "tfa/sae.hpp"
#include "tfa/sparsity.hpp"
#include "tfa/temporal.hpp"

using tfa::NovelKind;
using tfa::TemporalModel;
using tfa::ValueMode;

namespace {

struct Variant {
  const char* name;
  ValueMode value;
  NovelKind novel;
  bool pred_only;
  bool split;
};

const Variant kVariants[] = {
    {"identity-batchtopk", ValueMode::kIdentity, NovelKind::kBatchTopK, false, false},
    {"identity-topk", ValueMode::kIdentity, NovelKind::kTopK, false, false},
    {"learned-batchtopk", ValueMode::kLearned, NovelKind::kBatchTopK, false, false},
    {"pred-only", ValueMode::kIdentity, NovelKind::kBatchTopK, true, false},
    {"split-dictionary", ValueMode::kLearned, NovelKind::kTopK, false, true},
};

TemporalModel random_model(const Variant& v, std::uint64_t seed, std::size_t n = 6,
                           std::size_t m = 10, std::size_t d = 4, std::size_t k = 3) {
  tfa::TemporalInit init;
  init.n = n;
  init.latents = m;
  init.d_attn = d;
  init.k = k;
  init.value_mode = v.value;
  init.novel_kind = v.novel;
  init.pred_only = v.pred_only;
  init.split_dictionary = v.split;
  init.seed = seed;
  auto model = tfa::init_temporal(init);
  auto mi = static_cast<Eigen::Index>(m);
  auto di = static_cast<Eigen::Index>(d);
  model.w_q = oracle::gaussian(di, mi, seed + 1, 0.8);
  model.w_k = oracle::gaussian(di, mi, seed + 2, 0.8);
  model.b_dec = oracle::gaussian(static_cast<Eigen::Index>(n), 1, seed + 3, 0.2);
  if (v.value == ValueMode::kLearned) {
    model.w_v = Eigen::MatrixXd::Identity(mi, mi) + oracle::gaussian(mi, mi, seed + 4, 0.2);
  }
  return model;
}

std::vector<Eigen::MatrixXd> random_sequences(std::size_t count, Eigen::Index length,
                                              Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(oracle::gaussian(length, n, seed + i));
  return out;
}

// Step-by-step recomputation of the forward pass for one sequence, written
// from the defining equations with explicit loops.
struct Reference {
  std::vector<Eigen::VectorXd> zp, pre_n, xp;
  std::vector<std::vector<double>> attn;
};

Reference reference_forward(const TemporalModel& m, const Eigen::MatrixXd& x) {
  Reference ref;
  const auto t_len = x.rows();
  const auto lat = m.dict.cols();
  std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Eigen::VectorXd u = x.row(t).transpose() - m.b_dec;
    Eigen::VectorXd a(lat);
    for (Eigen::Index j = 0; j < lat; ++j) a(j) = std::max(0.0, m.dict.col(j).dot(u));
    v[static_cast<std::size_t>(t)] = a;
  }
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Eigen::VectorXd zp = Eigen::VectorXd::Zero(lat);
    std::vector<double> w;
    if (t > 0) {
      Eigen::VectorXd q = m.w_q * v[static_cast<std::size_t>(t)];
      double denom = 0.0;
      for (Eigen::Index s = 0; s < t; ++s) {
        Eigen::VectorXd k = m.w_k * v[static_cast<std::size_t>(s)];
        w.push_back(std::exp(q.dot(k) / std::sqrt(static_cast<double>(m.d_attn))));
        denom += w.back();
      }
      for (Eigen::Index s = 0; s < t; ++s) {
        w[static_cast<std::size_t>(s)] /= denom;
        Eigen::VectorXd val = m.value_mode == ValueMode::kLearned
                                  ? Eigen::VectorXd(m.w_v * v[static_cast<std::size_t>(s)])
                                  : v[static_cast<std::size_t>(s)];
        zp += w[static_cast<std::size_t>(s)] * val;
      }
    }
    Eigen::VectorXd xp = m.dict * zp;
    Eigen::VectorXd r = x.row(t).transpose() - m.b_dec - xp;
    ref.zp.push_back(zp);
    ref.xp.push_back(xp);
    ref.pre_n.push_back(m.novel_dict().transpose() * r);
    ref.attn.push_back(w);
  }
  return ref;
}

}  // namespace

TEST_CASE("latent encoder contracts") {
  Eigen::MatrixXd d(3, 4);
  d << 1, 0.6, 0, -0.8,
       0, 0.8, 0, 0.6,
       0, 0, 1, 0;
  TemporalModel m = random_model(kVariants[0], 1, 3, 4, 2, 1);
  m.dict = d;
  m.b_dec = Eigen::Vector3d(0.1, -0.2, 0.3);
  CHECK(encode_latent(m, m.b_dec.transpose()).norm() == 0.0);

  Eigen::RowVectorXd x = (m.b_dec + d.col(1)).transpose();
  auto v = tfa::encode_latent(m, x);
  CHECK(v(0, 1) == doctest::Approx(1.0));
  CHECK(v(0, 0) == doctest::Approx(0.6));
  CHECK(v(0, 2) == 0.0);
  CHECK(v(0, 3) == doctest::Approx(0.0));  // -0.48 + 0.48

  auto big = tfa::encode_latent(m, oracle::gaussian(50, 3, 2));
  CHECK(big.minCoeff() >= 0.0);
}

TEST_CASE("predictive code contracts") {
  auto m = random_model(kVariants[0], 3);
  SUBCASE("T=2 copies the single past latent") {
    Eigen::MatrixXd v = oracle::gaussian(2, 10, 4).cwiseAbs();
    auto p = tfa::predictive_code(m, v);
    CHECK(p.z.row(0).norm() == 0.0);
    CHECK((p.z.row(1) - v.row(0)).norm() < 1e-15);
    CHECK(p.attn(1, 0) == 1.0);
  }
  SUBCASE("identical past latents give uniform weights and that latent") {
    Eigen::RowVectorXd row = oracle::gaussian(1, 10, 5).cwiseAbs();
    Eigen::MatrixXd v = row.replicate(6, 1);
    auto p = tfa::predictive_code(m, v);
    for (Eigen::Index t = 1; t < 6; ++t) {
      for (Eigen::Index s = 0; s < t; ++s) {
        CHECK(p.attn(t, s) == doctest::Approx(1.0 / static_cast<double>(t)).epsilon(1e-14));
      }
      CHECK((p.z.row(t) - row).norm() < 1e-13);
    }
  }
  SUBCASE("rows sum to one and never look ahead") {
    Eigen::MatrixXd v = oracle::gaussian(9, 10, 6).cwiseAbs();
    auto p = tfa::predictive_code(m, v);
    CHECK(p.attn.row(0).norm() == 0.0);
    for (Eigen::Index t = 1; t < 9; ++t) {
      CHECK(std::abs(p.attn.row(t).sum() - 1.0) < 1e-12);
      for (Eigen::Index s = t; s < 9; ++s) CHECK(p.attn(t, s) == 0.0);
    }
  }
}

TEST_CASE("forward matches step-by-step recomputation") {
  for (const auto& variant : kVariants) {
    CAPTURE(variant.name);
    auto m = random_model(variant, 11);
    auto seqs = random_sequences(2, 7, 6, 12);
    auto out = tfa::tfa_forward(m, seqs);
    Eigen::MatrixXd all_pre(14, 10);
    for (std::size_t i = 0; i < 2; ++i) {
      auto ref = reference_forward(m, seqs[i]);
      for (Eigen::Index t = 0; t < 7; ++t) {
        auto ti = static_cast<std::size_t>(t);
        CHECK((out[i].z_p.row(t).transpose() - ref.zp[ti]).norm() < 1e-12);
        for (std::size_t s = 0; s < ref.attn[ti].size(); ++s) {
          CHECK(out[i].attn(t, static_cast<Eigen::Index>(s)) ==
                doctest::Approx(ref.attn[ti][s]).epsilon(1e-12));
        }
        all_pre.row(static_cast<Eigen::Index>(i) * 7 + t) = ref.pre_n[ti].transpose();
      }
    }
    Eigen::MatrixXd z_n;
    if (variant.pred_only) {
      z_n = Eigen::MatrixXd::Zero(14, 10);
    } else if (variant.novel == NovelKind::kTopK) {
      z_n = tfa::topk_rows(all_pre, m.k).codes;
    } else {
      z_n = tfa::batch_topk(all_pre, m.k).codes;
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& c = out[i];
      CHECK((c.z_n - z_n.middleRows(static_cast<Eigen::Index>(i) * 7, 7)).norm() < 1e-12);
      Eigen::MatrixXd xhat = c.xhat_p + c.xhat_n;
      xhat.rowwise() -= m.b_dec.transpose();
      CHECK((c.xhat - xhat).norm() < 1e-12);
    }
  }
}

TEST_CASE("prediction-only on a single token reconstructs the bias") {
  auto m = random_model(kVariants[3], 2);
  auto c = tfa::tfa_forward(m, oracle::gaussian(1, 6, 3));
  CHECK((c.xhat.row(0).transpose() - m.b_dec).norm() == 0.0);
}

TEST_CASE("zero predictive code reduces novel encoding to a tied TopK SAE") {
  auto m = random_model(kVariants[1], 5);
  Eigen::MatrixXd x = oracle::gaussian(8, 6, 6);
  Eigen::MatrixXd zp = Eigen::MatrixXd::Zero(8, 10);
  auto novel = tfa::novel_code(m, x, zp);

  tfa::SaeModel sae = tfa::init_sae(tfa::SaeKind::kTopK, 6, 10, m.k, 0.0, 1);
  sae.w_dec = m.dict;
  sae.w_enc = m.dict.transpose();
  sae.b_dec = m.b_dec;
  sae.b_enc.setZero();
  CHECK((novel - tfa::encode_batch(sae, x).codes).norm() < 1e-14);
}

TEST_CASE("exact prediction with an orthonormal dictionary leaves no novel code") {
  auto m = random_model(kVariants[1], 7, 4, 4, 2, 2);
  m.dict = Eigen::MatrixXd::Identity(4, 4);
  m.b_dec = Eigen::Vector4d(0.5, -0.25, 0.125, 1.0);
  Eigen::MatrixXd zp = oracle::gaussian(3, 4, 8).cwiseAbs();
  Eigen::MatrixXd x = (zp * m.dict.transpose()).rowwise() + m.b_dec.transpose();
  auto pre = tfa::novel_preactivations(m, x, zp);
  CHECK(pre.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(tfa::novel_code(m, x, zp).norm() < 1e-14);
  m.b_dec.setZero();
  Eigen::MatrixXd exact = zp;
  CHECK(tfa::novel_code(m, exact, zp).norm() == 0.0);
}

TEST_CASE("novel support lies inside positive pre-activations") {
  auto m = random_model(kVariants[0], 9);
  Eigen::MatrixXd x = oracle::gaussian(20, 6, 10);
  Eigen::MatrixXd zp = oracle::gaussian(20, 10, 11).cwiseAbs() * 0.1;
  auto pre = tfa::novel_preactivations(m, x, zp);
  auto z = tfa::novel_code(m, x, zp);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) != 0.0) CHECK(pre(i) > 0.0);
  }
}

TEST_CASE("causality under future perturbation") {
  for (const auto& variant : kVariants) {
    if (variant.novel == NovelKind::kBatchTopK && !variant.pred_only) continue;  // pools tokens
    CAPTURE(variant.name);
    auto m = random_model(variant, 13);
    Eigen::MatrixXd x = oracle::gaussian(8, 6, 14);
    auto base = tfa::tfa_forward(m, x);
    for (Eigen::Index u = 1; u < 8; ++u) {
      Eigen::MatrixXd y = x;
      y.row(u) += oracle::gaussian(1, 6, 15 + static_cast<std::uint64_t>(u));
      auto pert = tfa::tfa_forward(m, y);
      CHECK(pert.z_p.topRows(u) == base.z_p.topRows(u));
      CHECK(pert.z_n.topRows(u) == base.z_n.topRows(u));
    }
  }
}

TEST_CASE("gradients match central finite differences") {
  for (const auto& variant : kVariants) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CAPTURE(variant.name);
      CAPTURE(seed);
      auto m = random_model(variant, 40 + 7 * seed);
      auto seqs = random_sequences(2, 5, 6, 90 + 3 * seed);
      auto g = tfa::tfa_backward(m, seqs);
      auto res = oracle::check_gradients(m, g.grad, [&] { return tfa::tfa_loss(m, seqs).total; });
      CAPTURE(res.worst_param);
      CAPTURE(res.max_abs_error);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("attention gradients vanish without attention") {
  auto m = random_model(kVariants[2], 3);
  auto g = tfa::tfa_backward(m, {oracle::gaussian(1, 6, 4)});
  CHECK(g.grad.w_q.norm() == 0.0);
  CHECK(g.grad.w_k.norm() == 0.0);
  CHECK(g.grad.w_v.norm() == 0.0);
}

TEST_CASE("zero residual gives zero attention gradients") {
  // Orthonormal dictionary, a constant sequence, identity values and a
  // K=1 novel code: the prediction is exact after t=0 and the novel code
  // fixes t=0, so the residual is zero everywhere.
  auto m = random_model(kVariants[1], 5, 4, 4, 2, 1);
  m.dict = Eigen::MatrixXd::Identity(4, 4);
  m.b_dec.setZero();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 4);
  x.col(2).setConstant(0.7);
  auto g = tfa::tfa_backward(m, {x});
  CHECK(g.loss.total < 1e-30);
  CHECK(g.grad.w_q.norm() == 0.0);
  CHECK(g.grad.w_k.norm() == 0.0);
}

TEST_CASE("loss breakdown matches recomputation") {
  for (const auto& variant : kVariants) {
    CAPTURE(variant.name);
    auto m = random_model(variant, 17);
    auto seqs = random_sequences(3, 6, 6, 18);
    auto codes = tfa::tfa_forward(m, seqs);
    double err = 0, ep = 0, en = 0, energy = 0, l0 = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      err += (seqs[i] - codes[i].xhat).squaredNorm();
      ep += (seqs[i] - codes[i].xhat_p).squaredNorm();
      en += (seqs[i] - codes[i].xhat_n).squaredNorm();
      energy += seqs[i].squaredNorm();
      l0 += tfa::row_l0(codes[i].z_n).sum();
    }
    auto l = tfa::tfa_loss(m, seqs);
    CHECK(l.total == doctest::Approx(err / 18.0).epsilon(1e-12));
    CHECK(l.nmse == doctest::Approx(err / energy).epsilon(1e-12));
    CHECK(l.pred_nmse == doctest::Approx(ep / energy).epsilon(1e-12));
    CHECK(l.novel_nmse == doctest::Approx(en / energy).epsilon(1e-12));
    CHECK(l.mean_l0 == doctest::Approx(l0 / 18.0));
  }
}

TEST_CASE("prediction-only loss equals loss with the novel code removed") {
  auto m = random_model(kVariants[0], 21);
  auto seqs = random_sequences(2, 6, 6, 22);
  auto p = m;
  p.pred_only = true;
  auto codes = tfa::tfa_forward(m, seqs);
  double err = 0;
  for (std::size_t i = 0; i < 2; ++i) err += (seqs[i] - codes[i].xhat_p).squaredNorm();
  CHECK(tfa::tfa_loss(p, seqs).total == doctest::Approx(err / 12.0).epsilon(1e-12));
}

TEST_CASE("component statistics") {
  SUBCASE("prediction-only has no novel share") {
    auto m = random_model(kVariants[3], 23);
    auto s = tfa::component_stats(m, random_sequences(2, 6, 6, 24));
    CHECK(s.novel_norm_fraction == 0.0);
    CHECK_FALSE(s.component_cosine.has_value());
    CHECK(s.value_mode == "identity");
  }
  SUBCASE("full model reports both components") {
    auto m = random_model(kVariants[2], 25);
    auto seqs = random_sequences(2, 6, 6, 26);
    auto s = tfa::component_stats(m, seqs);
    REQUIRE(s.component_cosine.has_value());
    CHECK(std::abs(*s.component_cosine) <= 1.0);
    CHECK(s.pred_norm_fraction + s.novel_norm_fraction == doctest::Approx(1.0));
    CHECK(s.nmse == doctest::Approx(tfa::tfa_loss(m, seqs).nmse));
    CHECK(s.value_mode == "learned");
  }
}

TEST_CASE("configuration errors") {
  tfa::TemporalInit init;
  init.n = 4;
  init.latents = 8;
  init.d_attn = 9;
  CHECK_THROWS_AS(tfa::init_temporal(init), tfa::ConfigError);
  init.d_attn = 4;
  init.k = 0;
  CHECK_THROWS_AS(tfa::init_temporal(init), tfa::ConfigError);
  CHECK_THROWS_AS(tfa::novel_kind_from_string("relu"), tfa::ConfigError);
  CHECK_THROWS_AS(tfa::value_mode_from_string("mlp"), tfa::ConfigError);
}
