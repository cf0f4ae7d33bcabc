#include "tfa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "tfa/error.hpp"
#include "tfa/rng.hpp"

namespace tfa {

namespace {

// Sub-stream identifiers so that each random ingredient is independent of the
// sizes of the others.
enum Stream : std::uint64_t {
  kDictStream = 1,
  kPoolStream = 2,
  kSeqStream = 1000,
  kSlowStream = 3,
  kFastDictStream = 4,
  kBoundaryStream = 5,
};

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = nd(rng);
  }
  return m;
}

// k distinct indices drawn uniformly from [0, pool).
std::vector<std::size_t> sample_distinct(std::size_t pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<std::size_t> constant_schedule(std::size_t k, std::size_t length) {
  return std::vector<std::size_t>(length, k);
}

std::vector<std::size_t> staircase_schedule(std::size_t length, std::size_t step) {
  if (step == 0) throw ConfigError("staircase step must be positive");
  std::vector<std::size_t> s(length);
  for (std::size_t t = 0; t < length; ++t) s[t] = 1 + t / step;
  return s;
}

std::vector<std::size_t> linear_schedule(std::size_t length, std::size_t cap) {
  std::vector<std::size_t> s(length);
  for (std::size_t t = 0; t < length; ++t) s[t] = std::min(t + 1, cap);
  return s;
}

Eigen::MatrixXd random_unit_dictionary(std::size_t n, std::size_t atoms, std::uint64_t seed) {
  auto rng = make_rng(seed, kDictStream);
  Eigen::MatrixXd v = gaussian(n, atoms, rng);
  v.colwise().normalize();
  return v;
}

double max_coherence(const Eigen::MatrixXd& dictionary) {
  Eigen::MatrixXd g = dictionary.transpose() * dictionary;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (i != j) worst = std::max(worst, std::abs(g(i, j)));
    }
  }
  return worst;
}

DictionaryProcessData gen_dictionary_process(const DictionaryProcessConfig& cfg) {
  if (cfg.n == 0 || cfg.atoms == 0) throw ConfigError("dimensions must be positive");
  if (cfg.length == 0) throw ConfigError("sequence length must be positive");
  if (cfg.schedule.size() != cfg.length) {
    throw ConfigError("schedule has " + std::to_string(cfg.schedule.size()) +
                      " entries for length " + std::to_string(cfg.length));
  }
  if (!(cfg.coeff_min > 0.0) || cfg.coeff_max < cfg.coeff_min) {
    throw ConfigError("coefficient range must be positive and ordered");
  }
  std::size_t k_max = 0;
  for (auto k : cfg.schedule) {
    if (k == 0) throw ConfigError("schedule entries must be at least 1");
    if (k > cfg.atoms) {
      throw ConfigError("k(t) = " + std::to_string(k) + " exceeds dictionary size " +
                        std::to_string(cfg.atoms));
    }
    k_max = std::max(k_max, k);
  }

  DictionaryProcessData out;
  auto& proc = out.process;
  proc.dictionary = random_unit_dictionary(cfg.n, cfg.atoms, cfg.seed);
  proc.schedule = cfg.schedule;
  proc.pool = cfg.pool;
  proc.seed = cfg.seed;
  proc.coherence = max_coherence(proc.dictionary);
  proc.atom_order.resize(cfg.atoms);
  std::iota(proc.atom_order.begin(), proc.atom_order.end(), std::size_t{0});
  {
    auto rng = make_rng(cfg.seed, kPoolStream);
    std::shuffle(proc.atom_order.begin(), proc.atom_order.end(), rng);
  }

  std::vector<std::size_t> pool_size(cfg.length);
  for (std::size_t t = 0; t < cfg.length; ++t) {
    if (cfg.pool == AtomPool::kGlobal) {
      pool_size[t] = cfg.atoms;
    } else {
      std::size_t m = (cfg.schedule[t] * cfg.atoms + k_max - 1) / k_max;
      pool_size[t] = std::clamp(m, cfg.schedule[t], cfg.atoms);
    }
  }

  out.set = ActivationSet(cfg.n);
  std::uniform_real_distribution<double> mag(cfg.coeff_min, cfg.coeff_max);
  for (std::size_t b = 0; b < cfg.sequences; ++b) {
    auto rng = make_rng(cfg.seed, kSeqStream + b);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(cfg.length, cfg.atoms);
    for (std::size_t t = 0; t < cfg.length; ++t) {
      for (auto slot : sample_distinct(pool_size[t], cfg.schedule[t], rng)) {
        a(t, proc.atom_order[slot]) = mag(rng);
      }
    }
    Eigen::MatrixXd x = a * proc.dictionary.transpose();
    Eigen::VectorXd norms = x.rowwise().norm();
    for (Eigen::Index t = 0; t < x.rows(); ++t) x.row(t) /= norms(t);
    out.set.add_sequence(std::move(x));
    out.codes.push_back(std::move(a));
    out.row_norms.push_back(std::move(norms));
  }
  out.set.source = "synthetic:dictionary-process";
  return out;
}

EventData gen_event_sequences(const EventConfig& cfg) {
  if (cfg.n == 0 || cfg.length == 0) throw ConfigError("dimensions must be positive");
  if (cfg.events == 0) throw ConfigError("at least one event is required");
  if (cfg.events > cfg.length) throw ConfigError("more events than positions");
  if (cfg.slow_dim == 0 || cfg.slow_dim > cfg.n) throw ConfigError("slow_dim must be in [1, n]");
  if (cfg.fast_k > cfg.fast_atoms) throw ConfigError("fast_k exceeds fast_atoms");
  if (cfg.noise < 0.0) throw ConfigError("noise must be non-negative");

  EventData out;
  {
    auto rng = make_rng(cfg.seed, kSlowStream);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(cfg.n, cfg.slow_dim, rng));
    out.slow_basis = qr.householderQ() * Eigen::MatrixXd::Identity(cfg.n, cfg.slow_dim);
  }
  if (cfg.fast_atoms > 0) {
    auto rng = make_rng(cfg.seed, kFastDictStream);
    out.fast_dictionary = gaussian(cfg.n, cfg.fast_atoms, rng);
    out.fast_dictionary.colwise().normalize();
  } else {
    out.fast_dictionary = Eigen::MatrixXd(cfg.n, 0);
  }

  out.set = ActivationSet(cfg.n);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t b = 0; b < cfg.sequences; ++b) {
    auto rng = make_rng(cfg.seed, kSeqStream + b);

    // Boundaries: events - 1 distinct cut points in [1, T).
    std::vector<std::size_t> cuts;
    if (cfg.events > 1) {
      cuts = sample_distinct(cfg.length - 1, cfg.events - 1, rng);
      for (auto& c : cuts) c += 1;
      std::sort(cuts.begin(), cuts.end());
    }
    cuts.insert(cuts.begin(), 0);
    cuts.push_back(cfg.length);

    SequenceMeta meta;
    std::vector<std::size_t> event_of(cfg.length);
    Eigen::MatrixXd slow(cfg.length, cfg.n);
    for (std::size_t e = 0; e < cfg.events; ++e) {
      Eigen::VectorXd g(cfg.slow_dim);
      for (auto& v : g) v = nd(rng);
      Eigen::VectorXd s = out.slow_basis * g;
      s *= cfg.slow_scale / s.norm();
      for (std::size_t t = cuts[e]; t < cuts[e + 1]; ++t) {
        slow.row(static_cast<Eigen::Index>(t)) = s.transpose();
        event_of[t] = e;
      }
      meta.events.push_back({cuts[e], cuts[e + 1], "event_" + std::to_string(e)});
    }

    Eigen::MatrixXd fast = Eigen::MatrixXd::Zero(cfg.length, cfg.n);
    for (std::size_t t = 0; t < cfg.length; ++t) {
      auto row = static_cast<Eigen::Index>(t);
      for (auto j : sample_distinct(cfg.fast_atoms, cfg.fast_k, rng)) {
        double c = mag(rng) * cfg.fast_scale * (coin(rng) ? 1.0 : -1.0);
        fast.row(row) += c * out.fast_dictionary.col(static_cast<Eigen::Index>(j)).transpose();
      }
      if (cfg.noise > 0.0) {
        for (std::size_t d = 0; d < cfg.n; ++d) fast(row, static_cast<Eigen::Index>(d)) += cfg.noise * nd(rng);
      }
    }

    out.set.add_sequence(slow + fast, std::move(meta));
    out.slow.push_back(std::move(slow));
    out.fast.push_back(std::move(fast));
    out.event_of.push_back(std::move(event_of));
  }
  out.set.source = "synthetic:events";
  return out;
}

ActivationSet gen_manifold_circle(std::size_t points, std::size_t ambient_dim, double noise,
                                  std::uint64_t seed) {
  if (ambient_dim < 2) throw ConfigError("circle needs ambient_dim >= 2");
  if (points == 0) throw ConfigError("circle needs at least one point");
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  auto rng = make_rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(points, ambient_dim);
  for (std::size_t i = 0; i < points; ++i) {
    double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(points);
    auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = std::cos(theta);
    x(r, 1) = std::sin(theta);
    if (noise > 0.0) {
      for (Eigen::Index d = 0; d < x.cols(); ++d) x(r, d) += noise * nd(rng);
    }
  }
  ActivationSet set(ambient_dim);
  set.add_sequence(std::move(x));
  set.source = "synthetic:circle";
  return set;
}

}  // namespace tfa
