#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support/oracles.hpp"
#include "tfa/datagen.hpp"
#include "tfa/error.hpp"

namespace {

tfa::DictionaryProcessConfig small_process(std::vector<std::size_t> schedule, std::uint64_t seed) {
  tfa::DictionaryProcessConfig cfg;
  cfg.n = 8;
  cfg.atoms = 16;
  cfg.length = schedule.size();
  cfg.sequences = 5;
  cfg.schedule = std::move(schedule);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("schedules") {
  CHECK(tfa::staircase_schedule(17, 8) == std::vector<std::size_t>{1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2,
                                                                     2, 2, 2, 2, 2, 3});
  CHECK(tfa::linear_schedule(5, 3) == std::vector<std::size_t>{1, 2, 3, 3, 3});
  CHECK(tfa::constant_schedule(2, 3) == std::vector<std::size_t>{2, 2, 2});
}

TEST_CASE("planted dictionary has unit columns and reported coherence") {
  auto d = tfa::gen_dictionary_process(small_process(tfa::constant_schedule(2, 4), 1));
  const auto& v = d.process.dictionary;
  CHECK(v.rows() == 8);
  CHECK(v.cols() == 16);
  for (Eigen::Index j = 0; j < v.cols(); ++j) CHECK(std::abs(v.col(j).norm() - 1.0) < 1e-12);
  CHECK(d.process.coherence == doctest::Approx(tfa::max_coherence(v)));
  CHECK(d.process.coherence < 1.0);
}

TEST_CASE("constant k=1 gives single dictionary columns") {
  auto d = tfa::gen_dictionary_process(small_process(tfa::constant_schedule(1, 10), 2));
  const auto& v = d.process.dictionary;
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    for (Eigen::Index t = 0; t < 10; ++t) {
      Eigen::Index j;
      d.codes[b].row(t).maxCoeff(&j);
      CHECK((d.codes[b].row(t).array() != 0.0).count() == 1);
      CHECK((d.set.sequences[b].row(t).transpose() - v.col(j)).norm() < 1e-12);
    }
  }
}

TEST_CASE("rows are unit norm and codes reconstruct the data") {
  auto d = tfa::gen_dictionary_process(small_process(tfa::linear_schedule(12, 16), 3));
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    const auto& x = d.set.sequences[b];
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      CHECK(std::abs(x.row(t).norm() - 1.0) < 1e-9);
      CHECK((d.codes[b].row(t).array() != 0.0).count() == std::min<Eigen::Index>(t + 1, 16));
      Eigen::VectorXd raw = d.process.dictionary * d.codes[b].row(t).transpose();
      CHECK((raw - d.row_norms[b](t) * x.row(t).transpose()).norm() < 1e-9);
      CHECK(d.codes[b].row(t).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("nested pool restricts early positions to a prefix of the atom ordering") {
  auto cfg = small_process(tfa::staircase_schedule(32, 8), 4);  // k_max = 4, pools 4, 8, 12, 16
  cfg.sequences = 20;
  auto d = tfa::gen_dictionary_process(cfg);
  const auto& order = d.process.atom_order;
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    for (Eigen::Index t = 0; t < 32; ++t) {
      std::size_t pool = 4 * (1 + static_cast<std::size_t>(t) / 8);
      for (std::size_t slot = pool; slot < 16; ++slot) {
        CHECK(d.codes[b](t, static_cast<Eigen::Index>(order[slot])) == 0.0);
      }
    }
  }
}

TEST_CASE("planted process contract errors and determinism") {
  CHECK_THROWS_AS(tfa::gen_dictionary_process(small_process(tfa::constant_schedule(17, 3), 1)),
                  tfa::ConfigError);
  auto cfg = small_process(tfa::constant_schedule(2, 3), 1);
  cfg.length = 4;
  CHECK_THROWS_AS(tfa::gen_dictionary_process(cfg), tfa::ConfigError);

  auto a = tfa::gen_dictionary_process(small_process(tfa::staircase_schedule(16, 4), 9));
  auto b = tfa::gen_dictionary_process(small_process(tfa::staircase_schedule(16, 4), 9));
  auto c = tfa::gen_dictionary_process(small_process(tfa::staircase_schedule(16, 4), 10));
  for (std::size_t i = 0; i < a.set.size(); ++i) CHECK(a.set.sequences[i] == b.set.sequences[i]);
  CHECK(a.set.sequences[0] != c.set.sequences[0]);
}

TEST_CASE("event sequences without innovations are constant within events") {
  tfa::EventConfig cfg;
  cfg.n = 6;
  cfg.length = 30;
  cfg.sequences = 4;
  cfg.events = 3;
  cfg.slow_dim = 2;
  cfg.fast_k = 0;
  cfg.noise = 0.0;
  cfg.seed = 5;
  auto d = tfa::gen_event_sequences(cfg);
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    const auto& x = d.set.sequences[b];
    for (const auto& e : d.set.meta[b].events) {
      for (std::size_t t = e.start + 1; t < e.end; ++t) {
        CHECK(x.row(static_cast<Eigen::Index>(t)) == x.row(static_cast<Eigen::Index>(e.start)));
      }
    }
  }
}

TEST_CASE("event spans tile the sequence and components add up") {
  tfa::EventConfig cfg;
  cfg.n = 10;
  cfg.length = 40;
  cfg.sequences = 6;
  cfg.events = 4;
  cfg.seed = 6;
  auto d = tfa::gen_event_sequences(cfg);
  d.set.validate();
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    const auto& ev = d.set.meta[b].events;
    REQUIRE(ev.size() == 4);
    CHECK(ev.front().start == 0);
    CHECK(ev.back().end == 40);
    for (std::size_t e = 1; e < ev.size(); ++e) CHECK(ev[e].start == ev[e - 1].end);
    CHECK((d.set.sequences[b] - d.slow[b] - d.fast[b]).norm() < 1e-12);
    for (Eigen::Index t = 0; t < 40; ++t) {
      CHECK(d.slow[b].row(t).norm() == doctest::Approx(1.0));
      // slow vectors live in the slow subspace
      Eigen::VectorXd s = d.slow[b].row(t).transpose();
      CHECK((d.slow_basis * (d.slow_basis.transpose() * s) - s).norm() < 1e-12);
    }
  }
  CHECK((d.slow_basis.transpose() * d.slow_basis - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("raw event activations are more similar within events") {
  tfa::EventConfig cfg;
  cfg.sequences = 8;
  cfg.seed = 7;
  auto d = tfa::gen_event_sequences(cfg);
  double within = 0, across = 0;
  std::size_t nw = 0, na = 0;
  for (std::size_t b = 0; b < d.set.size(); ++b) {
    Eigen::MatrixXd x = d.set.sequences[b];
    x.rowwise().normalize();
    Eigen::MatrixXd g = x * x.transpose();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        if (i == j) continue;
        if (d.event_of[b][static_cast<std::size_t>(i)] == d.event_of[b][static_cast<std::size_t>(j)]) {
          within += g(i, j);
          ++nw;
        } else {
          across += g(i, j);
          ++na;
        }
      }
    }
  }
  CHECK(within / static_cast<double>(nw) > across / static_cast<double>(na));
}

TEST_CASE("circle points") {
  auto set = tfa::gen_manifold_circle(64, 3, 0.0, 1);
  REQUIRE(set.size() == 1);
  const auto& x = set.sequences[0];
  CHECK(x.rows() == 64);
  double chord = 2.0 * std::sin(std::numbers::pi / 64.0);
  for (Eigen::Index i = 0; i < 64; ++i) {
    CHECK(x.row(i).norm() == doctest::Approx(1.0));
    CHECK(x(i, 2) == 0.0);
    CHECK((x.row((i + 1) % 64) - x.row(i)).norm() == doctest::Approx(chord));
  }
  auto a = tfa::gen_manifold_circle(32, 4, 0.1, 3);
  auto b = tfa::gen_manifold_circle(32, 4, 0.1, 3);
  CHECK(a.sequences[0] == b.sequences[0]);
  CHECK_THROWS_AS(tfa::gen_manifold_circle(10, 1, 0.0, 1), tfa::ConfigError);
}
