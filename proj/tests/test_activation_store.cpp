#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

#include "support/oracles.hpp"
#include "tfa/activation_store.hpp"
#include "tfa/error.hpp"

using tfa::ActivationSet;
using tfa::FormatError;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void poke(std::vector<char>& bytes, std::size_t at, T value) {
  std::memcpy(bytes.data() + at, &value, sizeof(T));
}

FormatError::Kind load_error_kind(const std::filesystem::path& p, std::size_t* offset = nullptr) {
  try {
    tfa::load_activations(p);
  } catch (const FormatError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  FAIL("expected a format error");
  return FormatError::Kind::kIo;
}

}  // namespace

TEST_CASE("single sequence round trip") {
  oracle::TempDir dir;
  ActivationSet set(3);
  Eigen::MatrixXd rows(2, 3);
  rows << 1, 0, 0, 0, 1, 0;
  set.add_sequence(rows);
  tfa::save_activations(set, dir / "a.tfa1");
  auto back = tfa::load_activations(dir / "a.tfa1");
  REQUIRE(back.size() == 1);
  CHECK(back.dim == 3);
  CHECK(back.sequences[0] == rows);
  CHECK_FALSE(std::filesystem::exists(tfa::sidecar_path(dir / "a.tfa1")));
}

TEST_CASE("header and size arithmetic") {
  oracle::TempDir dir;
  ActivationSet set(4);
  set.add_sequence(Eigen::MatrixXd::Ones(3, 4));
  set.add_sequence(Eigen::MatrixXd::Ones(5, 4));
  tfa::save_activations(set, dir / "a.tfa1");
  auto bytes = read_bytes(dir / "a.tfa1");
  CHECK(bytes.size() == 16 + 2 * 4 + 8 * 4 * 4);
  CHECK(std::string(bytes.data(), 4) == "TFA1");
  std::uint16_t version;
  std::uint32_t n_seq, dim, l0, l1;
  std::memcpy(&version, bytes.data() + 4, 2);
  std::memcpy(&n_seq, bytes.data() + 8, 4);
  std::memcpy(&dim, bytes.data() + 12, 4);
  std::memcpy(&l0, bytes.data() + 16, 4);
  std::memcpy(&l1, bytes.data() + 20, 4);
  CHECK(version == 1);
  CHECK(n_seq == 2);
  CHECK(dim == 4);
  CHECK(l0 == 3);
  CHECK(l1 == 5);
}

TEST_CASE("empty set is a valid file") {
  oracle::TempDir dir;
  ActivationSet set(7);
  tfa::save_activations(set, dir / "e.tfa1");
  CHECK(read_bytes(dir / "e.tfa1").size() == 16);
  auto back = tfa::load_activations(dir / "e.tfa1");
  CHECK(back.size() == 0);
  CHECK(back.dim == 7);
}

TEST_CASE("randomized round trips are bitwise identical") {
  oracle::TempDir dir;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto set = oracle::random_set(1 + seed % 5, 1 + seed % 7, 9, seed);
    auto p = dir / ("r" + std::to_string(seed) + ".tfa1");
    tfa::save_activations(set, p);
    auto first = read_bytes(p);
    auto back = tfa::load_activations(p);
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(back.sequences[i] == set.sequences[i]);
    tfa::save_activations(back, p);
    CHECK(read_bytes(p) == first);
  }
}

TEST_CASE("metadata sidecar round trip") {
  oracle::TempDir dir;
  ActivationSet set(2);
  tfa::SequenceMeta m;
  m.tokens = {"the", "old", "man"};
  m.events = {{0, 1, "SP"}, {1, 3, "V"}};
  m.source = "doc-1";
  set.add_sequence(Eigen::MatrixXd::Ones(3, 2), m);
  set.add_sequence(Eigen::MatrixXd::Ones(1, 2));
  set.source = "unit";
  set.layer = 12;
  tfa::save_activations(set, dir / "m.tfa1");
  REQUIRE(std::filesystem::exists(tfa::sidecar_path(dir / "m.tfa1")));
  auto back = tfa::load_activations(dir / "m.tfa1");
  CHECK(back.meta[0] == m);
  CHECK(back.meta[1].empty());
  CHECK(back.source == "unit");
  CHECK(back.layer == 12);
  CHECK_FALSE(back.norm_scale.has_value());
}

TEST_CASE("format errors are distinct and carry offsets") {
  oracle::TempDir dir;
  ActivationSet set(3);
  set.add_sequence(Eigen::MatrixXd::Ones(2, 3));
  auto p = dir / "ok.tfa1";
  tfa::save_activations(set, p);
  auto good = read_bytes(p);

  SUBCASE("bad magic") {
    auto b = good;
    std::memcpy(b.data(), "XXXX", 4);
    write_bytes(p, b);
    std::size_t off = 99;
    CHECK(load_error_kind(p, &off) == FormatError::Kind::kBadMagic);
    CHECK(off == 0);
  }
  SUBCASE("version mismatch") {
    auto b = good;
    poke<std::uint16_t>(b, 4, 2);
    write_bytes(p, b);
    std::size_t off = 0;
    CHECK(load_error_kind(p, &off) == FormatError::Kind::kVersionMismatch);
    CHECK(off == 4);
  }
  SUBCASE("dim zero") {
    auto b = good;
    poke<std::uint32_t>(b, 12, 0);
    write_bytes(p, b);
    std::size_t off = 0;
    CHECK(load_error_kind(p, &off) == FormatError::Kind::kZeroDim);
    CHECK(off == 12);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 3);
    write_bytes(p, b);
    std::size_t off = 0;
    CHECK(load_error_kind(p, &off) == FormatError::Kind::kTruncated);
    CHECK(off == 20);
  }
  SUBCASE("truncated header") {
    auto b = good;
    b.resize(10);
    write_bytes(p, b);
    CHECK(load_error_kind(p) == FormatError::Kind::kTruncated);
  }
  SUBCASE("zero-length sequence") {
    auto b = good;
    poke<std::uint32_t>(b, 16, 0);
    write_bytes(p, b);
    std::size_t off = 0;
    CHECK(load_error_kind(p, &off) == FormatError::Kind::kZeroLengthSequence);
    CHECK(off == 16);
  }
  SUBCASE("missing file") {
    CHECK(load_error_kind(dir / "nope.tfa1") == FormatError::Kind::kIo);
  }
}

TEST_CASE("sidecar sequence count must match") {
  oracle::TempDir dir;
  ActivationSet set(1);
  set.add_sequence(Eigen::MatrixXd::Ones(2, 1));
  auto p = dir / "s.tfa1";
  tfa::save_activations(set, p);
  std::ofstream(tfa::sidecar_path(p)) << R"({"sequences": [{}, {}]})";
  CHECK_THROWS_AS(tfa::load_activations(p), tfa::DataError);
}

TEST_CASE("event spans are validated") {
  ActivationSet set(1);
  tfa::SequenceMeta overlap;
  overlap.events = {{0, 2, "a"}, {1, 3, "b"}};
  set.add_sequence(Eigen::MatrixXd::Ones(3, 1), overlap);
  CHECK_THROWS_AS(set.validate(), tfa::DataError);

  ActivationSet out_of_range(1);
  tfa::SequenceMeta m;
  m.events = {{0, 4, "a"}};
  out_of_range.add_sequence(Eigen::MatrixXd::Ones(3, 1), m);
  CHECK_THROWS_AS(out_of_range.validate(), tfa::DataError);
}

TEST_CASE("normalization to unit expected norm") {
  SUBCASE("single row of norm 2") {
    ActivationSet set(2);
    set.add_sequence(Eigen::RowVector2d(2.0, 0.0));
    auto [out, c] = tfa::normalize_unit_expected_norm(set);
    CHECK(c == doctest::Approx(0.5));
    CHECK(out.sequences[0].row(0).norm() == doctest::Approx(1.0));
    CHECK(out.norm_scale == doctest::Approx(0.5));
  }
  SUBCASE("norms 2 and 4") {
    ActivationSet set(2);
    Eigen::MatrixXd rows(2, 2);
    rows << 2, 0, 0, 4;
    set.add_sequence(rows);
    auto [out, c] = tfa::normalize_unit_expected_norm(set);
    CHECK(c == doctest::Approx(1.0 / 3.0));
    CHECK(out.sequences[0].row(0).norm() == doctest::Approx(2.0 / 3.0));
    CHECK(out.sequences[0].row(1).norm() == doctest::Approx(4.0 / 3.0));
  }
  SUBCASE("already normalized") {
    ActivationSet set(1);
    set.add_sequence(Eigen::MatrixXd::Ones(1, 1));
    auto [out, c] = tfa::normalize_unit_expected_norm(set);
    CHECK_THROWS_AS(tfa::normalize_unit_expected_norm(out), tfa::DataError);
  }
  SUBCASE("all zero") {
    ActivationSet set(2);
    set.add_sequence(Eigen::MatrixXd::Zero(3, 2));
    CHECK_THROWS_AS(tfa::normalize_unit_expected_norm(set), tfa::DataError);
  }
  SUBCASE("random sets reach mean norm one") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto set = oracle::random_set(4, 5, 12, seed);
      auto [out, c] = tfa::normalize_unit_expected_norm(set);
      double sum = 0;
      std::size_t n = 0;
      for (const auto& s : out.sequences) {
        sum += s.rowwise().norm().sum();
        n += static_cast<std::size_t>(s.rows());
      }
      CHECK(std::abs(sum / static_cast<double>(n) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("normalization scale survives save and load") {
  oracle::TempDir dir;
  auto set = oracle::random_set(3, 4, 6, 5);
  auto [out, c] = tfa::normalize_unit_expected_norm(set);
  tfa::save_activations(out, dir / "n.tfa1");
  auto back = tfa::load_activations(dir / "n.tfa1");
  REQUIRE(back.norm_scale.has_value());
  CHECK(*back.norm_scale == c);
}

TEST_CASE("permutation surrogate") {
  SUBCASE("length-one sequences are unchanged") {
    auto set = oracle::random_set(5, 3, 1, 1);
    auto out = tfa::permutation_surrogate(set, 9);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(out.sequences[i] == set.sequences[i]);
  }
  SUBCASE("row multisets are preserved") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto set = oracle::random_set(4, 3, 20, seed);
      auto out = tfa::permutation_surrogate(set, seed + 100);
      for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(oracle::sorted_rows(out.sequences[i]) == oracle::sorted_rows(set.sequences[i]));
      }
    }
  }
  SUBCASE("seeded determinism") {
    auto set = oracle::random_set(3, 4, 30, 2);
    auto a = tfa::permutation_surrogate(set, 7);
    auto b = tfa::permutation_surrogate(set, 7);
    auto c = tfa::permutation_surrogate(set, 8);
    bool differs = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(a.sequences[i] == b.sequences[i]);
      differs = differs || a.sequences[i] != c.sequences[i];
    }
    CHECK(differs);
  }
}

TEST_CASE("token batches cover every token once per epoch") {
  ActivationSet set(1);
  double id = 0;
  for (int len : {3, 7, 1, 5}) {
    Eigen::MatrixXd m(len, 1);
    for (int t = 0; t < len; ++t) m(t, 0) = id++;
    set.add_sequence(m);
  }
  tfa::BatchIterator it(set, 4, 11, tfa::BatchMode::kToken);
  CHECK(it.batches_per_epoch() == 4);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<double> seen;
    for (std::size_t b = 0; b < it.batches_per_epoch(); ++b) {
      auto batch = it.next();
      CHECK(batch.epoch == static_cast<std::size_t>(epoch));
      CHECK(batch.tokens.rows() <= 4);
      for (Eigen::Index r = 0; r < batch.tokens.rows(); ++r) seen.insert(batch.tokens(r, 0));
    }
    CHECK(seen.size() == 16);
    CHECK(std::set<double>(seen.begin(), seen.end()).size() == 16);
  }
}

TEST_CASE("sequence batches keep sequences whole") {
  auto set = oracle::random_set(10, 2, 9, 4);
  tfa::BatchIterator it(set, 12, 3, tfa::BatchMode::kSequence);
  std::multiset<std::size_t> seen;
  std::size_t first_epoch = 0;
  while (true) {
    auto b = it.next();
    if (b.epoch != 0) break;
    ++first_epoch;
    std::size_t tokens = 0;
    for (auto s : b.sequences) {
      seen.insert(s);
      tokens += static_cast<std::size_t>(set.sequences[s].rows());
    }
    CHECK((tokens <= 12 || b.sequences.size() == 1));
  }
  CHECK(seen.size() == 10);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
}

TEST_CASE("batch streams are seeded and seekable") {
  auto set = oracle::random_set(6, 3, 10, 8);
  for (auto mode : {tfa::BatchMode::kToken, tfa::BatchMode::kSequence}) {
    tfa::BatchIterator a(set, 7, 5, mode);
    tfa::BatchIterator b(set, 7, 5, mode);
    std::vector<tfa::Batch> trace;
    for (int i = 0; i < 25; ++i) {
      auto x = a.next();
      auto y = b.next();
      CHECK(x.tokens == y.tokens);
      CHECK(x.sequences == y.sequences);
      trace.push_back(x);
    }
    for (std::size_t start : {0u, 3u, 11u, 24u}) {
      tfa::BatchIterator c(set, 7, 5, mode);
      c.seek(start);
      auto z = c.next();
      CHECK(z.tokens == trace[start].tokens);
      CHECK(z.sequences == trace[start].sequences);
      CHECK(z.epoch == trace[start].epoch);
    }
  }
}

TEST_CASE("zero batch size is rejected") {
  auto set = oracle::random_set(2, 2, 3, 1);
  CHECK_THROWS_AS(tfa::BatchIterator(set, 0, 1, tfa::BatchMode::kToken), tfa::ConfigError);
}
