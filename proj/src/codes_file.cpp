#include "tfa/codes_file.hpp"

#include <cmath>

#include "binio.hpp"
#include "tfa/error.hpp"

namespace tfa {

void CodeSet::validate() const {
  if (latents == 0) throw DataError("code set has zero latents");
  if (has_predictive() && predictive.size() != sparse.size()) {
    throw DataError("predictive and sparse code counts differ");
  }
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    const auto& s = sparse[i];
    if (s.rows() == 0) throw DataError("sequence " + std::to_string(i) + " has no tokens");
    if (static_cast<std::size_t>(s.cols()) != latents) {
      throw DataError("sequence " + std::to_string(i) + " has the wrong code width");
    }
    if (has_predictive() && (predictive[i].rows() != s.rows() || predictive[i].cols() != s.cols())) {
      throw DataError("sequence " + std::to_string(i) + " predictive codes have the wrong shape");
    }
  }
}

void save_codes(const CodeSet& codes, const std::filesystem::path& path) {
  codes.validate();
  detail::ByteWriter w;
  w.put_magic("TFAC");
  w.put(kTfacVersion);
  w.put(static_cast<std::uint16_t>(codes.has_predictive() ? 1 : 0));
  w.put(static_cast<std::uint32_t>(codes.kind));
  w.put(static_cast<std::uint32_t>(codes.sparse.size()));
  w.put(static_cast<std::uint32_t>(codes.latents));
  for (const auto& s : codes.sparse) w.put(static_cast<std::uint32_t>(s.rows()));
  for (std::size_t i = 0; i < codes.sparse.size(); ++i) {
    const auto& s = codes.sparse[i];
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
      if (codes.has_predictive()) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) w.put(static_cast<float>(codes.predictive[i](t, j)));
      }
      auto nnz = static_cast<std::uint32_t>((s.row(t).array() != 0.0).count());
      w.put(nnz);
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        if (s(t, j) == 0.0) continue;
        w.put(static_cast<std::uint32_t>(j));
        w.put(static_cast<float>(s(t, j)));
      }
    }
  }
  w.write_file(path);
}

CodeSet load_codes(const std::filesystem::path& path) {
  using Kind = FormatError::Kind;
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("TFAC");
  r.expect_version(kTfacVersion);
  std::size_t flags_at = r.offset();
  auto flags = r.get<std::uint16_t>("flags");
  if (flags > 1) throw FormatError(Kind::kBadField, flags_at, "unsupported flags " + std::to_string(flags));
  std::size_t kind_at = r.offset();
  auto kind = r.get<std::uint32_t>("kind");
  if (kind > static_cast<std::uint32_t>(ModelKind::kTemporalPredOnly)) {
    throw FormatError(Kind::kBadField, kind_at, "unknown model kind " + std::to_string(kind));
  }
  auto n_seq = r.get<std::uint32_t>("sequence count");
  std::size_t m_at = r.offset();
  auto m = r.get<std::uint32_t>("latents");
  if (m == 0) throw FormatError(Kind::kZeroDim, m_at, "latents is 0");

  CodeSet out;
  out.kind = static_cast<ModelKind>(kind);
  out.latents = m;
  r.require(static_cast<std::size_t>(n_seq) * 4, "length table");
  std::vector<std::uint32_t> lengths(n_seq);
  for (std::uint32_t i = 0; i < n_seq; ++i) {
    std::size_t at = r.offset();
    lengths[i] = r.get<std::uint32_t>("length table");
    if (lengths[i] == 0) {
      throw FormatError(Kind::kZeroLengthSequence, at, "sequence " + std::to_string(i) + " has length 0");
    }
  }
  const bool pred = (flags & 1) != 0;
  auto finite = [&](float v, std::size_t at) {
    if (!std::isfinite(v)) throw FormatError(Kind::kBadField, at, "non-finite code value");
    return static_cast<double>(v);
  };
  for (std::uint32_t i = 0; i < n_seq; ++i) {
    Eigen::MatrixXd sparse = Eigen::MatrixXd::Zero(lengths[i], m);
    Eigen::MatrixXd dense;
    if (pred) dense.resize(lengths[i], m);
    for (std::uint32_t t = 0; t < lengths[i]; ++t) {
      if (pred) {
        for (std::uint32_t j = 0; j < m; ++j) {
          std::size_t at = r.offset();
          dense(t, j) = finite(r.get<float>("predictive code"), at);
        }
      }
      std::size_t nnz_at = r.offset();
      auto nnz = r.get<std::uint32_t>("nonzero count");
      if (nnz > m) throw FormatError(Kind::kBadField, nnz_at, "more nonzeros than latents");
      std::int64_t prev = -1;
      for (std::uint32_t e = 0; e < nnz; ++e) {
        std::size_t at = r.offset();
        auto idx = r.get<std::uint32_t>("code index");
        if (idx >= m || static_cast<std::int64_t>(idx) <= prev) {
          throw FormatError(Kind::kBadField, at, "code index out of range or out of order");
        }
        prev = idx;
        std::size_t val_at = r.offset();
        sparse(t, idx) = finite(r.get<float>("code value"), val_at);
      }
    }
    out.sparse.push_back(std::move(sparse));
    if (pred) out.predictive.push_back(std::move(dense));
  }
  if (r.remaining() != 0) {
    throw FormatError(Kind::kBadField, r.offset(), std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

}  // namespace tfa
