#include "tfa/activation_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "binio.hpp"
#include "tfa/error.hpp"
#include "tfa/rng.hpp"

namespace tfa {

using nlohmann::json;

std::size_t ActivationSet::total_tokens() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += static_cast<std::size_t>(s.rows());
  return n;
}

std::size_t ActivationSet::min_length() const {
  std::size_t m = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    auto t = static_cast<std::size_t>(sequences[i].rows());
    m = (i == 0) ? t : std::min(m, t);
  }
  return m;
}

std::size_t ActivationSet::max_length() const {
  std::size_t m = 0;
  for (const auto& s : sequences) m = std::max(m, static_cast<std::size_t>(s.rows()));
  return m;
}

void ActivationSet::add_sequence(Eigen::MatrixXd rows, SequenceMeta m) {
  if (static_cast<std::size_t>(rows.cols()) != dim) {
    throw DataError("sequence has " + std::to_string(rows.cols()) + " columns, set dim is " +
                    std::to_string(dim));
  }
  sequences.push_back(std::move(rows));
  meta.push_back(std::move(m));
}

bool ActivationSet::has_metadata() const {
  if (norm_scale || layer || !source.empty()) return true;
  return std::any_of(meta.begin(), meta.end(), [](const SequenceMeta& m) { return !m.empty(); });
}

Eigen::MatrixXd ActivationSet::stacked() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(total_tokens()), static_cast<Eigen::Index>(dim));
  Eigen::Index r = 0;
  for (const auto& s : sequences) {
    out.middleRows(r, s.rows()) = s;
    r += s.rows();
  }
  return out;
}

namespace {

double mean_row_norm(const ActivationSet& set) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : set.sequences) {
    sum += s.rowwise().norm().sum();
    count += static_cast<std::size_t>(s.rows());
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void validate_meta(const SequenceMeta& m, std::size_t length, std::size_t index) {
  const std::string where = "sequence " + std::to_string(index);
  if (!m.tokens.empty() && m.tokens.size() != length) {
    throw DataError(where + ": " + std::to_string(m.tokens.size()) + " tokens for " +
                    std::to_string(length) + " rows");
  }
  std::size_t prev_end = 0;
  for (const auto& e : m.events) {
    if (e.start >= e.end || e.end > length) {
      throw DataError(where + ": event [" + std::to_string(e.start) + ", " +
                      std::to_string(e.end) + ") out of range");
    }
    if (e.start < prev_end) {
      throw DataError(where + ": events overlap or are unsorted at start " +
                      std::to_string(e.start));
    }
    prev_end = e.end;
  }
}

}  // namespace

void ActivationSet::validate() const {
  if (dim == 0) throw DataError("activation set has dim 0");
  if (meta.size() != sequences.size()) throw DataError("metadata count does not match sequences");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (static_cast<std::size_t>(s.cols()) != dim) {
      throw DataError("sequence " + std::to_string(i) + " has wrong column count");
    }
    if (s.rows() == 0) throw DataError("sequence " + std::to_string(i) + " is empty");
    if (!s.allFinite()) throw DataError("sequence " + std::to_string(i) + " has non-finite entries");
    validate_meta(meta[i], static_cast<std::size_t>(s.rows()), i);
  }
  if (norm_scale) {
    if (!(*norm_scale > 0.0) || !std::isfinite(*norm_scale)) {
      throw DataError("norm_scale must be positive and finite");
    }
    if (total_tokens() > 0 && std::abs(mean_row_norm(*this) - 1.0) > 1e-6) {
      throw DataError("set records a norm_scale but its mean row norm is " +
                      std::to_string(mean_row_norm(*this)));
    }
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

namespace {

json meta_to_json(const ActivationSet& set) {
  json j = json::object();
  if (!set.source.empty()) j["source"] = set.source;
  if (set.layer) j["layer"] = *set.layer;
  if (set.norm_scale) j["norm_scale"] = *set.norm_scale;
  json seqs = json::array();
  for (const auto& m : set.meta) {
    json s = json::object();
    if (!m.tokens.empty()) s["tokens"] = m.tokens;
    if (!m.events.empty()) {
      json ev = json::array();
      for (const auto& e : m.events) ev.push_back({{"start", e.start}, {"end", e.end}, {"label", e.label}});
      s["events"] = ev;
    }
    if (!m.source.empty()) s["source"] = m.source;
    seqs.push_back(s);
  }
  j["sequences"] = seqs;
  return j;
}

void read_sidecar(ActivationSet& set, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sidecar " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed sidecar " + path.string() + ": " + e.what());
  }
  try {
    if (j.contains("source")) set.source = j.at("source").get<std::string>();
    if (j.contains("layer") && !j.at("layer").is_null()) set.layer = j.at("layer").get<int>();
    if (j.contains("norm_scale") && !j.at("norm_scale").is_null()) {
      set.norm_scale = j.at("norm_scale").get<double>();
    }
    if (j.contains("sequences")) {
      const auto& seqs = j.at("sequences");
      if (seqs.size() != set.sequences.size()) {
        throw DataError("sidecar lists " + std::to_string(seqs.size()) + " sequences, file has " +
                        std::to_string(set.sequences.size()));
      }
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        auto& m = set.meta[i];
        const auto& s = seqs[i];
        if (s.contains("tokens")) m.tokens = s.at("tokens").get<std::vector<std::string>>();
        if (s.contains("source")) m.source = s.at("source").get<std::string>();
        if (s.contains("events")) {
          for (const auto& e : s.at("events")) {
            m.events.push_back({e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>(),
                                e.value("label", std::string())});
          }
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError("bad field in sidecar " + path.string() + ": " + e.what());
  }
}

}  // namespace

ActivationSet load_activations(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("TFA1");
  r.expect_version(kTfa1Version);
  std::size_t flags_at = r.offset();
  if (auto flags = r.get<std::uint16_t>("flags"); flags != 0) {
    throw FormatError(FormatError::Kind::kBadField, flags_at,
                      "unsupported flags " + std::to_string(flags));
  }
  auto n_seq = r.get<std::uint32_t>("sequence count");
  std::size_t dim_at = r.offset();
  auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError(FormatError::Kind::kZeroDim, dim_at, "dim is 0");

  r.require(static_cast<std::size_t>(n_seq) * 4, "length table");
  std::vector<std::uint32_t> lengths(n_seq);
  for (std::uint32_t i = 0; i < n_seq; ++i) {
    std::size_t at = r.offset();
    lengths[i] = r.get<std::uint32_t>("length table");
    if (lengths[i] == 0) {
      throw FormatError(FormatError::Kind::kZeroLengthSequence, at,
                        "sequence " + std::to_string(i) + " has length 0");
    }
  }

  ActivationSet set(dim);
  std::vector<float> buf;
  for (std::uint32_t i = 0; i < n_seq; ++i) {
    std::size_t count = static_cast<std::size_t>(lengths[i]) * dim;
    buf.resize(count);
    r.get_bytes(buf.data(), count * sizeof(float), "payload");
    Eigen::MatrixXd m(lengths[i], dim);
    for (std::uint32_t t = 0; t < lengths[i]; ++t) {
      for (std::uint32_t d = 0; d < dim; ++d) m(t, d) = buf[static_cast<std::size_t>(t) * dim + d];
    }
    if (!m.allFinite()) {
      throw FormatError(FormatError::Kind::kBadField, r.offset() - count * sizeof(float),
                        "sequence " + std::to_string(i) + " has non-finite values");
    }
    set.sequences.push_back(std::move(m));
    set.meta.emplace_back();
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kBadField, r.offset(),
                      std::to_string(r.remaining()) + " trailing bytes after payload");
  }

  auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) read_sidecar(set, side);
  set.validate();
  return set;
}

void save_activations(const ActivationSet& set, const std::filesystem::path& path) {
  set.validate();
  detail::ByteWriter w;
  w.put_magic("TFA1");
  w.put(kTfa1Version);
  w.put(std::uint16_t{0});
  w.put(static_cast<std::uint32_t>(set.size()));
  w.put(static_cast<std::uint32_t>(set.dim));
  for (const auto& s : set.sequences) w.put(static_cast<std::uint32_t>(s.rows()));
  for (const auto& s : set.sequences) {
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
      for (Eigen::Index d = 0; d < s.cols(); ++d) w.put(static_cast<float>(s(t, d)));
    }
  }
  w.write_file(path);

  auto side = sidecar_path(path);
  if (set.has_metadata()) {
    std::ofstream out(side, std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot write " + side.string());
    out << meta_to_json(set).dump(2) << '\n';
  } else if (std::filesystem::exists(side)) {
    std::filesystem::remove(side);
  }
}

std::pair<ActivationSet, double> normalize_unit_expected_norm(const ActivationSet& set) {
  if (set.norm_scale) throw DataError("set is already normalized");
  if (set.total_tokens() == 0) throw DataError("cannot normalize a set without token rows");
  double mean = mean_row_norm(set);
  if (!(mean > 0.0)) throw DataError("cannot normalize all-zero data");
  double c = 1.0 / mean;
  ActivationSet out = apply_scale(set, c);
  return {std::move(out), c};
}

ActivationSet apply_scale(const ActivationSet& set, double scale) {
  if (set.norm_scale) throw DataError("set is already normalized");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DataError("scale must be positive and finite");
  ActivationSet out = set;
  for (auto& s : out.sequences) s *= scale;
  out.norm_scale = scale;
  return out;
}

ActivationSet permutation_surrogate(const ActivationSet& set, std::uint64_t seed) {
  ActivationSet out = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.sequences[i];
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(s.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_rng(seed, i);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t t = 0; t < perm.size(); ++t) {
      out.sequences[i].row(static_cast<Eigen::Index>(t)) = s.row(perm[t]);
    }
  }
  return out;
}

BatchIterator::BatchIterator(const ActivationSet& set, std::size_t batch_tokens,
                             std::uint64_t seed, BatchMode mode)
    : set_(&set), batch_tokens_(batch_tokens), seed_(seed), mode_(mode) {
  if (batch_tokens_ == 0) throw ConfigError("batch size must be at least 1");
  if (set.total_tokens() == 0) throw DataError("cannot batch an empty set");
  if (mode_ == BatchMode::kToken) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (Eigen::Index t = 0; t < set.sequences[i].rows(); ++t) {
        token_index_.emplace_back(i, static_cast<std::size_t>(t));
      }
    }
  }
  start_epoch(0);
}

void BatchIterator::start_epoch(std::size_t epoch) {
  epoch_ = epoch;
  in_epoch_ = 0;
  auto rng = make_rng(seed_, epoch);
  std::size_t n = mode_ == BatchMode::kToken ? token_index_.size() : set_->size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng);

  seq_batch_starts_.clear();
  if (mode_ == BatchMode::kSequence) {
    std::size_t used = 0;
    for (std::size_t j = 0; j < order_.size(); ++j) {
      auto len = static_cast<std::size_t>(set_->sequences[order_[j]].rows());
      if (j == 0 || used + len > batch_tokens_) {
        seq_batch_starts_.push_back(j);
        used = 0;
      }
      used += len;
    }
    seq_batch_starts_.push_back(order_.size());
  }
}

std::size_t BatchIterator::batches_per_epoch() const {
  if (mode_ == BatchMode::kToken) return (token_index_.size() + batch_tokens_ - 1) / batch_tokens_;
  return seq_batch_starts_.size() - 1;
}

Batch BatchIterator::next() {
  if (in_epoch_ >= batches_per_epoch()) start_epoch(epoch_ + 1);
  Batch b;
  b.epoch = epoch_;
  if (mode_ == BatchMode::kToken) {
    std::size_t lo = in_epoch_ * batch_tokens_;
    std::size_t hi = std::min(lo + batch_tokens_, order_.size());
    b.tokens.resize(static_cast<Eigen::Index>(hi - lo), static_cast<Eigen::Index>(set_->dim));
    for (std::size_t j = lo; j < hi; ++j) {
      auto [seq, row] = token_index_[order_[j]];
      b.tokens.row(static_cast<Eigen::Index>(j - lo)) =
          set_->sequences[seq].row(static_cast<Eigen::Index>(row));
    }
  } else {
    for (std::size_t j = seq_batch_starts_[in_epoch_]; j < seq_batch_starts_[in_epoch_ + 1]; ++j) {
      b.sequences.push_back(order_[j]);
    }
  }
  ++in_epoch_;
  ++absolute_;
  return b;
}

void BatchIterator::seek(std::size_t batch_index) {
  if (mode_ == BatchMode::kToken) {
    std::size_t per = batches_per_epoch();
    start_epoch(batch_index / per);
    in_epoch_ = batch_index % per;
    absolute_ = batch_index;
    return;
  }
  start_epoch(0);
  std::size_t left = batch_index;
  while (left >= batches_per_epoch()) {
    left -= batches_per_epoch();
    start_epoch(epoch_ + 1);
  }
  in_epoch_ = left;
  absolute_ = batch_index;
}

}  // namespace tfa
