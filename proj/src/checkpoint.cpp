#include "tfa/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "binio.hpp"
#include "tfa/error.hpp"

namespace tfa {

namespace {

std::uint32_t kind_code(ModelKind k) { return static_cast<std::uint32_t>(k); }

ModelKind kind_from_code(std::uint32_t c, std::size_t offset) {
  if (c > static_cast<std::uint32_t>(ModelKind::kTemporalPredOnly)) {
    throw FormatError(FormatError::Kind::kBadField, offset, "unknown model kind " + std::to_string(c));
  }
  return static_cast<ModelKind>(c);
}

struct Header {
  ModelKind kind = ModelKind::kTopK;
  std::uint32_t n = 0, latents = 0, k = 0, d_attn = 0, novel_kind = 0, value_mode = 0, split = 0;
  double lambda = 0.0;
};

Header header_of(const AnyModel& model) {
  Header h;
  h.kind = kind_of(model);
  h.n = static_cast<std::uint32_t>(input_dim_of(model));
  h.latents = static_cast<std::uint32_t>(latents_of(model));
  if (const auto* s = std::get_if<SaeModel>(&model)) {
    h.k = static_cast<std::uint32_t>(s->k);
    h.lambda = s->lambda;
  } else {
    const auto& t = std::get<TemporalModel>(model);
    h.k = static_cast<std::uint32_t>(t.k);
    h.d_attn = static_cast<std::uint32_t>(t.d_attn);
    h.novel_kind = t.novel_kind == NovelKind::kTopK ? 0 : 1;
    h.value_mode = t.value_mode == ValueMode::kIdentity ? 0 : 1;
    h.split = t.split_dictionary ? 1 : 0;
  }
  return h;
}

AnyModel skeleton(const Header& h) {
  auto n = static_cast<Eigen::Index>(h.n);
  auto m = static_cast<Eigen::Index>(h.latents);
  if (!is_temporal(h.kind)) {
    SaeModel s;
    s.kind = h.kind == ModelKind::kRelu ? SaeKind::kRelu
             : h.kind == ModelKind::kTopK ? SaeKind::kTopK
                                          : SaeKind::kBatchTopK;
    s.k = h.k;
    s.lambda = h.lambda;
    s.w_dec = Eigen::MatrixXd::Zero(n, m);
    s.b_dec = Eigen::VectorXd::Zero(n);
    s.w_enc = Eigen::MatrixXd::Zero(m, n);
    s.b_enc = Eigen::VectorXd::Zero(m);
    return s;
  }
  TemporalModel t;
  t.pred_only = h.kind == ModelKind::kTemporalPredOnly;
  t.k = h.k;
  t.d_attn = h.d_attn;
  t.novel_kind = h.novel_kind == 0 ? NovelKind::kTopK : NovelKind::kBatchTopK;
  t.value_mode = h.value_mode == 0 ? ValueMode::kIdentity : ValueMode::kLearned;
  t.split_dictionary = h.split != 0;
  auto d = static_cast<Eigen::Index>(h.d_attn);
  t.dict = Eigen::MatrixXd::Zero(n, m);
  if (t.split_dictionary) t.dict_novel = Eigen::MatrixXd::Zero(n, m);
  t.b_dec = Eigen::VectorXd::Zero(n);
  t.w_q = Eigen::MatrixXd::Zero(d, m);
  t.w_k = Eigen::MatrixXd::Zero(d, m);
  if (t.value_mode == ValueMode::kLearned) t.w_v = Eigen::MatrixXd::Zero(m, m);
  return t;
}

void put_tensor(detail::ByteWriter& w, const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& t) {
  w.put_string16(name);
  w.put(static_cast<std::uint32_t>(t.rows()));
  w.put(static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) w.put(t(r, c));
  }
}

nlohmann::json sidecar_json(const Checkpoint& ckpt, const Header& h) {
  nlohmann::json j;
  j["format"] = "TFAM";
  j["version"] = kTfamVersion;
  j["kind"] = to_string(h.kind);
  j["input_dim"] = h.n;
  j["latents"] = h.latents;
  j["k"] = h.k;
  if (!is_temporal(h.kind)) {
    j["lambda"] = h.lambda;
  } else {
    const auto& t = std::get<TemporalModel>(ckpt.model);
    j["d_attn"] = h.d_attn;
    j["novel_kind"] = to_string(t.novel_kind);
    j["value_mode"] = to_string(t.value_mode);
    j["split_dictionary"] = t.split_dictionary;
  }
  j["step"] = ckpt.step;
  if (ckpt.norm_scale) j["norm_scale"] = *ckpt.norm_scale;
  j["has_optimizer_state"] = ckpt.adam.has_value();
  return j;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  AnyModel model = ckpt.model;
  auto params = params_of(model);
  if (ckpt.adam && (ckpt.adam->m.size() != params.size() || ckpt.adam->v.size() != params.size())) {
    throw ConfigError("optimizer state does not match model parameters");
  }
  Header h = header_of(model);
  detail::ByteWriter w;
  w.put_magic("TFAM");
  w.put(kTfamVersion);
  w.put(static_cast<std::uint16_t>(ckpt.adam ? 1 : 0));
  w.put(kind_code(h.kind));
  w.put(h.n);
  w.put(h.latents);
  w.put(h.k);
  w.put(h.lambda);
  w.put(h.d_attn);
  w.put(h.novel_kind);
  w.put(h.value_mode);
  w.put(h.split);
  w.put(static_cast<std::uint64_t>(ckpt.step));
  w.put(ckpt.norm_scale.value_or(0.0));
  std::size_t count = params.size() * (ckpt.adam ? 3 : 1);
  w.put(static_cast<std::uint32_t>(count));
  for (const auto& p : params) put_tensor(w, p.name, p.map());
  if (ckpt.adam) {
    for (std::size_t i = 0; i < params.size(); ++i) put_tensor(w, "adam_m/" + params[i].name, ckpt.adam->m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) put_tensor(w, "adam_v/" + params[i].name, ckpt.adam->v[i]);
  }
  w.write_file(path);

  std::ofstream side(path.string() + ".meta.json", std::ios::trunc);
  if (!side) throw FormatError(FormatError::Kind::kIo, 0, "cannot write checkpoint sidecar");
  side << sidecar_json(ckpt, h).dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("TFAM");
  r.expect_version(kTfamVersion);
  std::size_t flags_at = r.offset();
  auto flags = r.get<std::uint16_t>("flags");
  if (flags > 1) throw FormatError(FormatError::Kind::kBadField, flags_at, "unsupported flags");
  Header h;
  std::size_t kind_at = r.offset();
  h.kind = kind_from_code(r.get<std::uint32_t>("kind"), kind_at);
  std::size_t n_at = r.offset();
  h.n = r.get<std::uint32_t>("n");
  h.latents = r.get<std::uint32_t>("latents");
  if (h.n == 0 || h.latents == 0) throw FormatError(FormatError::Kind::kZeroDim, n_at, "zero model dimension");
  h.k = r.get<std::uint32_t>("k");
  h.lambda = r.get<double>("lambda");
  h.d_attn = r.get<std::uint32_t>("d_attn");
  h.novel_kind = r.get<std::uint32_t>("novel_kind");
  h.value_mode = r.get<std::uint32_t>("value_mode");
  h.split = r.get<std::uint32_t>("split_dictionary");
  Checkpoint ckpt{skeleton(h), std::nullopt, 0, std::nullopt};
  ckpt.step = r.get<std::uint64_t>("step");
  double scale = r.get<double>("norm_scale");
  if (scale != 0.0) ckpt.norm_scale = scale;

  auto params = params_of(ckpt.model);
  std::map<std::string, Eigen::MatrixXd> tensors;
  auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::size_t at = r.offset();
    auto name = r.get_string16("tensor name");
    auto rows = r.get<std::uint32_t>("tensor rows");
    auto cols = r.get<std::uint32_t>("tensor cols");
    r.require(static_cast<std::size_t>(rows) * cols * sizeof(double), "tensor data");
    Eigen::MatrixXd t(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a) {
      for (std::uint32_t b = 0; b < cols; ++b) t(a, b) = r.get<double>("tensor data");
    }
    if (!tensors.emplace(name, std::move(t)).second) {
      throw FormatError(FormatError::Kind::kBadField, at, "duplicate tensor '" + name + "'");
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kBadField, r.offset(), "trailing bytes after tensors");
  }

  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw FormatError(FormatError::Kind::kBadField, r.offset(), "missing tensor '" + name + "'");
    }
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw FormatError(FormatError::Kind::kBadField, r.offset(), "tensor '" + name + "' has wrong shape");
    }
    return it->second;
  };
  for (auto& p : params) p.map() = take(p.name, p.rows, p.cols);
  if (flags & 1) {
    AdamState adam;
    for (auto& p : params) adam.m.push_back(take("adam_m/" + p.name, p.rows, p.cols));
    for (auto& p : params) adam.v.push_back(take("adam_v/" + p.name, p.rows, p.cols));
    ckpt.adam = std::move(adam);
  }
  std::size_t expected = params.size() * ((flags & 1) ? 3 : 1);
  if (tensors.size() != expected) {
    throw FormatError(FormatError::Kind::kBadField, r.offset(), "unexpected extra tensors");
  }
  try {
    std::visit([](const auto& m) { m.check_shapes(); }, ckpt.model);
  } catch (const ConfigError& e) {
    throw DataError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return ckpt;
}

}  // namespace tfa
