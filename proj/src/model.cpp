#include "tfa/model.hpp"

#include "tfa/error.hpp"

namespace tfa {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRelu: return "relu";
    case ModelKind::kTopK: return "topk";
    case ModelKind::kBatchTopK: return "batchtopk";
    case ModelKind::kTemporal: return "temporal";
    case ModelKind::kTemporalPredOnly: return "temporal-pred-only";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "relu") return ModelKind::kRelu;
  if (s == "topk") return ModelKind::kTopK;
  if (s == "batchtopk") return ModelKind::kBatchTopK;
  if (s == "temporal") return ModelKind::kTemporal;
  if (s == "temporal-pred-only") return ModelKind::kTemporalPredOnly;
  throw ConfigError("unknown model kind '" + s + "'");
}

bool is_temporal(ModelKind kind) {
  return kind == ModelKind::kTemporal || kind == ModelKind::kTemporalPredOnly;
}

ModelKind kind_of(const AnyModel& model) {
  if (const auto* s = std::get_if<SaeModel>(&model)) {
    switch (s->kind) {
      case SaeKind::kRelu: return ModelKind::kRelu;
      case SaeKind::kTopK: return ModelKind::kTopK;
      case SaeKind::kBatchTopK: return ModelKind::kBatchTopK;
    }
  }
  return std::get<TemporalModel>(model).pred_only ? ModelKind::kTemporalPredOnly
                                                  : ModelKind::kTemporal;
}

std::vector<ParamView> params_of(AnyModel& model) {
  return std::visit([](auto& m) { return m.params(); }, model);
}

std::size_t input_dim_of(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.input_dim(); }, model);
}

std::size_t latents_of(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.latents(); }, model);
}

}  // namespace tfa
