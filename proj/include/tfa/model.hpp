#pragma once

#include <string>
#include <variant>
#include <vector>

#include "tfa/sae.hpp"
#include "tfa/temporal.hpp"

namespace tfa {

enum class ModelKind { kRelu, kTopK, kBatchTopK, kTemporal, kTemporalPredOnly };

std::string to_string(ModelKind kind);
/// Accepts relu, topk, batchtopk, temporal, temporal-pred-only.
ModelKind model_kind_from_string(const std::string& s);
bool is_temporal(ModelKind kind);

using AnyModel = std::variant<SaeModel, TemporalModel>;

ModelKind kind_of(const AnyModel& model);
std::vector<ParamView> params_of(AnyModel& model);
std::size_t input_dim_of(const AnyModel& model);
std::size_t latents_of(const AnyModel& model);

}  // namespace tfa
