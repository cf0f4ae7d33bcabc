#include "tfa/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tfa/error.hpp"

namespace tfa {

void TrainConfig::validate() const {
  if (batch_tokens == 0) throw ConfigError("batch_tokens must be at least 1");
  if (warmup_steps > steps) throw ConfigError("warmup_steps must not exceed steps");
  if (!(lr_peak > 0.0) || lr_min < 0.0 || lr_min > lr_peak) {
    throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr_peak, lr_peak > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (step >= cfg.steps && cfg.steps > cfg.warmup_steps) return cfg.lr_min;
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.lr_peak;
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  double frac = static_cast<double>(step - cfg.warmup_steps) /
                static_cast<double>(cfg.steps - cfg.warmup_steps);
  return cfg.lr_peak + (cfg.lr_min - cfg.lr_peak) * frac;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss,nmse,pred_nmse,novel_nmse,l0,lr\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss,
                  r.nmse, r.pred_nmse, r.novel_nmse, r.l0, r.lr);
    out << buf;
  }
}

nlohmann::json TrainLog::summary() const {
  nlohmann::json j;
  j["temporal"] = temporal;
  j["steps"] = records.size();
  if (!records.empty()) {
    const auto& last = records.back();
    j["final"] = {{"step", last.step}, {"loss", last.loss}, {"nmse", last.nmse}, {"l0", last.l0},
                  {"lr", last.lr}};
    if (temporal) {
      j["final"]["pred_nmse"] = last.pred_nmse;
      j["final"]["novel_nmse"] = last.novel_nmse;
      j["phases"] = competition_phases(*this).to_json();
    }
  }
  return j;
}

Checkpoint start_state(AnyModel model, std::optional<double> norm_scale) {
  Checkpoint c{std::move(model), norm_scale, 0, AdamState{}};
  for (const auto& p : params_of(c.model)) {
    c.adam->m.push_back(Eigen::MatrixXd::Zero(p.rows, p.cols));
    c.adam->v.push_back(Eigen::MatrixXd::Zero(p.rows, p.cols));
  }
  return c;
}

namespace {

struct StepOutput {
  TrainRecord record;
  AnyModel grad;
};

StepOutput compute_step(const AnyModel& model, const ActivationSet& set, const Batch& batch) {
  if (const auto* sae = std::get_if<SaeModel>(&model)) {
    auto g = sae_backward(*sae, batch.tokens);
    TrainRecord r;
    r.loss = g.loss.total;
    r.nmse = g.loss.nmse;
    r.l0 = g.loss.mean_l0;
    return {r, std::move(g.grad)};
  }
  const auto& tm = std::get<TemporalModel>(model);
  std::vector<Eigen::MatrixXd> seqs;
  seqs.reserve(batch.sequences.size());
  for (auto i : batch.sequences) seqs.push_back(set.sequences[i]);
  auto g = tfa_backward(tm, seqs);
  TrainRecord r;
  r.loss = g.loss.total;
  r.nmse = g.loss.nmse;
  r.pred_nmse = g.loss.pred_nmse;
  r.novel_nmse = g.loss.novel_nmse;
  r.l0 = g.loss.mean_l0;
  return {r, std::move(g.grad)};
}

}  // namespace

TrainResult train(Checkpoint state, const ActivationSet& set, const TrainConfig& cfg,
                  const CheckpointCallback& on_checkpoint) {
  cfg.validate();
  if (!set.norm_scale) {
    throw DataError("training requires a normalized activation set (see normalize_unit_expected_norm)");
  }
  if (state.norm_scale && *state.norm_scale != *set.norm_scale) {
    throw DataError("checkpoint normalization scale does not match the activation set");
  }
  state.norm_scale = set.norm_scale;
  if (input_dim_of(state.model) != set.dim) {
    throw DataError("model input dimension " + std::to_string(input_dim_of(state.model)) +
                    " does not match data dimension " + std::to_string(set.dim));
  }
  if (state.step > cfg.steps) throw ConfigError("checkpoint step is beyond the configured steps");

  auto params = params_of(state.model);
  if (!state.adam) {
    state.adam = start_state(state.model, state.norm_scale).adam;
  }
  auto& adam = *state.adam;
  if (adam.m.size() != params.size()) throw DataError("optimizer state does not match model");

  const bool temporal = std::holds_alternative<TemporalModel>(state.model);
  TrainResult result;
  result.log.temporal = temporal;
  if (state.step == cfg.steps) {
    result.state = std::move(state);
    return result;
  }

  BatchIterator batches(set, cfg.batch_tokens, cfg.seed,
                        temporal ? BatchMode::kSequence : BatchMode::kToken);
  batches.seek(state.step);

  for (std::size_t s = state.step; s < cfg.steps; ++s) {
    auto batch = batches.next();
    auto out = compute_step(state.model, set, batch);
    out.record.step = s + 1;
    out.record.lr = lr_at(cfg, s + 1);
    if (!std::isfinite(out.record.loss)) {
      throw NumericError("non-finite loss " + std::to_string(out.record.loss) + " at step " +
                         std::to_string(s + 1));
    }
    auto grads = params_of(out.grad);

    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!params[p].unit_columns) continue;
      auto w = params[p].map();
      auto g = grads[p].map();
      for (Eigen::Index j = 0; j < w.cols(); ++j) g.col(j) -= w.col(j).dot(g.col(j)) * w.col(j);
    }
    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) sq += g.map().squaredNorm();
      double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        for (auto& g : grads) g.map() *= cfg.grad_clip / norm;
      }
    }

    const double t = static_cast<double>(s + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto w = params[p].map();
      auto g = grads[p].map();
      auto& m = adam.m[p];
      auto& v = adam.v[p];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      w.array() -= out.record.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
      if (params[p].unit_columns) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          double norm = w.col(j).norm();
          if (norm > 0.0) w.col(j) /= norm;
        }
      }
    }
    state.step = s + 1;
    result.log.records.push_back(out.record);
    if (on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      on_checkpoint(state);
    }
  }
  result.state = std::move(state);
  return result;
}

TrainResult train(AnyModel model, const ActivationSet& set, const TrainConfig& cfg) {
  return train(start_state(std::move(model), set.norm_scale), set, cfg);
}

nlohmann::json PhaseSummary::to_json() const {
  nlohmann::json j;
  j["crossover_step"] = crossover_step ? nlohmann::json(*crossover_step) : nlohmann::json(nullptr);
  j["takeover"] = takeover;
  j["takeover_step"] = takeover_step ? nlohmann::json(*takeover_step) : nlohmann::json(nullptr);
  j["takeover_rise"] = kTakeoverRise;
  j["min_pred_nmse"] = min_pred_nmse;
  j["min_pred_step"] = min_pred_step;
  j["final_nmse"] = final_nmse;
  j["final_pred_nmse"] = final_pred_nmse;
  j["final_novel_nmse"] = final_novel_nmse;
  return j;
}

PhaseSummary competition_phases(const TrainLog& log) {
  if (!log.temporal) throw ConfigError("competition phases need a temporal-model training log");
  if (log.records.empty()) throw DataError("empty training log");
  PhaseSummary s;
  double running_min = log.records.front().pred_nmse;
  s.min_pred_nmse = running_min;
  s.min_pred_step = log.records.front().step;
  for (const auto& r : log.records) {
    if (!s.crossover_step && r.pred_nmse < r.novel_nmse) s.crossover_step = r.step;
    if (r.pred_nmse < running_min) {
      running_min = r.pred_nmse;
      s.min_pred_nmse = r.pred_nmse;
      s.min_pred_step = r.step;
    }
    if (!s.takeover && r.pred_nmse > (1.0 + kTakeoverRise) * running_min) {
      s.takeover = true;
      s.takeover_step = r.step;
    }
  }
  const auto& last = log.records.back();
  s.final_nmse = last.nmse;
  s.final_pred_nmse = last.pred_nmse;
  s.final_novel_nmse = last.novel_nmse;
  return s;
}

}  // namespace tfa
