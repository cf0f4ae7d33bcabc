#pragma once

// Seeded Adam training loop with linear warmup and linear decay.
//
// Step s (0-based) uses the batch at stream position s and learning rate
// lr_at(s + 1). Before each update the gradient component parallel to every
// decoder column is removed; after it the columns are renormalized. Because
// batches are a pure function of (seed, position), a run restored from a
// checkpoint taken at step s continues exactly as the uninterrupted run.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfa/activation_store.hpp"
#include "tfa/checkpoint.hpp"
#include "tfa/model.hpp"

namespace tfa {

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_tokens = 256;  // temporal models: token budget for whole sequences
  double lr_peak = 1e-3;
  double lr_min = 9e-4;
  std::size_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate() const;
};

/// Linear 0 -> lr_peak over warmup_steps, then linear to lr_min at `steps`.
double lr_at(const TrainConfig& cfg, std::size_t step);

struct TrainRecord {
  std::size_t step = 0;  // 1-based index of the update this record precedes
  double loss = 0.0;
  double nmse = 0.0;
  double pred_nmse = 0.0;   // temporal models only
  double novel_nmse = 0.0;  // temporal models only
  double l0 = 0.0;          // mean L0 of the (novel) code
  double lr = 0.0;
};

struct TrainLog {
  bool temporal = false;
  std::vector<TrainRecord> records;

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

struct TrainResult {
  Checkpoint state;  // final parameters, optimizer moments and step
  TrainLog log;
};

using CheckpointCallback = std::function<void(const Checkpoint&)>;

/// Fresh optimizer state for a model.
Checkpoint start_state(AnyModel model, std::optional<double> norm_scale);

/// Runs from `state.step` up to `cfg.steps`. The set must carry a
/// normalization scale. Throws NumericError on a non-finite loss.
TrainResult train(Checkpoint state, const ActivationSet& set, const TrainConfig& cfg,
                  const CheckpointCallback& on_checkpoint = {});

/// Convenience wrapper for a fresh model.
TrainResult train(AnyModel model, const ActivationSet& set, const TrainConfig& cfg);

struct PhaseSummary {
  std::optional<std::size_t> crossover_step;  // first step with pred NMSE < novel NMSE
  bool takeover = false;                      // pred NMSE rose > 20% above its running minimum
  std::optional<std::size_t> takeover_step;
  double min_pred_nmse = 0.0;
  std::size_t min_pred_step = 0;
  double final_nmse = 0.0;
  double final_pred_nmse = 0.0;
  double final_novel_nmse = 0.0;

  nlohmann::json to_json() const;
};

inline constexpr double kTakeoverRise = 0.2;

PhaseSummary competition_phases(const TrainLog& log);

}  // namespace tfa
