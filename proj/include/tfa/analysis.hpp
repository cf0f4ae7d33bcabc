#pragma once

// Experiment pipelines that compose models and metrics: event structure,
// noise robustness, clustering, phrase similarity, dictionary split, and
// slow/fast alignment.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tfa/activation_store.hpp"
#include "tfa/metrics.hpp"
#include "tfa/model.hpp"

namespace tfa {

/// One family of codes over a list of sequences, e.g. "predictive".
struct CodeKind {
  std::string name;
  std::vector<Eigen::MatrixXd> per_sequence;
};

struct Encoding {
  std::vector<CodeKind> kinds;
  std::vector<Eigen::MatrixXd> reconstruction;  // per sequence, input units

  const CodeKind& kind(const std::string& name) const;
};

/// Encodes a batch of sequences. Encoders with a pooled sparsity rule treat the
/// whole batch as one pool.
using Encoder = std::function<Encoding(const std::vector<Eigen::MatrixXd>&)>;

/// Activations as their own codes ("raw"); reconstruction is the input.
Encoder raw_encoder();
/// One code kind named after the SAE kind.
Encoder sae_encoder(SaeModel model);
/// "predictive" and "novel" kinds ("predictive" only for pred-only models).
Encoder temporal_encoder(TemporalModel model);
Encoder model_encoder(const AnyModel& model);

struct EventReport {
  std::string kind;
  std::optional<double> within_mean;
  std::optional<double> across_mean;
  std::size_t within_pairs = 0;
  std::size_t across_pairs = 0;
  std::map<std::string, double> per_event_within;  // pooled over sequences by label

  std::optional<double> gap() const;
  nlohmann::json to_json() const;
};

enum class Centering { kPerSequence, kCorpus };

/// Mean centered cosine similarity over token pairs (diagonal excluded) in the
/// same event versus different events of the same sequence. Tokens outside
/// every event span are ignored.
std::vector<EventReport> event_similarity_report(const ActivationSet& set, const Encoder& encoder,
                                                 Centering centering = Centering::kPerSequence);

/// Same aggregation for precomputed codes and per-token labels (empty label
/// means unlabeled).
EventReport event_similarity(const std::string& kind, const std::vector<Eigen::MatrixXd>& codes,
                             const std::vector<std::vector<std::string>>& labels, Centering centering);

/// Per-token event labels from the sequence metadata.
std::vector<std::vector<std::string>> token_event_labels(const ActivationSet& set);

struct NoiseLevel {
  double sigma = 0.0;
  double explained_variance = 0.0;          // reconstruction of noisy input vs clean input
  std::map<std::string, Eigen::MatrixXd> similarity;  // centered map of the probe sequence
};

/// Encodes x + sigma * eps for each sigma (eps standard normal, seeded per
/// sequence) and scores the reconstruction against the clean input.
std::vector<NoiseLevel> noise_robustness(const ActivationSet& set, const Encoder& encoder,
                                         const std::vector<double>& sigmas, std::uint64_t seed,
                                         std::size_t probe_sequence = 0);

struct Merge {
  std::size_t left = 0;   // cluster ids: points are 0..T-1, merge i creates T+i
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;
  std::vector<std::size_t> labels;  // flat cluster per row, numbered by first appearance
  std::size_t clusters = 0;

  nlohmann::json to_json() const;
};

/// Agglomerative average-linkage clustering with distance 1 - cosine. Flat
/// clusters join every merge at distance <= threshold. Ties between equal
/// distances go to the lexicographically smallest (id, id) pair.
Dendrogram hierarchical_clusters(const Eigen::MatrixXd& codes, double threshold);

struct PhraseSpans {
  EventSpan sp;
  EventSpan v;
  EventSpan op;
};

/// Phrase spans labeled "SP", "V" and "OP" in a sequence's metadata.
PhraseSpans phrase_spans_from_meta(const SequenceMeta& meta, std::size_t length);

/// 3x3 cosine table between the mean codes of SP, V and OP (in that order).
Eigen::Matrix3d phrase_similarity(const Eigen::MatrixXd& codes, const PhraseSpans& spans);

struct GardenPathPair {
  double ambiguous_v_sp = 0.0;
  double ambiguous_v_op = 0.0;
  double control_v_sp = 0.0;
  double control_v_op = 0.0;
  double sensitivity_v_sp = 0.0;  // |ambiguous - control|
  double sensitivity_v_op = 0.0;
};

struct GardenPathReport {
  std::string kind;
  std::vector<GardenPathPair> pairs;
  GardenPathPair mean;

  nlohmann::json to_json() const;
};

/// Pairs sequence i of `ambiguous` with sequence i of `control`.
std::vector<GardenPathReport> garden_path_battery(const ActivationSet& ambiguous, const ActivationSet& control,
                                                  const Encoder& encoder);

struct SplitReport {
  std::vector<std::size_t> order;  // atoms by descending predictive mass
  std::size_t split_index = 0;     // smallest prefix holding >= 90% of predictive mass
  double predictive_mass_in_prefix = 0.0;
  double novel_overlap = 0.0;      // fraction of novel mass on the prefix atoms
  double effective_rank_predictive = 0.0;
  std::optional<double> effective_rank_novel;
  double mean_l0_novel = 0.0;

  nlohmann::json to_json() const;
};

inline constexpr double kSplitMassFraction = 0.9;

SplitReport dictionary_split(const Eigen::MatrixXd& predictive, const Eigen::MatrixXd& novel);
SplitReport dictionary_split_report(const TemporalModel& model, const ActivationSet& set);

struct FourierAlignment {
  std::string kind;
  double slow_cka = 0.0;  // mean over sequences
  double fast_cka = 0.0;
  std::size_t sequences_used = 0;
  Eigen::VectorXd spectrum;  // kernel spectrum of the probe sequence's cosine kernel
};

struct FourierReport {
  std::vector<FourierAlignment> kinds;
  std::vector<std::size_t> cutoffs;  // per sequence
  Eigen::VectorXd slow_spectrum;
  Eigen::VectorXd fast_spectrum;

  nlohmann::json to_json() const;
};

/// CKA of each code kind against the slow and fast Fourier parts of every
/// sequence's activations, averaged over sequences.
FourierReport fourier_alignment(const ActivationSet& set, const Encoder& encoder,
                                FourierCutoff mode = FourierCutoff::kEqualEnergy,
                                std::size_t probe_sequence = 0);

struct TortuosityReport {
  std::string kind;
  std::vector<double> per_sequence;
  double mean = 0.0;
  double median = 0.0;
};

std::vector<TortuosityReport> code_tortuosity(const ActivationSet& set, const Encoder& encoder);

}  // namespace tfa
