#pragma once

// Activation sequences: in-memory container, TFA1 binary format with JSON
// sidecar, normalization, surrogates, and batching.
//
// TFA1 layout (all little-endian):
//   bytes 0-3   "TFA1"
//   u16         version (= 1)
//   u16         flags   (= 0)
//   u32         n_seq
//   u32         dim
//   n_seq x u32 sequence lengths
//   payload     concatenated sequences, each row-major T_i x dim float32
//
// The sidecar lives at "<path>.meta.json" and is optional.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tfa {

inline constexpr std::uint16_t kTfa1Version = 1;

/// Half-open token span [start, end) with a label.
struct EventSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;

  bool operator==(const EventSpan&) const = default;
};

struct SequenceMeta {
  std::vector<std::string> tokens;  // empty, or one per row
  std::vector<EventSpan> events;    // sorted, non-overlapping, in range
  std::string source;

  bool empty() const { return tokens.empty() && events.empty() && source.empty(); }
  bool operator==(const SequenceMeta&) const = default;
};

/// Ragged collection of T_i x dim activation matrices (rows are tokens).
struct ActivationSet {
  std::size_t dim = 0;
  std::vector<Eigen::MatrixXd> sequences;
  std::vector<SequenceMeta> meta;  // parallel to `sequences`
  std::optional<double> norm_scale;
  std::string source;
  std::optional<int> layer;

  ActivationSet() = default;
  explicit ActivationSet(std::size_t d) : dim(d) {}

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
  std::size_t total_tokens() const;
  std::size_t min_length() const;
  std::size_t max_length() const;

  void add_sequence(Eigen::MatrixXd rows, SequenceMeta m = {});

  /// Throws DataError when any invariant is violated.
  void validate() const;

  /// True when the sidecar would carry information.
  bool has_metadata() const;

  /// All token rows stacked in sequence order.
  Eigen::MatrixXd stacked() const;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path);

ActivationSet load_activations(const std::filesystem::path& path);
void save_activations(const ActivationSet& set, const std::filesystem::path& path);

/// Scales every row by c = 1 / mean row norm. Refuses sets that already carry
/// a normalization scale.
std::pair<ActivationSet, double> normalize_unit_expected_norm(const ActivationSet& set);

/// Applies a known scale (e.g. the one a model was trained with).
ActivationSet apply_scale(const ActivationSet& set, double scale);

/// Shuffles the rows of each sequence independently along time.
ActivationSet permutation_surrogate(const ActivationSet& set, std::uint64_t seed);

enum class BatchMode { kToken, kSequence };

struct Batch {
  std::size_t epoch = 0;
  Eigen::MatrixXd tokens;              // token mode
  std::vector<std::size_t> sequences;  // sequence mode: indices into the set
};

/// Deterministic epoch-based batch stream.
///
/// Token mode visits every token row exactly once per epoch in a seeded random
/// order, in batches of at most `batch_tokens` rows. Sequence mode packs whole
/// sequences (seeded order) until the token budget would be exceeded; a
/// sequence longer than the budget forms a batch on its own. The stream is
/// infinite; `seek` jumps to an absolute batch index so interrupted runs can
/// resume without replaying.
class BatchIterator {
 public:
  BatchIterator(const ActivationSet& set, std::size_t batch_tokens, std::uint64_t seed,
                BatchMode mode);

  Batch next();
  void seek(std::size_t batch_index);

  std::size_t batches_per_epoch() const;
  std::size_t position() const { return absolute_; }

 private:
  void start_epoch(std::size_t epoch);

  const ActivationSet* set_;
  std::size_t batch_tokens_;
  std::uint64_t seed_;
  BatchMode mode_;

  std::vector<std::pair<std::size_t, std::size_t>> token_index_;  // (seq, row)
  std::vector<std::size_t> order_;
  std::vector<std::size_t> seq_batch_starts_;  // sequence mode: batch boundaries in order_
  std::size_t epoch_ = 0;
  std::size_t in_epoch_ = 0;
  std::size_t absolute_ = 0;
};

}  // namespace tfa
