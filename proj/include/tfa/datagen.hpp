#pragma once

// Synthetic activation sets with known ground truth.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfa/activation_store.hpp"

namespace tfa {

/// How atoms are drawn at each position of a planted dictionary process.
///
/// kGlobal draws the k(t) active atoms uniformly from all N atoms. kNested
/// draws them from the first m(t) = ceil(k(t) * N / k_max) atoms of a seeded
/// atom ordering, so that growing sparsity also grows the set of directions in
/// play. With a constant schedule both modes coincide.
enum class AtomPool { kGlobal, kNested };

struct DictionaryProcessConfig {
  std::size_t n = 16;           // ambient dimension
  std::size_t atoms = 32;       // dictionary size N
  std::size_t length = 64;      // T
  std::size_t sequences = 64;   // B
  std::vector<std::size_t> schedule;  // k(t) for t = 0..T-1
  double coeff_min = 0.5;
  double coeff_max = 1.5;
  AtomPool pool = AtomPool::kNested;
  std::uint64_t seed = 0;
};

struct PlantedProcess {
  Eigen::MatrixXd dictionary;            // n x N, unit columns
  std::vector<std::size_t> schedule;     // k(t)
  std::vector<std::size_t> atom_order;   // pool ordering used by kNested
  AtomPool pool = AtomPool::kNested;
  double coherence = 0.0;                // max off-diagonal |<v_i, v_j>|
  std::uint64_t seed = 0;
};

struct DictionaryProcessData {
  ActivationSet set;                 // rows normalized to unit norm
  PlantedProcess process;
  std::vector<Eigen::MatrixXd> codes;  // per sequence, T x N coefficients (before normalization)
  std::vector<Eigen::VectorXd> row_norms;  // per sequence, ||V a_t|| used to normalize
};

std::vector<std::size_t> constant_schedule(std::size_t k, std::size_t length);
/// k(t) = 1 + floor(t / step).
std::vector<std::size_t> staircase_schedule(std::size_t length, std::size_t step);
/// k(t) = min(t + 1, cap).
std::vector<std::size_t> linear_schedule(std::size_t length, std::size_t cap);

/// Random Gaussian columns normalized to unit length.
Eigen::MatrixXd random_unit_dictionary(std::size_t n, std::size_t atoms, std::uint64_t seed);
double max_coherence(const Eigen::MatrixXd& dictionary);

DictionaryProcessData gen_dictionary_process(const DictionaryProcessConfig& cfg);

struct EventConfig {
  std::size_t n = 16;
  std::size_t length = 128;
  std::size_t sequences = 64;
  std::size_t events = 4;
  std::size_t slow_dim = 4;
  std::size_t fast_k = 2;
  std::size_t fast_atoms = 32;
  double slow_scale = 1.0;  // norm of each event vector
  double fast_scale = 1.0;  // fast coefficients are +-U[0.5, 1.5] * fast_scale
  double noise = 0.05;      // per-coordinate standard deviation
  std::uint64_t seed = 0;
};

struct EventData {
  ActivationSet set;                  // events recorded in metadata
  std::vector<Eigen::MatrixXd> slow;  // per sequence, T x n event component
  std::vector<Eigen::MatrixXd> fast;  // per sequence, T x n innovation + noise
  std::vector<std::vector<std::size_t>> event_of;  // per sequence, event index per token
  Eigen::MatrixXd slow_basis;         // n x slow_dim, orthonormal
  Eigen::MatrixXd fast_dictionary;    // n x fast_atoms, unit columns
};

/// x_t = s_e + f_t: a fixed slow vector per event plus sparse signed
/// innovations and isotropic noise. Event boundaries are drawn at random and
/// tile [0, T).
EventData gen_event_sequences(const EventConfig& cfg);

/// One sequence of points (cos theta, sin theta, 0, ...) at equally spaced
/// angles, ordered by angle, plus optional Gaussian noise.
ActivationSet gen_manifold_circle(std::size_t points, std::size_t ambient_dim, double noise,
                                  std::uint64_t seed);

}  // namespace tfa
