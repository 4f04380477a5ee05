#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spectral/attack.hpp"
#include "spectral/ssm.hpp"
#include "spectral/trace.hpp"

namespace spectral {

enum class ClampMode { single_layer, all_layer };

struct ClampProtocol {
  ClampMode mode = ClampMode::all_layer;
  std::optional<std::size_t> layer;  // required for single_layer
  double rho_target = 1.0;

  void validate(std::size_t n_layers) const;
  bool targets(std::size_t layer_index) const;
};

// Abar * (target / rho) when rho > target, otherwise unchanged. Diagonal
// entries are then capped at +-target so the result's radius never exceeds
// the target and a second clamp is a no-op. Bbar is untouched.
DiscretizedOperator clamp_operator(const DiscretizedOperator& op, double rho_target);

OperatorHook clamp_hook(const ClampProtocol& protocol);

RunResult run_with_clamp(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                         const ClampProtocol& protocol, RunOptions options = {});

struct RecallConfig {
  std::size_t n_pairs = 5;
  std::size_t distance = 10;
  TokenId marker_token = 0;  // reserved query marker
  std::uint64_t seed = 0;
};

struct RecallTask {
  std::vector<TokenId> prompt;  // [k v]*n_pairs, noise*distance, marker, query key
  std::vector<std::pair<TokenId, TokenId>> pairs;
  TokenId query_key = 0;
  TokenId answer = 0;
  std::size_t distance = 0;
};

std::vector<RecallTask> gen_recall_dataset(std::size_t n_samples, const RecallConfig& config,
                                           std::size_t vocab_size);

// Retention of a unit perturbation injected into layer 0's slowest channel
// at t = 0, after each of 0..max_distance noise tokens under an all-layer
// clamp at rho_target. Noise for distance d is the length-d prefix of one
// seeded stream, so the curve is consistent across distances.
std::vector<double> retention_curve(const SelectiveSsm& ssm, double rho_target, std::size_t max_distance,
                                    std::uint64_t noise_seed = 0);

double retention_probe(const SelectiveSsm& ssm, double rho_target, std::size_t distance,
                       std::uint64_t noise_seed = 0);

struct PhaseGrid {
  std::vector<double> rho_levels;
  std::vector<std::size_t> distances;
  double epsilon = 1e-5;
  std::vector<double> retention;   // rho-major, |rho_levels| x |distances|
  std::vector<bool> recoverable;   // retention >= epsilon
  // Per rho level: last step before retention first drops below epsilon
  // (censored at the largest grid distance).
  std::vector<std::size_t> empirical_horizon;

  double retention_at(std::size_t i, std::size_t j) const { return retention.at(i * distances.size() + j); }
  bool recoverable_at(std::size_t i, std::size_t j) const { return recoverable.at(i * distances.size() + j); }

  // Recoverability non-decreasing in rho and non-increasing in distance.
  bool monotone() const;
};

PhaseGrid phase_transition_grid(const SelectiveSsm& ssm, std::span<const double> rho_levels,
                                std::span<const std::size_t> distances, double epsilon = 1e-5,
                                std::uint64_t noise_seed = 0);

enum class AdversarialSource { clamp, pgd };

struct LabeledTraceConfig {
  std::size_t length = 64;
  AdversarialSource source = AdversarialSource::clamp;
  double clamp_lo = 0.05;  // collapse target drawn from [clamp_lo, clamp_hi]
  double clamp_hi = 0.25;
  AttackConfig attack;     // used when source == pgd
  std::size_t power_iters = 3;
  std::uint64_t seed = 0;
};

// Benign traces from uniform random streams, adversarial traces from a
// clamp collapse (onset in [T/4, T/2]) or from PGD outputs. Benign samples
// come first. Either count may be zero, but not both.
std::vector<LabeledTrace> gen_labeled_traces(const SelectiveSsm& ssm, std::size_t n_benign,
                                             std::size_t n_adversarial, const LabeledTraceConfig& config);

// Prompts drawn from a Zipf(s) law over a seeded permutation of the vocabulary.
std::vector<std::vector<TokenId>> gen_benign_prompts(std::size_t n, std::size_t length, std::size_t vocab_size,
                                                     double zipf_exponent, std::uint64_t seed);

std::vector<TokenId> uniform_tokens(std::size_t length, std::size_t vocab_size, std::uint64_t seed);

}  // namespace spectral
