#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spectral/ssm.hpp"

namespace spectral {

enum class AttackMode { spectral_only, joint_loss, random_baseline };

struct AttackConfig {
  double alpha = 0.01;
  std::size_t steps = 50;
  double lambda = 0.0;  // weight on the output-KL term (joint_loss only)
  std::uint64_t seed = 0;
  AttackMode mode = AttackMode::spectral_only;

  void validate() const;
};

struct AttackResult {
  std::vector<TokenId> tokens;
  std::vector<double> loss_curve;       // objective at the projected tokens, steps + 1 entries
  std::vector<double> continuous_loss;  // objective at the continuous iterate, steps + 1 entries
  double rho_mean_before = 0.0;
  double rho_mean_after = 0.0;
  double delta_rho_mean = 0.0;  // before - after; positive means damage
  double kl_to_benign = 0.0;
  std::optional<double> lexical_auc;
  std::size_t tokens_changed = 0;
};

using Embeddings = std::vector<std::vector<double>>;

// Sum over tokens and layers of rho(Abar_{t,l}).
double spectral_loss(const SelectiveSsm& ssm, std::span<const TokenId> tokens);
double spectral_loss(const SelectiveSsm& ssm, const Embeddings& embeds);

std::vector<std::vector<double>> log_softmax_rows(const std::vector<std::vector<double>>& logits);

// sum_v p_v (log p_v - log q_v), given log-probabilities.
double kl_divergence(std::span<const double> log_p, std::span<const double> log_q);

// Mean per-token KL(p_candidate || p_reference); reference given as log-probabilities.
double output_kl_loss(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                      const std::vector<std::vector<double>>& reference_log_probs);
double output_kl_loss(const SelectiveSsm& ssm, const Embeddings& embeds,
                      const std::vector<std::vector<double>>& reference_log_probs);

struct ObjectiveValue {
  double value = 0.0;
  Embeddings gradient;  // same shape as the embeddings; empty unless requested
};

// spectral_loss + lambda * output_kl_loss, evaluated on a reverse-mode tape.
// With lambda == 0 (or no reference) the KL term is not built at all.
ObjectiveValue attack_objective(const SelectiveSsm& ssm, const Embeddings& embeds,
                                const std::vector<std::vector<double>>* reference_log_probs,
                                double lambda, bool with_gradient);

// Nearest embedding row by cosine similarity; lowest token id on ties.
std::vector<TokenId> project_to_tokens(const SelectiveSsm& ssm, const Embeddings& embeds);

AttackResult pgd_attack(const SelectiveSsm& ssm, std::span<const TokenId> prompt,
                        const AttackConfig& config);

// AUC of a unigram NLL detector (add-one smoothing, fit on the benign corpus),
// adversarial = positive class. Score = mean per-token NLL of a sequence.
double lexical_auc(const std::vector<std::vector<TokenId>>& benign,
                   const std::vector<std::vector<TokenId>>& adversarial, std::size_t vocab_size);

struct ParetoRow {
  double lambda = 0.0;
  double delta_rho_mean = 0.0;
  double lexical_auc = 0.5;
  double kl_mean = 0.0;
  double spectral_weight = 1.0;
  double output_weight = 0.0;
};

// One row per lambda. Prompts are attacked independently (concurrently when
// threads > 1); prompt i uses seed config.seed + i, so rows do not depend on
// scheduling.
std::vector<ParetoRow> pareto_sweep(const SelectiveSsm& ssm,
                                    const std::vector<std::vector<TokenId>>& prompts,
                                    std::span<const double> lambdas, const AttackConfig& config,
                                    std::size_t threads = 1);

}  // namespace spectral
