#include "spectral/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace spectral {

void ClampProtocol::validate(std::size_t n_layers) const {
  if (!(rho_target > 0.0 && rho_target <= 1.0)) throw std::invalid_argument("ClampProtocol: rho_target must be in (0, 1]");
  if (mode == ClampMode::single_layer) {
    if (!layer) throw std::invalid_argument("ClampProtocol: single_layer mode requires a layer index");
    if (*layer >= n_layers) {
      throw std::out_of_range("ClampProtocol: layer " + std::to_string(*layer) + " out of range (n_layers = " +
                              std::to_string(n_layers) + ")");
    }
  }
}

bool ClampProtocol::targets(std::size_t layer_index) const {
  return mode == ClampMode::all_layer || (layer && *layer == layer_index);
}

DiscretizedOperator clamp_operator(const DiscretizedOperator& op, double rho_target) {
  if (!(rho_target > 0.0 && rho_target <= 1.0)) throw std::invalid_argument("clamp_operator: rho_target must be in (0, 1]");
  const double rho = linalg::eig_radius_exact(op.abar).rho_hat;
  if (!(rho > rho_target)) return op;

  DiscretizedOperator out = op;
  const double factor = rho_target / rho;
  if (op.abar.is_diagonal()) {
    std::vector<double> d(op.abar.values().begin(), op.abar.values().end());
    for (auto& x : d) {
      x *= factor;
      if (x > rho_target) x = rho_target;
      if (x < -rho_target) x = -rho_target;
    }
    out.abar = linalg::Matrix::diagonal(std::move(d));
  } else {
    out.abar = op.abar.scaled(factor);
  }
  out.rho = linalg::eig_radius_exact(out.abar).rho_hat;
  return out;
}

OperatorHook clamp_hook(const ClampProtocol& protocol) {
  return [protocol](std::size_t, std::size_t layer, DiscretizedOperator& op) {
    if (protocol.targets(layer)) op = clamp_operator(op, protocol.rho_target);
  };
}

RunResult run_with_clamp(const SelectiveSsm& ssm, std::span<const TokenId> tokens, const ClampProtocol& protocol,
                         RunOptions options) {
  protocol.validate(ssm.config.n_layers);
  options.hook = clamp_hook(protocol);
  return run_sequence(ssm, tokens, options);
}

std::vector<TokenId> uniform_tokens(std::size_t length, std::size_t vocab_size, std::uint64_t seed) {
  if (vocab_size == 0) throw std::invalid_argument("uniform_tokens: empty vocabulary");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab_size - 1));
  std::vector<TokenId> out(length);
  for (auto& t : out) t = pick(rng);
  return out;
}

std::vector<RecallTask> gen_recall_dataset(std::size_t n_samples, const RecallConfig& config, std::size_t vocab_size) {
  if (n_samples == 0) throw std::invalid_argument("gen_recall_dataset: n_samples must be >= 1");
  if (config.n_pairs == 0) throw std::invalid_argument("gen_recall_dataset: n_pairs must be >= 1");
  if (config.distance == 0) throw std::invalid_argument("gen_recall_dataset: distance must be >= 1");
  if (config.marker_token >= vocab_size) throw std::invalid_argument("gen_recall_dataset: marker outside vocabulary");
  if (vocab_size < 2 * config.n_pairs + 1) {
    throw std::invalid_argument("gen_recall_dataset: vocabulary of " + std::to_string(vocab_size) +
                                " is too small for " + std::to_string(config.n_pairs) + " distinct key/value pairs");
  }
  std::vector<TokenId> pool;
  for (std::size_t v = 0; v < vocab_size; ++v)
    if (v != config.marker_token) pool.push_back(static_cast<TokenId>(v));

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<RecallTask> tasks;
  tasks.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    // Partial Fisher-Yates for 2 * n_pairs distinct symbols.
    std::vector<TokenId> symbols = pool;
    for (std::size_t i = 0; i < 2 * config.n_pairs; ++i) {
      std::uniform_int_distribution<std::size_t> rest(i, symbols.size() - 1);
      std::swap(symbols[i], symbols[rest(rng)]);
    }
    RecallTask task;
    task.distance = config.distance;
    for (std::size_t p = 0; p < config.n_pairs; ++p) {
      task.pairs.emplace_back(symbols[2 * p], symbols[2 * p + 1]);
      task.prompt.push_back(symbols[2 * p]);
      task.prompt.push_back(symbols[2 * p + 1]);
    }
    for (std::size_t i = 0; i < config.distance; ++i) task.prompt.push_back(pool[pick(rng)]);
    std::uniform_int_distribution<std::size_t> which(0, config.n_pairs - 1);
    const auto& q = task.pairs[which(rng)];
    task.query_key = q.first;
    task.answer = q.second;
    task.prompt.push_back(config.marker_token);
    task.prompt.push_back(q.first);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<double> retention_curve(const SelectiveSsm& ssm, double rho_target, std::size_t max_distance,
                                    std::uint64_t noise_seed) {
  const auto noise = uniform_tokens(max_distance, ssm.config.vocab_size, noise_seed);
  const auto a0 = ssm.a_diag(0);
  const std::size_t channel =
      static_cast<std::size_t>(std::min_element(a0.begin(), a0.end(),
                                                [](double x, double y) { return std::abs(x) < std::abs(y); }) -
                               a0.begin());

  // Layer 0's operators depend only on the tokens, never on its own state,
  // so the perturbed-minus-unperturbed difference is exactly the product of
  // the clamped operators applied to the injected unit vector.
  std::vector<double> diff(ssm.config.d_state, 0.0);
  diff[channel] = 1.0;
  std::vector<double> curve{1.0};
  curve.reserve(max_distance + 1);
  ClampProtocol protocol{ClampMode::all_layer, std::nullopt, rho_target};
  RunOptions options;
  options.observer = [&](const StepRecord& r) {
    if (r.layer != 0) return;
    diff = linalg::multiply(r.abar, diff);
    curve.push_back(linalg::vector_norm(diff));
  };
  run_with_clamp(ssm, noise, protocol, options);
  return curve;
}

double retention_probe(const SelectiveSsm& ssm, double rho_target, std::size_t distance, std::uint64_t noise_seed) {
  return retention_curve(ssm, rho_target, distance, noise_seed).at(distance);
}

bool PhaseGrid::monotone() const {
  std::vector<std::size_t> ri(rho_levels.size()), di(distances.size());
  std::iota(ri.begin(), ri.end(), 0);
  std::iota(di.begin(), di.end(), 0);
  std::sort(ri.begin(), ri.end(), [&](auto a, auto b) { return rho_levels[a] < rho_levels[b]; });
  std::sort(di.begin(), di.end(), [&](auto a, auto b) { return distances[a] < distances[b]; });
  for (std::size_t x = 0; x < ri.size(); ++x)
    for (std::size_t y = 0; y < di.size(); ++y) {
      const bool here = recoverable_at(ri[x], di[y]);
      if (x + 1 < ri.size() && here && !recoverable_at(ri[x + 1], di[y])) return false;
      if (y + 1 < di.size() && !here && recoverable_at(ri[x], di[y + 1])) return false;
    }
  return true;
}

PhaseGrid phase_transition_grid(const SelectiveSsm& ssm, std::span<const double> rho_levels,
                                std::span<const std::size_t> distances, double epsilon, std::uint64_t noise_seed) {
  if (rho_levels.empty() || distances.empty()) throw std::invalid_argument("phase_transition_grid: empty grid");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("phase_transition_grid: epsilon must be in (0, 1)");
  PhaseGrid grid;
  grid.rho_levels.assign(rho_levels.begin(), rho_levels.end());
  grid.distances.assign(distances.begin(), distances.end());
  grid.epsilon = epsilon;
  const std::size_t max_d = *std::max_element(distances.begin(), distances.end());
  for (double rho : rho_levels) {
    const auto curve = retention_curve(ssm, rho, max_d, noise_seed);
    for (std::size_t d : distances) {
      grid.retention.push_back(curve[d]);
      grid.recoverable.push_back(curve[d] >= epsilon);
    }
    std::size_t horizon = max_d;
    for (std::size_t t = 1; t < curve.size(); ++t)
      if (curve[t] < epsilon) {
        horizon = t - 1;
        break;
      }
    grid.empirical_horizon.push_back(horizon);
  }
  return grid;
}

std::vector<LabeledTrace> gen_labeled_traces(const SelectiveSsm& ssm, std::size_t n_benign, std::size_t n_adversarial,
                                             const LabeledTraceConfig& config) {
  if (n_benign + n_adversarial == 0) throw std::invalid_argument("gen_labeled_traces: no samples requested");
  if (config.length < 4) throw std::invalid_argument("gen_labeled_traces: length must be >= 4");
  if (!(config.clamp_lo > 0.0 && config.clamp_lo <= config.clamp_hi && config.clamp_hi <= 1.0))
    throw std::invalid_argument("gen_labeled_traces: need 0 < clamp_lo <= clamp_hi <= 1");

  const std::size_t V = ssm.config.vocab_size, T = config.length;
  std::mt19937_64 rng(config.seed);
  RunOptions probe;
  probe.probe = true;
  probe.power_iters = config.power_iters;

  std::vector<LabeledTrace> out;
  out.reserve(n_benign + n_adversarial);
  for (std::size_t i = 0; i < n_benign; ++i) {
    LabeledTrace lt;
    lt.tokens = uniform_tokens(T, V, rng());
    lt.trace = run_sequence(ssm, lt.tokens, probe).trace;
    lt.label = 0;
    lt.source = "benign";
    out.push_back(std::move(lt));
  }
  std::uniform_real_distribution<double> target_dist(config.clamp_lo, config.clamp_hi);
  std::uniform_int_distribution<std::size_t> onset_dist(T / 4, T / 2);
  for (std::size_t i = 0; i < n_adversarial; ++i) {
    LabeledTrace lt;
    lt.label = 1;
    const auto stream_seed = rng();
    if (config.source == AdversarialSource::clamp) {
      lt.tokens = uniform_tokens(T, V, stream_seed);
      const double target = target_dist(rng);
      const std::size_t onset = onset_dist(rng);
      RunOptions opts = probe;
      opts.hook = [target, onset](std::size_t t, std::size_t, DiscretizedOperator& op) {
        if (t >= onset) op = clamp_operator(op, target);
      };
      lt.trace = run_sequence(ssm, lt.tokens, opts).trace;
      lt.source = "clamp";
    } else {
      AttackConfig attack = config.attack;
      attack.seed = stream_seed;
      lt.tokens = pgd_attack(ssm, uniform_tokens(T, V, stream_seed), attack).tokens;
      lt.trace = run_sequence(ssm, lt.tokens, probe).trace;
      lt.source = "pgd";
    }
    out.push_back(std::move(lt));
  }
  return out;
}

std::vector<std::vector<TokenId>> gen_benign_prompts(std::size_t n, std::size_t length, std::size_t vocab_size,
                                                     double zipf_exponent, std::uint64_t seed) {
  if (vocab_size == 0) throw std::invalid_argument("gen_benign_prompts: empty vocabulary");
  if (!(zipf_exponent >= 0.0)) throw std::invalid_argument("gen_benign_prompts: zipf exponent must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<TokenId> rank_to_token(vocab_size);
  std::iota(rank_to_token.begin(), rank_to_token.end(), TokenId{0});
  std::shuffle(rank_to_token.begin(), rank_to_token.end(), rng);
  std::vector<double> weights(vocab_size);
  for (std::size_t r = 0; r < vocab_size; ++r) weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), zipf_exponent);
  std::discrete_distribution<std::size_t> rank(weights.begin(), weights.end());
  std::vector<std::vector<TokenId>> prompts(n, std::vector<TokenId>(length));
  for (auto& p : prompts)
    for (auto& tok : p) tok = rank_to_token[rank(rng)];
  return prompts;
}

}  // namespace spectral
