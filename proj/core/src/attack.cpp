#include "spectral/attack.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "spectral/autodiff.hpp"
#include "spectral/guard.hpp"

namespace spectral {

void AttackConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("AttackConfig: alpha must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("AttackConfig: lambda must be >= 0");
}

namespace {

double sum_rho(const SelectiveSsm& ssm, const Embeddings& embeds) {
  double total = 0.0;
  RunOptions opts;
  opts.observer = [&](const StepRecord& r) { total += r.rho_exact; };
  run_embedded(ssm, embeds, opts);
  return total;
}

double mean_kl(const std::vector<std::vector<double>>& logits,
               const std::vector<std::vector<double>>& reference_log_probs) {
  if (logits.size() != reference_log_probs.size()) {
    throw std::invalid_argument("output_kl_loss: candidate length " + std::to_string(logits.size()) +
                                " != reference length " + std::to_string(reference_log_probs.size()));
  }
  if (logits.empty()) return 0.0;
  const auto log_p = log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t t = 0; t < log_p.size(); ++t) total += kl_divergence(log_p[t], reference_log_probs[t]);
  return total / static_cast<double>(log_p.size());
}

double mean_rho_hat(const SelectiveSsm& ssm, std::span<const TokenId> tokens) {
  RunOptions opts;
  opts.probe = true;
  return run_sequence(ssm, tokens, opts).trace.mean_rho_hat();
}

}  // namespace

double spectral_loss(const SelectiveSsm& ssm, std::span<const TokenId> tokens) {
  return sum_rho(ssm, embed_tokens(ssm, tokens));
}

double spectral_loss(const SelectiveSsm& ssm, const Embeddings& embeds) { return sum_rho(ssm, embeds); }

std::vector<std::vector<double>> log_softmax_rows(const std::vector<std::vector<double>>& logits) {
  std::vector<std::vector<double>> out;
  out.reserve(logits.size());
  for (const auto& row : logits) {
    if (row.empty()) throw std::invalid_argument("log_softmax_rows: empty row");
    const double zmax = *std::max_element(row.begin(), row.end());
    double norm = 0.0;
    for (double z : row) norm += std::exp(z - zmax);
    const double log_norm = std::log(norm);
    std::vector<double> lp(row.size());
    for (std::size_t v = 0; v < row.size(); ++v) lp[v] = (row[v] - zmax) - log_norm;
    out.push_back(std::move(lp));
  }
  return out;
}

double kl_divergence(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t v = 0; v < log_p.size(); ++v) {
    const double p = std::exp(log_p[v]);
    if (p > 0.0) kl += p * (log_p[v] - log_q[v]);
  }
  return std::max(kl, 0.0);
}

double output_kl_loss(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                      const std::vector<std::vector<double>>& reference_log_probs) {
  return output_kl_loss(ssm, embed_tokens(ssm, tokens), reference_log_probs);
}

double output_kl_loss(const SelectiveSsm& ssm, const Embeddings& embeds,
                      const std::vector<std::vector<double>>& reference_log_probs) {
  if (embeds.size() != reference_log_probs.size()) {
    throw std::invalid_argument("output_kl_loss: candidate length " + std::to_string(embeds.size()) +
                                " != reference length " + std::to_string(reference_log_probs.size()));
  }
  return mean_kl(run_embedded(ssm, embeds).logits, reference_log_probs);
}

ObjectiveValue attack_objective(const SelectiveSsm& ssm, const Embeddings& embeds,
                                const std::vector<std::vector<double>>* reference_log_probs,
                                double lambda, bool with_gradient) {
  const auto& cfg = ssm.config;
  const std::size_t T = embeds.size(), L = cfg.n_layers, N = cfg.d_state, D = cfg.d_model,
                    V = cfg.vocab_size;
  const bool use_kl = reference_log_probs != nullptr && lambda > 0.0 && T > 0;
  if (use_kl && reference_log_probs->size() != T)
    throw std::invalid_argument("attack_objective: reference length mismatch");

  ad::Tape tape;
  {
    // Per (token, layer): ~8N + D + 6 nodes; the D-wide dots dominate the edges.
    const std::size_t steps = T * L;
    std::size_t nodes = T * D + 1 + steps * (8 * N + D + 6);
    std::size_t edges = steps * (12 * N + 4 * D + 4);
    if (use_kl) {
      nodes += T * (V + 1);
      edges += T * V * (D + 1);
    }
    tape.reserve(nodes, edges);
  }
  std::vector<std::vector<ad::Var>> x(T, std::vector<ad::Var>(D));
  for (std::size_t t = 0; t < T; ++t) {
    if (embeds[t].size() != D) throw std::invalid_argument("attack_objective: embedding dimension mismatch");
    for (std::size_t j = 0; j < D; ++j) x[t][j] = tape.input(embeds[t][j]);
  }

  // Output projection transposed once so each logit is a contiguous dot.
  std::vector<double> proj_t;
  if (use_kl) {
    proj_t.resize(V * D);
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t v = 0; v < V; ++v) proj_t[v * D + j] = ssm.output_projection[j * V + v];
  }

  const ad::Var zero = tape.constant(0.0);
  std::vector<std::vector<ad::Var>> h(L, std::vector<ad::Var>(N, zero));
  std::vector<ad::Var> rhos, kls;
  std::vector<ad::Var> abar(N), logits(V);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<ad::Var> stream = x[t];
    for (std::size_t l = 0; l < L; ++l) {
      const auto w_delta = ssm.layer_slice(ssm.w_delta, l, D);
      const ad::Var pre = tape.dot(stream, w_delta, ssm.delta_bias[l]);
      const ad::Var delta = tape.clamp(tape.softplus(pre), cfg.delta_min, cfg.delta_max);
      for (std::size_t i = 0; i < N; ++i) abar[i] = tape.exp(tape.scale(delta, ssm.a(l, i)));
      rhos.push_back(tape.max(abar));

      const ad::Var u = tape.dot(stream, ssm.layer_slice(ssm.w_in, l, D));
      for (std::size_t i = 0; i < N; ++i) {
        const double a = ssm.a(l, i), b = ssm.b[l * N + i];
        const ad::Var bbar = std::abs(a) < 1e-12 ? tape.scale(delta, b) : tape.scale(tape.offset(abar[i], -1.0), b / a);
        h[l][i] = tape.add(tape.mul(abar[i], h[l][i]), tape.mul(bbar, u));
      }
      const ad::Var y = tape.dot(h[l], ssm.layer_slice(ssm.c, l, N));
      const auto w_out = ssm.layer_slice(ssm.w_out, l, D);
      for (std::size_t j = 0; j < D; ++j) {
        const ad::Var ps[] = {stream[j], y};
        const double ws[] = {1.0, w_out[j]};
        stream[j] = tape.dot(ps, ws);
      }
    }
    if (use_kl) {
      for (std::size_t v = 0; v < V; ++v)
        logits[v] = tape.dot(stream, std::span<const double>(proj_t).subspan(v * D, D));
      kls.push_back(tape.kl_from_logits(logits, (*reference_log_probs)[t]));
    }
  }

  ad::Var total = rhos.empty() ? zero : tape.sum(rhos);
  if (use_kl) total = tape.add(total, tape.scale(tape.sum(kls), lambda / static_cast<double>(T)));

  ObjectiveValue out;
  out.value = tape.value(total);
  if (with_gradient) {
    const auto adj = tape.gradient(total);
    out.gradient.assign(T, std::vector<double>(D, 0.0));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < D; ++j) out.gradient[t][j] = adj[x[t][j]];
  }
  return out;
}

std::vector<TokenId> project_to_tokens(const SelectiveSsm& ssm, const Embeddings& embeds) {
  const std::size_t V = ssm.config.vocab_size, D = ssm.config.d_model;
  std::vector<TokenId> out;
  out.reserve(embeds.size());
  for (const auto& row : embeds) {
    if (row.size() != D) throw std::invalid_argument("project_to_tokens: dimension mismatch");
    // Rows of E are unit norm, so cosine ranking equals dot-product ranking.
    TokenId best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) {
      const double* e = ssm.embedding.data() + v * D;
      double s = 0.0;
      for (std::size_t j = 0; j < D; ++j) s += e[j] * row[j];
      if (s > best_score) {
        best_score = s;
        best = static_cast<TokenId>(v);
      }
    }
    out.push_back(best);
  }
  return out;
}

AttackResult pgd_attack(const SelectiveSsm& ssm, std::span<const TokenId> prompt, const AttackConfig& config) {
  config.validate();
  if (prompt.empty()) throw std::invalid_argument("pgd_attack: prompt must be non-empty");

  const auto benign_run = run_sequence(ssm, prompt);
  const auto reference = log_softmax_rows(benign_run.logits);
  const bool joint = config.mode == AttackMode::joint_loss;
  const double lambda = joint ? config.lambda : 0.0;

  auto objective = [&](const Embeddings& e) {
    double value = spectral_loss(ssm, e);
    if (lambda > 0.0) value += lambda * output_kl_loss(ssm, e, reference);
    return value;
  };

  AttackResult result;
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  Embeddings shadow = embed_tokens(ssm, tokens);
  result.loss_curve.push_back(objective(shadow));
  result.continuous_loss.push_back(result.loss_curve.back());

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_pos(0, tokens.size() - 1);
  std::uniform_int_distribution<TokenId> pick_tok(0, static_cast<TokenId>(ssm.config.vocab_size - 1));

  for (std::size_t s = 0; s < config.steps; ++s) {
    if (config.mode == AttackMode::random_baseline) {
      const std::size_t pos = pick_pos(rng);
      tokens[pos] = pick_tok(rng);
      shadow = embed_tokens(ssm, tokens);
      result.loss_curve.push_back(objective(shadow));
      result.continuous_loss.push_back(result.loss_curve.back());
      continue;
    }
    const auto grad = attack_objective(ssm, embed_tokens(ssm, tokens), &reference, lambda, true).gradient;
    for (std::size_t t = 0; t < shadow.size(); ++t)
      for (std::size_t j = 0; j < shadow[t].size(); ++j) {
        const double g = grad[t][j];
        shadow[t][j] -= config.alpha * static_cast<double>((g > 0.0) - (g < 0.0));
      }
    tokens = project_to_tokens(ssm, shadow);
    result.loss_curve.push_back(objective(embed_tokens(ssm, tokens)));
    result.continuous_loss.push_back(objective(shadow));
  }

  result.rho_mean_before = mean_rho_hat(ssm, prompt);
  result.rho_mean_after = config.steps == 0 ? result.rho_mean_before : mean_rho_hat(ssm, tokens);
  result.delta_rho_mean = result.rho_mean_before - result.rho_mean_after;
  result.kl_to_benign = output_kl_loss(ssm, tokens, reference);
  for (std::size_t t = 0; t < tokens.size(); ++t) result.tokens_changed += tokens[t] != prompt[t];
  result.tokens = std::move(tokens);
  return result;
}

double lexical_auc(const std::vector<std::vector<TokenId>>& benign,
                   const std::vector<std::vector<TokenId>>& adversarial, std::size_t vocab_size) {
  if (benign.empty() || adversarial.empty()) throw std::invalid_argument("lexical_auc: both corpora must be non-empty");
  if (vocab_size == 0) throw std::invalid_argument("lexical_auc: vocab_size must be >= 1");
  std::vector<double> counts(vocab_size, 1.0);  // add-one smoothing
  double total = static_cast<double>(vocab_size);
  for (const auto& seq : benign)
    for (TokenId tok : seq) {
      if (tok >= vocab_size) throw std::out_of_range("lexical_auc: token id out of vocabulary");
      counts[tok] += 1.0;
      total += 1.0;
    }
  auto score = [&](const std::vector<TokenId>& seq) {
    if (seq.empty()) return 0.0;
    double nll = 0.0;
    for (TokenId tok : seq) {
      if (tok >= vocab_size) throw std::out_of_range("lexical_auc: token id out of vocabulary");
      nll -= std::log(counts[tok] / total);
    }
    return nll / static_cast<double>(seq.size());
  };
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& seq : benign) {
    scores.push_back(score(seq));
    labels.push_back(0);
  }
  for (const auto& seq : adversarial) {
    scores.push_back(score(seq));
    labels.push_back(1);
  }
  return auc_pairwise(scores, labels);
}

std::vector<ParetoRow> pareto_sweep(const SelectiveSsm& ssm, const std::vector<std::vector<TokenId>>& prompts,
                                    std::span<const double> lambdas, const AttackConfig& config,
                                    std::size_t threads) {
  if (prompts.empty()) throw std::invalid_argument("pareto_sweep: no prompts");
  if (lambdas.empty()) throw std::invalid_argument("pareto_sweep: no lambda values");
  threads = std::max<std::size_t>(threads, 1);

  std::vector<ParetoRow> rows;
  for (double lambda : lambdas) {
    AttackConfig cfg = config;
    cfg.lambda = lambda;
    cfg.validate();
    std::vector<AttackResult> results(prompts.size());
    auto run_range = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        AttackConfig local = cfg;
        local.seed = cfg.seed + i;
        results[i] = pgd_attack(ssm, prompts[i], local);
      }
    };
    if (threads == 1) {
      run_range(0, prompts.size());
    } else {
      std::vector<std::future<void>> jobs;
      const std::size_t chunk = (prompts.size() + threads - 1) / threads;
      for (std::size_t begin = 0; begin < prompts.size(); begin += chunk)
        jobs.push_back(std::async(std::launch::async, run_range, begin, std::min(prompts.size(), begin + chunk)));
      for (auto& j : jobs) j.get();
    }
    ParetoRow row;
    row.lambda = lambda;
    row.spectral_weight = 1.0;
    row.output_weight = cfg.mode == AttackMode::joint_loss ? lambda : 0.0;
    std::vector<std::vector<TokenId>> adversarial;
    for (const auto& r : results) {
      row.delta_rho_mean += r.delta_rho_mean;
      row.kl_mean += r.kl_to_benign;
      adversarial.push_back(r.tokens);
    }
    row.delta_rho_mean /= static_cast<double>(results.size());
    row.kl_mean /= static_cast<double>(results.size());
    row.lexical_auc = lexical_auc(prompts, adversarial, ssm.config.vocab_size);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace spectral
