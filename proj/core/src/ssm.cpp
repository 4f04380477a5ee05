#include "spectral/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace spectral {

namespace {

// Slow channel 0 sets the benign operating point; the rest follow -(i+1).
constexpr double kSlowChannelRate = 1.0 / 32.0;
constexpr double kBenignRho = 0.95;
constexpr double kDeltaWeightNorm = 2.0;
constexpr double kInputWeightNorm = 1.0;
constexpr double kOutputWeightNorm = 0.02;

void fill_normal(std::vector<double>& v, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& x : v) x = normal(rng);
}

void normalize_to(std::span<double> v, double target) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) return;
  for (auto& x : v) x *= target / n;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_layer(const SelectiveSsm& ssm, std::size_t layer) {
  if (layer >= ssm.config.n_layers) {
    throw std::out_of_range("layer " + std::to_string(layer) + " out of range (n_layers = " +
                            std::to_string(ssm.config.n_layers) + ")");
  }
}

}  // namespace

void SelectiveSsmConfig::validate() const {
  if (n_layers == 0 || d_state == 0 || d_model == 0 || vocab_size == 0)
    throw std::invalid_argument("SelectiveSsmConfig: all dimensions must be >= 1");
  if (!(delta_min > 0.0) || !(delta_min < delta_max) || !std::isfinite(delta_max))
    throw std::invalid_argument("SelectiveSsmConfig: require 0 < delta_min < delta_max");
}

double SelectiveSsm::a(std::size_t layer, std::size_t i) const {
  return -std::exp(log_a[layer * config.d_state + i]);
}

std::vector<double> SelectiveSsm::a_diag(std::size_t layer) const {
  check_layer(*this, layer);
  std::vector<double> out(config.d_state);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a(layer, i);
  return out;
}

std::span<const double> SelectiveSsm::embedding_row(TokenId token) const {
  if (token >= config.vocab_size) {
    throw std::out_of_range("token id " + std::to_string(token) + " >= vocab_size " +
                            std::to_string(config.vocab_size));
  }
  return std::span<const double>(embedding).subspan(token * config.d_model, config.d_model);
}

std::span<const double> SelectiveSsm::layer_slice(const std::vector<double>& flat,
                                                  std::size_t layer, std::size_t width) const {
  check_layer(*this, layer);
  return std::span<const double>(flat).subspan(layer * width, width);
}

void SelectiveSsm::validate() const {
  config.validate();
  const auto L = config.n_layers, N = config.d_state, D = config.d_model, V = config.vocab_size;
  auto expect = [](const std::vector<double>& v, std::size_t n, const char* name) {
    if (v.size() != n) {
      throw std::invalid_argument(std::string("SelectiveSsm.") + name + ": expected " +
                                  std::to_string(n) + " values, got " + std::to_string(v.size()));
    }
    for (double x : v)
      if (!std::isfinite(x)) throw std::invalid_argument(std::string("SelectiveSsm.") + name + ": non-finite value");
  };
  expect(log_a, L * N, "log_a");
  expect(b, L * N, "b");
  expect(c, L * N, "c");
  expect(w_delta, L * D, "w_delta");
  expect(delta_bias, L, "delta_bias");
  expect(w_in, L * D, "w_in");
  expect(w_out, L * D, "w_out");
  expect(embedding, V * D, "embedding");
  expect(output_projection, D * V, "output_projection");
}

double softplus(double x) {
  // log1p(exp(x)) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

SelectiveSsm init_ssm(const SelectiveSsmConfig& config) {
  config.validate();
  const auto L = config.n_layers, N = config.d_state, D = config.d_model, V = config.vocab_size;
  SelectiveSsm m;
  m.config = config;
  std::mt19937_64 rng(config.seed);

  m.log_a.resize(L * N);
  for (std::size_t l = 0; l < L; ++l) {
    m.log_a[l * N] = std::log(kSlowChannelRate);
    for (std::size_t i = 1; i < N; ++i) m.log_a[l * N + i] = std::log(static_cast<double>(i + 1));
  }

  m.b.resize(L * N);
  fill_normal(m.b, rng, 1.0);
  m.c.resize(L * N);
  fill_normal(m.c, rng, 1.0 / std::sqrt(static_cast<double>(N)));

  m.w_delta.resize(L * D);
  m.w_in.resize(L * D);
  m.w_out.resize(L * D);
  fill_normal(m.w_delta, rng, 1.0);
  fill_normal(m.w_in, rng, 1.0);
  fill_normal(m.w_out, rng, 1.0);
  for (std::size_t l = 0; l < L; ++l) {
    normalize_to(std::span<double>(m.w_delta).subspan(l * D, D), kDeltaWeightNorm);
    normalize_to(std::span<double>(m.w_in).subspan(l * D, D), kInputWeightNorm);
    normalize_to(std::span<double>(m.w_out).subspan(l * D, D), kOutputWeightNorm);
  }

  // Bias puts the slow channel at rho = kBenignRho for a zero pre-activation.
  double delta_star = std::log(kBenignRho) / -kSlowChannelRate;
  delta_star = std::clamp(delta_star, config.delta_min, config.delta_max);
  m.delta_bias.assign(L, std::log(std::expm1(delta_star)));

  m.embedding.resize(V * D);
  fill_normal(m.embedding, rng, 1.0);
  for (std::size_t v = 0; v < V; ++v) normalize_to(std::span<double>(m.embedding).subspan(v * D, D), 1.0);

  m.output_projection.resize(D * V);
  fill_normal(m.output_projection, rng, 1.0 / std::sqrt(static_cast<double>(D)));
  return m;
}

double compute_delta(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> x) {
  const double pre =
      dot(ssm.layer_slice(ssm.w_delta, layer, ssm.config.d_model), x) + ssm.delta_bias[layer];
  return std::clamp(softplus(pre), ssm.config.delta_min, ssm.config.delta_max);
}

double input_scalar(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> x) {
  return dot(ssm.layer_slice(ssm.w_in, layer, ssm.config.d_model), x);
}

DiscretizedOperator discretize(const SelectiveSsm& ssm, std::size_t layer, double delta) {
  check_layer(ssm, layer);
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("discretize: delta must be > 0");
  const std::size_t n = ssm.config.d_state;
  std::vector<double> abar(n), bbar(n);
  double rho = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = ssm.a(layer, i);
    const double bi = ssm.b[layer * n + i];
    abar[i] = std::exp(delta * a);
    bbar[i] = std::abs(a) < 1e-12 ? delta * bi : std::expm1(delta * a) / a * bi;
    rho = std::max(rho, std::abs(abar[i]));
  }
  return {linalg::Matrix::diagonal(std::move(abar)), std::move(bbar), delta, rho};
}

std::vector<double> apply_operator(const DiscretizedOperator& op, std::span<const double> h, double u) {
  if (h.size() != op.bbar.size()) throw std::invalid_argument("apply_operator: state dimension mismatch");
  auto next = linalg::multiply(op.abar, h);
  for (std::size_t i = 0; i < next.size(); ++i) next[i] += op.bbar[i] * u;
  return next;
}

StepOutput step(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> h,
                std::span<const double> x) {
  if (h.size() != ssm.config.d_state) throw std::invalid_argument("step: state dimension mismatch");
  auto op = discretize(ssm, layer, compute_delta(ssm, layer, x));
  auto next = apply_operator(op, h, input_scalar(ssm, layer, x));
  return {std::move(next), std::move(op)};
}

std::uint64_t probe_seed(std::size_t layer) { return static_cast<std::uint64_t>(layer); }

std::vector<std::vector<double>> embed_tokens(const SelectiveSsm& ssm, std::span<const TokenId> tokens) {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (TokenId tok : tokens) {
    const auto row = ssm.embedding_row(tok);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

RunResult run_sequence(const SelectiveSsm& ssm, std::span<const TokenId> tokens, const RunOptions& options) {
  return run_embedded(ssm, embed_tokens(ssm, tokens), options);
}

RunResult run_embedded(const SelectiveSsm& ssm, const std::vector<std::vector<double>>& embeds,
                       const RunOptions& options) {
  const auto& cfg = ssm.config;
  const std::size_t L = cfg.n_layers, N = cfg.d_state, D = cfg.d_model, V = cfg.vocab_size;
  if (options.probe && options.power_iters == 0) throw std::invalid_argument("run: power_iters must be >= 1");

  RunResult result;
  result.trace.n_layers = L;
  result.trace.length = options.probe ? embeds.size() : 0;
  if (options.initial_states.empty()) {
    result.final_states.assign(L, std::vector<double>(N, 0.0));
  } else {
    if (options.initial_states.size() != L) throw std::invalid_argument("run: initial_states needs one state per layer");
    for (const auto& h : options.initial_states)
      if (h.size() != N) throw std::invalid_argument("run: initial state dimension mismatch");
    result.final_states = options.initial_states;
  }
  auto& states = result.final_states;
  result.logits.reserve(embeds.size());

  for (std::size_t t = 0; t < embeds.size(); ++t) {
    if (embeds[t].size() != D) throw std::invalid_argument("run: embedding row dimension mismatch");
    std::vector<double> stream = embeds[t];
    for (std::size_t l = 0; l < L; ++l) {
      DiscretizedOperator op = discretize(ssm, l, compute_delta(ssm, l, stream));
      if (options.hook) options.hook(t, l, op);
      const double u = input_scalar(ssm, l, stream);
      const double before = linalg::vector_norm(states[l]);
      states[l] = apply_operator(op, states[l], u);
      const double after = linalg::vector_norm(states[l]);

      const auto c = ssm.layer_slice(ssm.c, l, N);
      double y = 0.0;
      for (std::size_t i = 0; i < N; ++i) y += c[i] * states[l][i];
      const auto w_out = ssm.layer_slice(ssm.w_out, l, D);
      for (std::size_t j = 0; j < D; ++j) stream[j] += y * w_out[j];

      if (options.probe) {
        const auto est = options.dense_probe
                             ? linalg::power_method_dense(op.abar, options.power_iters, probe_seed(l))
                             : linalg::power_method(op.abar, options.power_iters, probe_seed(l));
        result.probe_multiply_adds += est.multiply_adds;
        TraceRecord rec;
        rec.t = t;
        rec.layer = l;
        rec.delta = op.delta;
        rec.rho_hat = est.rho_hat;
        rec.rho_exact = linalg::eig_radius_exact(op.abar).rho_hat;
        rec.spectral_gap = linalg::spectral_gap(op.abar);
        rec.h_norm_before = before;
        rec.h_norm_after = after;
        result.trace.append(rec);
      }
      if (options.observer) {
        options.observer(StepRecord{t, l, op.delta, op.abar, linalg::eig_radius_exact(op.abar).rho_hat, before, after});
      }
    }
    std::vector<double> logits(V, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
      const double sj = stream[j];
      const double* row = ssm.output_projection.data() + j * V;
      for (std::size_t v = 0; v < V; ++v) logits[v] += sj * row[v];
    }
    result.logits.push_back(std::move(logits));
  }
  return result;
}

}  // namespace spectral
