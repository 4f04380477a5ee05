#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spectral/linalg.hpp"
#include "spectral/trace.hpp"

namespace spectral {

struct SelectiveSsmConfig {
  std::size_t n_layers = 4;
  std::size_t d_state = 16;
  std::size_t d_model = 32;
  std::size_t vocab_size = 256;
  double delta_min = 1e-3;
  double delta_max = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Weights are flat arrays, layer-major. Continuous A is stored in log space:
// a_i = -exp(log_a_i) < 0. D is fixed at zero.
struct SelectiveSsm {
  SelectiveSsmConfig config;
  std::vector<double> log_a;              // n_layers * d_state
  std::vector<double> b;                  // n_layers * d_state
  std::vector<double> c;                  // n_layers * d_state
  std::vector<double> w_delta;            // n_layers * d_model
  std::vector<double> delta_bias;         // n_layers
  std::vector<double> w_in;               // n_layers * d_model
  std::vector<double> w_out;              // n_layers * d_model
  std::vector<double> embedding;          // vocab_size * d_model, unit rows
  std::vector<double> output_projection;  // d_model * vocab_size

  double a(std::size_t layer, std::size_t i) const;
  std::vector<double> a_diag(std::size_t layer) const;
  std::span<const double> embedding_row(TokenId token) const;
  std::span<const double> layer_slice(const std::vector<double>& flat, std::size_t layer,
                                      std::size_t width) const;

  // Checks array sizes, a_i < 0 and finiteness.
  void validate() const;
};

struct DiscretizedOperator {
  linalg::Matrix abar;       // diagonal
  std::vector<double> bbar;  // column, d_state
  double delta = 0.0;
  double rho = 0.0;          // exact: max |abar_ii|
};

struct StepRecord {
  std::size_t t = 0;
  std::size_t layer = 0;
  double delta = 0.0;
  linalg::Matrix abar;
  double rho_exact = 0.0;
  double h_norm_before = 0.0;
  double h_norm_after = 0.0;
};

using OperatorHook = std::function<void(std::size_t t, std::size_t layer, DiscretizedOperator&)>;
using StepObserver = std::function<void(const StepRecord&)>;

struct RunOptions {
  bool probe = false;
  std::size_t power_iters = 3;
  bool dense_probe = false;  // force the d^2 matrix-vector product in the probe
  OperatorHook hook;         // may rewrite the operator before the state update
  StepObserver observer;
  std::vector<std::vector<double>> initial_states;  // per layer; empty means zeros
};

struct RunResult {
  std::vector<std::vector<double>> logits;  // one row of vocab_size per token
  SpectralTrace trace;
  std::vector<std::vector<double>> final_states;
  std::uint64_t probe_multiply_adds = 0;
};

SelectiveSsm init_ssm(const SelectiveSsmConfig& config);

double softplus(double x);

// clamp(softplus(w_delta . x + bias), delta_min, delta_max)
double compute_delta(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> x);

// Scalar input channel u = w_in . x for the layer.
double input_scalar(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> x);

DiscretizedOperator discretize(const SelectiveSsm& ssm, std::size_t layer, double delta);

struct StepOutput {
  std::vector<double> h;
  DiscretizedOperator op;
};

StepOutput step(const SelectiveSsm& ssm, std::size_t layer, std::span<const double> h,
                std::span<const double> x);

// h' = abar h + bbar u
std::vector<double> apply_operator(const DiscretizedOperator& op, std::span<const double> h,
                                   double u);

// Power-method seed for a layer's probe; fixed per layer.
std::uint64_t probe_seed(std::size_t layer);

RunResult run_sequence(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                       const RunOptions& options = {});

// Same pipeline driven by continuous embeddings (one d_model row per position).
RunResult run_embedded(const SelectiveSsm& ssm, const std::vector<std::vector<double>>& embeds,
                       const RunOptions& options = {});

std::vector<std::vector<double>> embed_tokens(const SelectiveSsm& ssm,
                                              std::span<const TokenId> tokens);

}  // namespace spectral
