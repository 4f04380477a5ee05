#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spectral/ssm.hpp"
#include "spectral/trace.hpp"

namespace spectral {

// Layout is fixed: [means | stds | gaps?], n_layers entries per block.
struct FeatureVector {
  std::vector<double> values;
  std::size_t n_layers = 0;
  bool has_gaps = false;

  std::size_t dimension() const noexcept { return values.size(); }
  std::span<const double> means() const { return std::span<const double>(values).subspan(0, n_layers); }
  std::span<const double> stds() const { return std::span<const double>(values).subspan(n_layers, n_layers); }
  std::vector<std::string> layout() const;
};

std::vector<std::string> feature_layout(std::size_t n_layers, bool include_gaps);

// Per-layer sample mean and sample std (n-1) of rho_hat; std is 0 for a
// single token. Throws on an empty trace or when gaps are requested but absent.
FeatureVector extract_features(const SpectralTrace& trace, bool include_gaps = false);

double spectral_gap(const DiscretizedOperator& op);

// lambda_max of the controllability Gramian. Diagonal operators use the
// closed form W_ij = b_i b_j / (1 - a_i a_j). Throws std::domain_error for rho >= 1.
double gramian_energy(const DiscretizedOperator& op);

struct HorizonInputs {
  double rho = 0.99;
  double kappa = 1.0;
  double h0_norm = 1.0;
  double epsilon = 1e-5;
  double lambda_max_wc = 1.0;
};

struct HorizonBound {
  double value = 0.0;
  bool vacuous = false;  // log argument <= 1
};

// ln(kappa * sqrt(h0^2 / (eps^2 lambda_max))) / ln(1 / rho).
// Throws std::domain_error for rho >= 1 and std::invalid_argument for other
// out-of-range inputs.
HorizonBound horizon_bound(const HorizonInputs& in);

// ln(kappa / epsilon) / eta, for 0 < eta < 0.5.
double near_critical_horizon(double eta, double kappa, double epsilon);

// ||A|| * exp(delta_max * ||A||)
double lipschitz_certificate(double a_norm, double delta_max);

// Smallest |dDelta| that can move rho by delta_rho under the certificate.
double min_delta_perturbation(double delta_rho, double lipschitz);

struct LipschitzCheck {
  double max_ratio = 0.0;
  double bound = 0.0;
  std::size_t pairs = 0;       // pairs with delta_1 != delta_2
  std::size_t violations = 0;
};

// Samples (delta_1, delta_2) uniformly from [delta_lo, delta_hi] and compares
// |rho(exp(delta_1 A)) - rho(exp(delta_2 A))| / |delta_1 - delta_2| with L_A.
LipschitzCheck verify_lipschitz(std::span<const double> a_diag, double delta_lo, double delta_hi,
                                std::size_t n_samples, std::uint64_t seed);

LipschitzCheck verify_lipschitz(const SelectiveSsm& ssm, std::size_t layer, std::size_t n_samples,
                                std::uint64_t seed);

}  // namespace spectral
