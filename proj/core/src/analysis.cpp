#include "spectral/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace spectral {

std::vector<std::string> feature_layout(std::size_t n_layers, bool include_gaps) {
  std::vector<std::string> names;
  const char* blocks[] = {"mean_rho", "std_rho", "mean_gap"};
  const std::size_t n_blocks = include_gaps ? 3 : 2;
  for (std::size_t b = 0; b < n_blocks; ++b)
    for (std::size_t l = 0; l < n_layers; ++l) names.push_back(std::string(blocks[b]) + "_l" + std::to_string(l));
  return names;
}

std::vector<std::string> FeatureVector::layout() const { return feature_layout(n_layers, has_gaps); }

FeatureVector extract_features(const SpectralTrace& trace, bool include_gaps) {
  if (trace.records.empty() || trace.n_layers == 0) throw std::invalid_argument("extract_features: empty trace");
  const std::size_t L = trace.n_layers;
  std::vector<double> sum(L, 0.0), gap_sum(L, 0.0);
  std::vector<std::size_t> count(L, 0);
  for (const auto& r : trace.records) {
    if (r.layer >= L) throw std::invalid_argument("extract_features: record layer out of range");
    sum[r.layer] += r.rho_hat;
    ++count[r.layer];
    if (include_gaps) {
      if (!r.spectral_gap) throw std::invalid_argument("extract_features: gaps requested but record has none");
      gap_sum[r.layer] += *r.spectral_gap;
    }
  }
  FeatureVector f;
  f.n_layers = L;
  f.has_gaps = include_gaps;
  f.values.assign((include_gaps ? 3 : 2) * L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    if (count[l] == 0) throw std::invalid_argument("extract_features: layer " + std::to_string(l) + " has no records");
    f.values[l] = sum[l] / static_cast<double>(count[l]);
    if (include_gaps) f.values[2 * L + l] = gap_sum[l] / static_cast<double>(count[l]);
  }
  std::vector<double> sq(L, 0.0);
  for (const auto& r : trace.records) {
    const double d = r.rho_hat - f.values[r.layer];
    sq[r.layer] += d * d;
  }
  for (std::size_t l = 0; l < L; ++l)
    f.values[L + l] = count[l] > 1 ? std::sqrt(sq[l] / static_cast<double>(count[l] - 1)) : 0.0;
  return f;
}

double spectral_gap(const DiscretizedOperator& op) { return linalg::spectral_gap(op.abar); }

double gramian_energy(const DiscretizedOperator& op) {
  const std::size_t n = op.abar.rows();
  if (op.bbar.size() != n) throw std::invalid_argument("gramian_energy: B dimension mismatch");
  if (std::all_of(op.bbar.begin(), op.bbar.end(), [](double x) { return x == 0.0; })) return 0.0;

  linalg::Matrix w;
  if (op.abar.is_diagonal()) {
    const auto a = op.abar.values();
    double rho = 0.0;
    for (double x : a) rho = std::max(rho, std::abs(x));
    if (rho >= 1.0) throw std::domain_error("Gramian diverges: spectral radius of A is >= 1");
    std::vector<double> entries(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) entries[i * n + j] = op.bbar[i] * op.bbar[j] / (1.0 - a[i] * a[j]);
    w = linalg::Matrix::dense(n, n, std::move(entries));
  } else {
    w = linalg::solve_discrete_lyapunov(op.abar, linalg::Matrix::dense(n, 1, op.bbar));
  }
  return linalg::symmetric_eigenvalues(w).back();
}

HorizonBound horizon_bound(const HorizonInputs& in) {
  if (in.rho >= 1.0) throw std::domain_error("bound undefined: marginally stable or divergent (rho >= 1)");
  if (!(in.rho > 0.0)) throw std::invalid_argument("horizon_bound: rho must be in (0, 1)");
  if (!(in.kappa >= 1.0)) throw std::invalid_argument("horizon_bound: kappa must be >= 1");
  if (!(in.h0_norm > 0.0)) throw std::invalid_argument("horizon_bound: h0_norm must be > 0");
  if (!(in.epsilon > 0.0 && in.epsilon < 1.0)) throw std::invalid_argument("horizon_bound: epsilon must be in (0, 1)");
  if (!(in.lambda_max_wc > 0.0)) throw std::invalid_argument("horizon_bound: lambda_max_wc must be > 0");

  const double arg =
      in.kappa * std::sqrt(in.h0_norm * in.h0_norm / (in.epsilon * in.epsilon * in.lambda_max_wc));
  if (arg <= 1.0) return {0.0, true};
  return {std::log(arg) / std::log(1.0 / in.rho), false};
}

double near_critical_horizon(double eta, double kappa, double epsilon) {
  if (!(eta > 0.0 && eta < 0.5)) throw std::invalid_argument("near_critical_horizon: eta must be in (0, 0.5)");
  if (!(kappa > 0.0) || !(epsilon > 0.0)) throw std::invalid_argument("near_critical_horizon: kappa, epsilon must be > 0");
  return std::log(kappa / epsilon) / eta;
}

double lipschitz_certificate(double a_norm, double delta_max) {
  if (!(a_norm > 0.0) || !(delta_max > 0.0)) throw std::invalid_argument("lipschitz_certificate: inputs must be > 0");
  return a_norm * std::exp(delta_max * a_norm);
}

double min_delta_perturbation(double delta_rho, double lipschitz) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("min_delta_perturbation: lipschitz must be > 0");
  return std::abs(delta_rho) / lipschitz;
}

LipschitzCheck verify_lipschitz(std::span<const double> a_diag, double delta_lo, double delta_hi,
                                std::size_t n_samples, std::uint64_t seed) {
  if (a_diag.empty()) throw std::invalid_argument("verify_lipschitz: empty spectrum");
  if (!(delta_lo > 0.0 && delta_lo < delta_hi)) throw std::invalid_argument("verify_lipschitz: need 0 < lo < hi");
  double a_norm = 0.0;
  for (double a : a_diag) a_norm = std::max(a_norm, std::abs(a));

  auto rho = [&](double delta) {
    double r = 0.0;
    for (double a : a_diag) r = std::max(r, std::exp(delta * a));
    return r;
  };

  LipschitzCheck out;
  out.bound = lipschitz_certificate(a_norm, delta_hi);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(delta_lo, delta_hi);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double d1 = uniform(rng), d2 = uniform(rng);
    if (d1 == d2) continue;
    ++out.pairs;
    const double ratio = std::abs(rho(d1) - rho(d2)) / std::abs(d1 - d2);
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (ratio > out.bound) ++out.violations;
  }
  return out;
}

LipschitzCheck verify_lipschitz(const SelectiveSsm& ssm, std::size_t layer, std::size_t n_samples,
                                std::uint64_t seed) {
  const auto a = ssm.a_diag(layer);
  return verify_lipschitz(a, ssm.config.delta_min, ssm.config.delta_max, n_samples, seed);
}

}  // namespace spectral
