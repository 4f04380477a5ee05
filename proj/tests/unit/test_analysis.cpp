#include <gtest/gtest.h>

#include <cmath>

#include "spectral/analysis.hpp"
#include "spectral/experiments.hpp"

using namespace spectral;

namespace {

SpectralTrace make_trace(const std::vector<std::vector<double>>& rho_by_token) {
  SpectralTrace tr;
  tr.n_layers = rho_by_token.front().size();
  tr.length = rho_by_token.size();
  for (std::size_t t = 0; t < rho_by_token.size(); ++t)
    for (std::size_t l = 0; l < tr.n_layers; ++l) {
      TraceRecord r;
      r.t = t;
      r.layer = l;
      r.rho_hat = rho_by_token[t][l];
      r.spectral_gap = 0.1 * static_cast<double>(l + 1);
      tr.append(r);
    }
  return tr;
}

DiscretizedOperator diag_op(std::vector<double> a, std::vector<double> b) {
  double rho = 0;
  for (double x : a) rho = std::max(rho, std::abs(x));
  return {linalg::Matrix::diagonal(std::move(a)), std::move(b), 1.0, rho};
}

}  // namespace

TEST(Features, MeansAndSampleStds) {
  const auto f = extract_features(make_trace({{0.9, 0.2}, {0.7, 0.4}, {0.8, 0.6}}));
  ASSERT_EQ(f.dimension(), 4u);
  EXPECT_NEAR(f.values[0], 0.8, 1e-15);
  EXPECT_NEAR(f.values[1], 0.4, 1e-15);
  EXPECT_NEAR(f.values[2], 0.1, 1e-15);  // sample std of {0.9, 0.7, 0.8}
  EXPECT_NEAR(f.values[3], 0.2, 1e-15);
  EXPECT_EQ(f.layout(), (std::vector<std::string>{"mean_rho_l0", "mean_rho_l1", "std_rho_l0", "std_rho_l1"}));
}

TEST(Features, SingleTokenHasZeroStd) {
  const auto f = extract_features(make_trace({{0.5, 0.6, 0.7}}));
  EXPECT_EQ(f.values[3], 0.0);
  EXPECT_EQ(f.values[5], 0.0);
}

TEST(Features, OptionalGapBlock) {
  const auto f = extract_features(make_trace({{0.5, 0.6}, {0.5, 0.6}}), true);
  ASSERT_EQ(f.dimension(), 6u);
  EXPECT_NEAR(f.values[4], 0.1, 1e-15);
  EXPECT_NEAR(f.values[5], 0.2, 1e-15);
  EXPECT_THROW(extract_features(SpectralTrace{}), std::invalid_argument);
}

TEST(GramianEnergy, MatchesTruncatedSeries) {
  const auto op = diag_op({0.9, -0.5, 0.3}, {1.0, 2.0, -0.5});
  // W = sum_k A^k B B^T A^k, accumulated explicitly.
  double w[3][3] = {};
  double ak[3] = {1, 1, 1};
  for (int k = 0; k < 2000; ++k) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) w[i][j] += ak[i] * op.bbar[i] * ak[j] * op.bbar[j];
    for (int i = 0; i < 3; ++i) ak[i] *= op.abar(i, i);
  }
  std::vector<double> flat;
  for (auto& row : w)
    for (double x : row) flat.push_back(x);
  const auto ev = linalg::symmetric_eigenvalues(linalg::Matrix::dense(3, 3, flat));
  EXPECT_NEAR(gramian_energy(op), ev.back(), 1e-10);
}

TEST(GramianEnergy, ZeroInputAndDivergence) {
  EXPECT_EQ(gramian_energy(diag_op({0.5, 0.5}, {0.0, 0.0})), 0.0);
  EXPECT_THROW(gramian_energy(diag_op({1.0, 0.5}, {1.0, 1.0})), std::domain_error);
}

TEST(HorizonBound, HandFormula) {
  HorizonInputs in{0.95, 2.0, 3.0, 1e-4, 0.5};
  const double want = std::log(2.0 * std::sqrt(9.0 / (1e-8 * 0.5))) / std::log(1.0 / 0.95);
  const auto b = horizon_bound(in);
  EXPECT_NEAR(b.value, want, 1e-9);
  EXPECT_FALSE(b.vacuous);
}

TEST(HorizonBound, RatioNearCriticalIsAboutTwo) {
  const double r = horizon_bound({0.99}).value / horizon_bound({0.98}).value;
  EXPECT_GE(r, 1.9);
  EXPECT_LE(r, 2.1);
}

TEST(HorizonBound, VacuousWhenSignalBelowThreshold) {
  // kappa * ||h0|| / (eps sqrt(lambda)) <= 1
  const auto b = horizon_bound({0.9, 1.0, 1e-6, 1e-5, 1.0});
  EXPECT_TRUE(b.vacuous);
  EXPECT_EQ(b.value, 0.0);
}

TEST(HorizonBound, RejectsInvalid) {
  EXPECT_THROW(horizon_bound({1.0}), std::domain_error);
  EXPECT_THROW(horizon_bound({1.5}), std::domain_error);
  EXPECT_THROW(horizon_bound({0.0}), std::invalid_argument);
  EXPECT_THROW(horizon_bound({0.9, 0.5}), std::invalid_argument);
  EXPECT_THROW(horizon_bound({0.9, 1.0, 1.0, 0.0}), std::invalid_argument);
}

TEST(NearCriticalHorizon, Values) {
  EXPECT_NEAR(near_critical_horizon(0.01, 1.0, 1e-5), std::log(1e5) / 0.01, 1e-9);
  EXPECT_NEAR(near_critical_horizon(0.01, 1.0, 1e-5), 1151.29, 0.01);
  EXPECT_THROW(near_critical_horizon(0.5, 1.0, 1e-5), std::invalid_argument);
  EXPECT_THROW(near_critical_horizon(0.0, 1.0, 1e-5), std::invalid_argument);
}

TEST(Lipschitz, CertificateAndMinPerturbation) {
  EXPECT_NEAR(lipschitz_certificate(1.0, 10.0), std::exp(10.0), 1e-9);
  EXPECT_NEAR(lipschitz_certificate(2.0, 0.5), 2.0 * std::exp(1.0), 1e-12);
  EXPECT_NEAR(min_delta_perturbation(0.01, std::exp(10.0)), 0.01 * std::exp(-10.0), 1e-20);
  EXPECT_THROW(lipschitz_certificate(0.0, 1.0), std::invalid_argument);
}

TEST(Lipschitz, EmpiricalRatiosRespectCertificate) {
  const std::vector<double> a{-0.03125, -2.0, -3.0};
  const auto check = verify_lipschitz(a, 1e-3, 10.0, 1000, 5);
  EXPECT_EQ(check.violations, 0u);
  EXPECT_GT(check.pairs, 990u);
  EXPECT_LE(check.max_ratio, check.bound);
  // d rho / d delta = |a_0| exp(delta a_0) <= |a_0| for the slow channel.
  EXPECT_LE(check.max_ratio, 0.03125 + 1e-12);
}

TEST(Lipschitz, ModelLayerCheck) {
  const auto m = init_ssm({});
  const auto check = verify_lipschitz(m, 2, 200, 1);
  EXPECT_EQ(check.violations, 0u);
  EXPECT_GT(check.bound, 0.0);
}
