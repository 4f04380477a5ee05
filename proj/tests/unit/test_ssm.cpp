#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "spectral/experiments.hpp"
#include "spectral/ssm.hpp"

using namespace spectral;

namespace {

SelectiveSsm small_model(std::uint64_t seed = 0) {
  SelectiveSsmConfig cfg;
  cfg.n_layers = 2;
  cfg.d_state = 4;
  cfg.d_model = 8;
  cfg.vocab_size = 16;
  cfg.seed = seed;
  return init_ssm(cfg);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Straight-line reference of the residual recurrence, written against the
// raw weight arrays.
std::vector<std::vector<double>> reference_logits(const SelectiveSsm& m, const std::vector<TokenId>& tokens) {
  const auto L = m.config.n_layers, N = m.config.d_state, D = m.config.d_model, V = m.config.vocab_size;
  std::vector<double> h(L * N, 0.0);
  std::vector<std::vector<double>> out;
  for (TokenId tok : tokens) {
    std::vector<double> s(m.embedding.begin() + tok * D, m.embedding.begin() + (tok + 1) * D);
    for (std::size_t l = 0; l < L; ++l) {
      const double pre = dot(&m.w_delta[l * D], s.data(), D) + m.delta_bias[l];
      double delta = std::log(1.0 + std::exp(pre));
      delta = std::min(std::max(delta, m.config.delta_min), m.config.delta_max);
      const double u = dot(&m.w_in[l * D], s.data(), D);
      double y = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const double a = -std::exp(m.log_a[l * N + i]);
        const double abar = std::exp(delta * a);
        const double bbar = (abar - 1.0) / a * m.b[l * N + i];
        h[l * N + i] = abar * h[l * N + i] + bbar * u;
        y += m.c[l * N + i] * h[l * N + i];
      }
      for (std::size_t j = 0; j < D; ++j) s[j] += y * m.w_out[l * D + j];
    }
    std::vector<double> logits(V, 0.0);
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t j = 0; j < D; ++j) logits[v] += s[j] * m.output_projection[j * V + v];
    out.push_back(logits);
  }
  return out;
}

}  // namespace

TEST(SelectiveSsmConfig, RejectsInvalid) {
  SelectiveSsmConfig cfg;
  cfg.d_state = 0;
  EXPECT_THROW(init_ssm(cfg), std::invalid_argument);
  cfg = {};
  cfg.delta_min = 2.0;
  cfg.delta_max = 1.0;
  EXPECT_THROW(init_ssm(cfg), std::invalid_argument);
}

TEST(InitSsm, ShapesAndStableSpectrum) {
  const auto m = init_ssm({});
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.log_a.size(), 4u * 16u);
  EXPECT_EQ(m.embedding.size(), 256u * 32u);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_LT(m.a(l, i), 0.0);
  for (std::size_t v = 0; v < 256; ++v) {
    const auto row = m.embedding_row(static_cast<TokenId>(v));
    EXPECT_NEAR(std::sqrt(dot(row.data(), row.data(), row.size())), 1.0, 1e-12);
  }
}

TEST(InitSsm, SeedDeterminesWeights) {
  const auto a = small_model(3), b = small_model(3), c = small_model(4);
  EXPECT_EQ(a.b, b.b);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_NE(a.b, c.b);
}

TEST(InitSsm, BenignRegimeIsNearCritical) {
  const auto m = init_ssm({});
  RunOptions opts;
  opts.probe = true;
  const auto trace = run_sequence(m, uniform_tokens(200, 256, 1), opts).trace;
  std::vector<double> rho;
  for (const auto& r : trace.records) rho.push_back(*r.rho_exact);
  std::nth_element(rho.begin(), rho.begin() + rho.size() / 2, rho.end());
  EXPECT_GE(rho[rho.size() / 2], 0.90);
  EXPECT_LT(rho[rho.size() / 2], 1.0);
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
  EXPECT_NEAR(softplus(1.5), std::log1p(std::exp(1.5)), 1e-15);
}

TEST(ComputeDelta, ClampedToRange) {
  auto m = small_model();
  std::vector<double> x(8, 0.0);
  m.delta_bias[0] = 100.0;
  EXPECT_EQ(compute_delta(m, 0, x), m.config.delta_max);
  m.delta_bias[0] = -100.0;
  EXPECT_EQ(compute_delta(m, 0, x), m.config.delta_min);
}

TEST(Discretize, ZeroOrderHoldFormulas) {
  const auto m = small_model();
  const double delta = 0.37;
  const auto op = discretize(m, 1, delta);
  double rho = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double a = m.a(1, i);
    EXPECT_DOUBLE_EQ(op.abar(i, i), std::exp(delta * a));
    // B-bar = A^-1 (exp(delta A) - I) B
    EXPECT_NEAR(op.bbar[i], (std::exp(delta * a) - 1.0) / a * m.b[4 + i], 1e-14);
    rho = std::max(rho, std::exp(delta * a));
  }
  EXPECT_DOUBLE_EQ(op.rho, rho);
  EXPECT_THROW(discretize(m, 1, 0.0), std::invalid_argument);
  EXPECT_THROW(discretize(m, 2, 0.1), std::out_of_range);
}

TEST(Discretize, TinyEigenvalueFallsBackToEuler) {
  auto m = small_model();
  m.log_a[0] = std::log(1e-14);
  const auto op = discretize(m, 0, 0.5);
  EXPECT_DOUBLE_EQ(op.bbar[0], 0.5 * m.b[0]);
}

TEST(RunSequence, MatchesStraightLineReference) {
  const auto m = small_model(9);
  const std::vector<TokenId> tokens{1, 5, 3, 15, 0, 7, 7, 2};
  const auto got = run_sequence(m, tokens).logits;
  const auto want = reference_logits(m, tokens);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t t = 0; t < got.size(); ++t)
    for (std::size_t v = 0; v < got[t].size(); ++v) EXPECT_NEAR(got[t][v], want[t][v], 1e-12);
}

TEST(RunSequence, EmptySequenceGivesEmptyOutputs) {
  const auto m = small_model();
  RunOptions opts;
  opts.probe = true;
  const auto r = run_sequence(m, std::vector<TokenId>{}, opts);
  EXPECT_TRUE(r.logits.empty());
  EXPECT_TRUE(r.trace.empty());
}

TEST(RunSequence, ProbeRecordsEveryTokenAndLayer) {
  const auto m = small_model();
  RunOptions opts;
  opts.probe = true;
  const auto r = run_sequence(m, std::vector<TokenId>{1, 2, 3}, opts);
  EXPECT_EQ(r.trace.records.size(), 6u);
  EXPECT_NO_THROW(r.trace.validate());
  for (const auto& rec : r.trace.records) {
    EXPECT_LE(rec.rho_hat, *rec.rho_exact + 1e-12);
    EXPECT_GT(rec.rho_hat, 0.0);
  }
  EXPECT_EQ(r.probe_multiply_adds, 6u * 3u * 4u);
}

TEST(RunSequence, ProbeDoesNotChangeOutputs) {
  const auto m = small_model();
  const std::vector<TokenId> tokens{4, 4, 9, 1};
  RunOptions opts;
  opts.probe = true;
  EXPECT_EQ(run_sequence(m, tokens).logits, run_sequence(m, tokens, opts).logits);
}

TEST(RunSequence, HookRewritesOperatorBeforeUpdate) {
  const auto m = small_model();
  RunOptions opts;
  opts.probe = true;
  opts.hook = [](std::size_t, std::size_t, DiscretizedOperator& op) {
    op.abar = linalg::Matrix::diagonal(std::vector<double>(op.bbar.size(), 0.0));
    std::fill(op.bbar.begin(), op.bbar.end(), 0.0);
  };
  const auto r = run_sequence(m, std::vector<TokenId>{3, 8}, opts);
  for (const auto& h : r.final_states)
    for (double x : h) EXPECT_EQ(x, 0.0);
  for (const auto& rec : r.trace.records) EXPECT_EQ(rec.rho_hat, 0.0);
}

TEST(RunSequence, ObserverSeesEveryStepInOrder) {
  const auto m = small_model();
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  RunOptions opts;
  opts.observer = [&](const StepRecord& s) { seen.emplace_back(s.t, s.layer); };
  run_sequence(m, std::vector<TokenId>{1, 2}, opts);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(seen, want);
}

TEST(RunSequence, InitialStateDecaysUnderOperator) {
  const auto m = small_model();
  RunOptions opts;
  opts.initial_states = {{1, 0, 0, 0}, {0, 0, 0, 0}};
  const auto with = run_sequence(m, std::vector<TokenId>{2}, opts).final_states;
  const auto without = run_sequence(m, std::vector<TokenId>{2}).final_states;
  const double delta = compute_delta(m, 0, m.embedding_row(2));
  EXPECT_NEAR(with[0][0] - without[0][0], std::exp(delta * m.a(0, 0)), 1e-14);
}

TEST(RunSequence, RejectsBadInputs) {
  const auto m = small_model();
  EXPECT_THROW(run_sequence(m, std::vector<TokenId>{16}), std::out_of_range);
  RunOptions opts;
  opts.initial_states = {{0, 0, 0, 0}};
  EXPECT_THROW(run_sequence(m, std::vector<TokenId>{1}, opts), std::invalid_argument);
  opts = {};
  opts.probe = true;
  opts.power_iters = 0;
  EXPECT_THROW(run_sequence(m, std::vector<TokenId>{1}, opts), std::invalid_argument);
}

TEST(Trace, MinRhoPerTokenAndMean) {
  SpectralTrace tr;
  tr.n_layers = 2;
  tr.length = 2;
  tr.append({0, 0, 1.0, 0.9});
  tr.append({0, 1, 1.0, 0.5});
  tr.append({1, 0, 1.0, 0.7});
  tr.append({1, 1, 1.0, 0.8});
  EXPECT_NO_THROW(tr.validate());
  EXPECT_EQ(tr.min_rho_per_token(), (std::vector<double>{0.5, 0.7}));
  EXPECT_DOUBLE_EQ(tr.mean_rho_hat(), (0.9 + 0.5 + 0.7 + 0.8) / 4);
  EXPECT_EQ(tr.at(1, 0).rho_hat, 0.7);
  tr.records[2].layer = 1;
  EXPECT_THROW(tr.validate(), std::invalid_argument);
}
