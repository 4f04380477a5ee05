#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "spectral/analysis.hpp"
#include "spectral/experiments.hpp"

using namespace spectral;

namespace {

DiscretizedOperator diag_op(std::vector<double> a) {
  return {linalg::Matrix::diagonal(std::move(a)), std::vector<double>(3, 1.0), 1.0, 0.0};
}

double radius(const DiscretizedOperator& op) {
  double r = 0;
  for (double x : op.abar.values()) r = std::max(r, std::abs(x));
  return r;
}

}  // namespace

TEST(ClampOperator, ScalesToTargetAndKeepsB) {
  const auto op = diag_op({0.9, -0.6, 0.3});
  const auto c = clamp_operator(op, 0.45);
  EXPECT_NEAR(radius(c), 0.45, 1e-15);
  EXPECT_NEAR(c.abar(1, 1), -0.3, 1e-15);  // proportional rescale
  EXPECT_EQ(c.bbar, op.bbar);
  EXPECT_DOUBLE_EQ(c.rho, radius(c));
}

TEST(ClampOperator, NoOpBelowTarget) {
  const auto op = diag_op({0.2, 0.1, 0.0});
  const auto c = clamp_operator(op, 0.5);
  EXPECT_EQ(std::vector<double>(c.abar.values().begin(), c.abar.values().end()),
            std::vector<double>(op.abar.values().begin(), op.abar.values().end()));
}

TEST(ClampOperator, IdempotentBitExact) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0), tgt(0.01, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double target = tgt(rng);
    const auto once = clamp_operator(diag_op({u(rng), u(rng), u(rng)}), target);
    const auto twice = clamp_operator(once, target);
    EXPECT_TRUE(std::equal(once.abar.values().begin(), once.abar.values().end(), twice.abar.values().begin()));
  }
}

TEST(ClampOperator, DenseOperatorUsesEigenRadius) {
  DiscretizedOperator op{linalg::Matrix::dense(2, 2, {0.5, 2.0, 0.0, 0.8}), {1.0, 1.0}, 1.0, 0.8};
  const auto c = clamp_operator(op, 0.4);
  EXPECT_NEAR(linalg::eig_radius_exact(c.abar).rho_hat, 0.4, 1e-12);
  EXPECT_THROW(clamp_operator(op, 0.0), std::invalid_argument);
  EXPECT_THROW(clamp_operator(op, 1.5), std::invalid_argument);
}

TEST(ClampProtocol, Validation) {
  ClampProtocol p{ClampMode::single_layer, std::nullopt, 0.5};
  EXPECT_THROW(p.validate(4), std::invalid_argument);
  p.layer = 4;
  EXPECT_THROW(p.validate(4), std::out_of_range);
  p.layer = 3;
  EXPECT_NO_THROW(p.validate(4));
  EXPECT_TRUE(p.targets(3));
  EXPECT_FALSE(p.targets(0));
}

TEST(RunWithClamp, AllLayersCappedSingleLayerLeavesUpstreamAlone) {
  const auto m = init_ssm({});
  const auto tokens = uniform_tokens(30, 256, 2);
  RunOptions opts;
  opts.probe = true;
  const auto base = run_sequence(m, tokens, opts).trace;
  const auto all = run_with_clamp(m, tokens, {ClampMode::all_layer, std::nullopt, 0.2}, opts).trace;
  for (const auto& r : all.records) EXPECT_LE(*r.rho_exact, 0.2);
  const auto one = run_with_clamp(m, tokens, {ClampMode::single_layer, 2, 0.2}, opts).trace;
  for (std::size_t i = 0; i < one.records.size(); ++i) {
    const auto& r = one.records[i];
    if (r.layer < 2) EXPECT_EQ(r.rho_hat, base.records[i].rho_hat);
    if (r.layer == 2) EXPECT_LE(*r.rho_exact, 0.2);
  }
}

TEST(RecallDataset, LayoutAndDistinctSymbols) {
  RecallConfig cfg;
  cfg.n_pairs = 5;
  cfg.distance = 1000;
  const auto tasks = gen_recall_dataset(3, cfg, 256);
  ASSERT_EQ(tasks.size(), 3u);
  for (const auto& t : tasks) {
    EXPECT_EQ(t.prompt.size(), 2u * 5u + 1000u + 2u);
    std::set<TokenId> symbols;
    for (auto [k, v] : t.pairs) symbols.insert({k, v});
    EXPECT_EQ(symbols.size(), 10u);
    EXPECT_EQ(t.prompt[t.prompt.size() - 2], cfg.marker_token);
    EXPECT_EQ(t.prompt.back(), t.query_key);
    const auto it = std::find_if(t.pairs.begin(), t.pairs.end(), [&](auto p) { return p.first == t.query_key; });
    ASSERT_NE(it, t.pairs.end());
    EXPECT_EQ(it->second, t.answer);
    for (std::size_t i = 0; i + 2 < t.prompt.size(); ++i) EXPECT_NE(t.prompt[i], cfg.marker_token);
  }
}

TEST(RecallDataset, SmallestPromptAndErrors) {
  RecallConfig cfg;
  cfg.n_pairs = 1;
  cfg.distance = 1;
  EXPECT_EQ(gen_recall_dataset(1, cfg, 8).front().prompt.size(), 5u);
  cfg.n_pairs = 10;
  EXPECT_THROW(gen_recall_dataset(1, cfg, 8), std::invalid_argument);
}

TEST(Retention, ClampedDecayIsExactPower) {
  const auto m = init_ssm({});
  EXPECT_NEAR(retention_probe(m, 0.3, 10), std::pow(0.3, 10), 1e-18);
  const auto curve = retention_curve(m, 0.5, 20);
  for (std::size_t d = 0; d <= 20; ++d) EXPECT_NEAR(curve[d], std::pow(0.5, d), 1e-15 * std::pow(0.5, d) + 1e-300);
}

TEST(Retention, UnclampedFollowsSlowChannelProduct) {
  const auto m = init_ssm({});
  const auto noise = uniform_tokens(50, 256, 0);
  double want = 1.0;
  for (TokenId tok : noise) want *= std::exp(compute_delta(m, 0, m.embedding_row(tok)) * m.a(0, 0));
  EXPECT_NEAR(retention_probe(m, 1.0, 50), want, 1e-12 * want);
}

TEST(PhaseGrid, MonotoneAndBelowCeiling) {
  const auto m = init_ssm({});
  const std::vector<double> levels{0.3, 0.7, 0.85, 0.9, 0.95, 0.99};
  const std::vector<std::size_t> dists{10, 50, 100, 200, 500, 1000};
  const auto g = phase_transition_grid(m, levels, dists, 1e-5);
  EXPECT_TRUE(g.monotone());
  for (std::size_t i = 0; i < levels.size(); ++i)
    EXPECT_LE(static_cast<double>(g.empirical_horizon[i]), horizon_bound({levels[i]}).value);
  EXPECT_FALSE(g.recoverable_at(0, 0));  // 0.3^10 < 1e-5
  EXPECT_TRUE(g.recoverable_at(3, 0));   // 0.9^10 >= 1e-5
}

TEST(PhaseGrid, BindingLevelsScaleWithLogRho) {
  // Where the clamp binds, retention(d) = rho^d, so the crossing distances
  // of two levels stay in the ratio ln(rho_2)/ln(rho_1).
  const auto m = init_ssm({});
  const std::vector<double> levels{0.85, 0.90};
  std::vector<std::size_t> dists(200);
  for (std::size_t i = 0; i < dists.size(); ++i) dists[i] = i + 1;
  const auto g = phase_transition_grid(m, levels, dists, 1e-5);
  const double ratio = static_cast<double>(g.empirical_horizon[1]) / static_cast<double>(g.empirical_horizon[0]);
  EXPECT_NEAR(ratio, std::log(0.85) / std::log(0.90), 0.05);
}

TEST(PhaseGrid, MonotoneDetectsViolation) {
  PhaseGrid g;
  g.rho_levels = {0.5, 0.9};
  g.distances = {10, 20};
  g.recoverable = {true, false, false, false};  // higher rho lost what lower rho kept
  EXPECT_FALSE(g.monotone());
  g.recoverable = {false, false, true, false};
  EXPECT_TRUE(g.monotone());
}

TEST(LabeledTraces, BalancedAndSeparableByMinimum) {
  const auto m = init_ssm({});
  LabeledTraceConfig cfg;
  cfg.length = 32;
  const auto data = gen_labeled_traces(m, 10, 10, cfg);
  ASSERT_EQ(data.size(), 20u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(data[i].label, i < 10 ? 0 : 1);
    EXPECT_EQ(data[i].trace.records.size(), 32u * 4u);
    const auto mins = data[i].trace.min_rho_per_token();
    const double lo = *std::min_element(mins.begin(), mins.end());
    if (data[i].label == 0) EXPECT_GT(lo, 0.5);
    else EXPECT_LE(lo, 0.25 + 1e-9);
  }
  EXPECT_NO_THROW(gen_labeled_traces(m, 3, 0, cfg));
  EXPECT_THROW(gen_labeled_traces(m, 0, 0, cfg), std::invalid_argument);
}

TEST(LabeledTraces, PgdSourceProducesAttackedTokens) {
  const auto m = init_ssm({});
  LabeledTraceConfig cfg;
  cfg.length = 12;
  cfg.source = AdversarialSource::pgd;
  cfg.attack.steps = 10;
  const auto data = gen_labeled_traces(m, 0, 2, cfg);
  for (const auto& lt : data) EXPECT_EQ(lt.source, "pgd");
}

TEST(BenignPrompts, ZipfSkewsTowardHeadTokens) {
  const auto prompts = gen_benign_prompts(50, 40, 256, 1.1, 3);
  std::vector<std::size_t> counts(256, 0);
  for (const auto& p : prompts)
    for (auto t : p) ++counts[t];
  std::sort(counts.rbegin(), counts.rend());
  EXPECT_GT(counts[0], 5 * counts[50]);
  EXPECT_EQ(gen_benign_prompts(2, 5, 256, 1.1, 3), gen_benign_prompts(2, 5, 256, 1.1, 3));
}
