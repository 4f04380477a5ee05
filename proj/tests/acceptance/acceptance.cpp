// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
// Reference values are recomputed here from closed forms or brute-force
// oracles rather than read back from the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "spectral/analysis.hpp"
#include "spectral/attack.hpp"
#include "spectral/experiments.hpp"
#include "spectral/guard.hpp"
#include "spectral/linalg.hpp"
#include "spectral/ssm.hpp"

using namespace spectral;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void run(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += fmt(" [over time budget %.0f s]", budget_s);
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

const SelectiveSsm& model() {
  static const SelectiveSsm m = init_ssm({});
  return m;
}

Outcome power_method_fidelity() {
  const auto& m = model();
  std::vector<double> exact, approx;
  RunOptions opts;
  opts.probe = true;
  opts.power_iters = 3;
  opts.observer = [&](const StepRecord& s) {
    // Oracle: the largest diagonal magnitude of the realized operator.
    exact.push_back(max_abs(s.abar.values()));
  };
  const auto trace = run_sequence(m, uniform_tokens(250, m.config.vocab_size, 2024), opts).trace;
  for (const auto& r : trace.records) approx.push_back(r.rho_hat);
  exact.resize(1000);
  approx.resize(1000);
  double mae = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) mae += std::abs(exact[i] - approx[i]);
  mae /= static_cast<double>(exact.size());
  const double r = pearson(exact, approx);
  return {mae < 1e-5 && r > 0.999999, fmt("n=%zu k=3 MAE=%.3e r=%.9f", exact.size(), mae, r)};
}

Outcome metric_arithmetic() {
  const auto m = metrics_from_counts(245, 15, 235, 5);
  const bool ok = std::abs(m.precision - 0.9423) <= 1e-4 && std::abs(m.recall - 0.9800) <= 1e-4 &&
                  std::abs(m.f1 - 0.9608) <= 1e-4 && std::abs(m.fpr - 0.0600) <= 1e-4;
  return {ok, fmt("precision=%.4f recall=%.4f F1=%.4f FPR=%.4f", m.precision, m.recall, m.f1, m.fpr)};
}

Outcome horizon_scaling() {
  const double h = near_critical_horizon(0.01, 1.0, 1e-5);
  const double ratio = horizon_bound({0.99}).value / horizon_bound({0.98}).value;
  const bool ok = std::abs(h - 1151.3) <= 0.1 && ratio >= 1.9 && ratio <= 2.1;
  return {ok, fmt("H(eta=0.01)=%.3f ratio(0.99/0.98)=%.4f", h, ratio)};
}

Outcome lipschitz() {
  const double la = lipschitz_certificate(1.0, 10.0);
  const double dmin = min_delta_perturbation(0.01, la);
  std::size_t violations = 0, pairs = 0;
  for (std::size_t l = 0; l < model().config.n_layers; ++l) {
    const auto c = verify_lipschitz(model(), l, 1000, 100 + l);
    violations += c.violations;
    pairs += c.pairs;
  }
  const auto unit = verify_lipschitz(std::vector<double>{-1.0}, 1e-3, 10.0, 1000, 7);
  violations += unit.violations;
  pairs += unit.pairs;
  const bool ok = la >= 22026 && la <= 22027 && dmin >= 4.5e-7 && dmin <= 4.6e-7 && violations == 0;
  return {ok, fmt("L_A=%.3f min|dDelta|=%.4e violations=%zu/%zu pairs", la, dmin, violations, pairs)};
}

Outcome compounding_contraction() {
  const double r = retention_probe(model(), 0.3, 10);
  return {r <= 5.905e-6 + 1e-9, fmt("retention(rho=0.3, d=10)=%.6e (0.3^10=%.6e)", r, std::pow(0.3, 10))};
}

Outcome clamp_exactness() {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> entry(-1.0, 1.0), target(0.01, 1.0), delta(1e-3, 10.0);
  std::uniform_int_distribution<std::size_t> layer(0, model().config.n_layers - 1);
  double worst = 0;
  std::size_t non_idempotent = 0;
  for (int i = 0; i < 1000; ++i) {
    // Half model operators at random Delta, half arbitrary signed diagonals.
    DiscretizedOperator op;
    if (i % 2 == 0) {
      op = discretize(model(), layer(rng), delta(rng));
    } else {
      std::vector<double> d(16);
      for (auto& x : d) x = entry(rng);
      op = {linalg::Matrix::diagonal(d), std::vector<double>(16, 1.0), 1.0, max_abs(d)};
    }
    const double r = target(rng);
    const auto once = clamp_operator(op, r);
    const double want = std::min(max_abs(op.abar.values()), r);
    worst = std::max(worst, std::abs(max_abs(once.abar.values()) - want));
    const auto twice = clamp_operator(once, r);
    if (!std::equal(once.abar.values().begin(), once.abar.values().end(), twice.abar.values().begin()))
      ++non_idempotent;
  }
  return {worst <= 1e-12 && non_idempotent == 0,
          fmt("max |rho(clamp) - min(rho, r)|=%.2e, non-idempotent=%zu/1000", worst, non_idempotent)};
}

Outcome gramian_oracle() {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> a_dist(-0.99, 0.99), b_dist(-3.0, 3.0);
  double scalar_err = 0;
  for (int i = 0; i < 100; ++i) {
    const double a = a_dist(rng), b = b_dist(rng);
    const auto w = linalg::solve_discrete_lyapunov(linalg::Matrix::dense(1, 1, {a}), linalg::Matrix::dense(1, 1, {b}));
    scalar_err = std::max(scalar_err, std::abs(w(0, 0) - b * b / (1 - a * a)));
  }
  double series_err = 0;
  for (int c = 0; c < 5; ++c) {
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = a_dist(rng);
    for (auto& x : b) x = b_dist(rng);
    const auto w = linalg::solve_discrete_lyapunov(linalg::Matrix::diagonal(a), linalg::Matrix::dense(16, 1, b));
    // Series oracle: W_ij = sum_k (a_i a_j)^k b_i b_j, 10^4 terms.
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) {
        double s = 0, p = 1;
        for (int k = 0; k < 10000; ++k) {
          s += p;
          p *= a[i] * a[j];
        }
        series_err = std::max(series_err, std::abs(w(i, j) - s * b[i] * b[j]));
      }
  }
  return {scalar_err <= 1e-10 && series_err <= 1e-8,
          fmt("scalar max err=%.2e (100 cases), 16-dim series max err=%.2e", scalar_err, series_err)};
}

Outcome horizon_ceiling() {
  const std::vector<double> levels{0.3, 0.7, 0.85, 0.9, 0.95, 0.99};
  const std::vector<std::size_t> dists{10, 50, 100, 200, 500, 1000};
  const auto g = phase_transition_grid(model(), levels, dists, 1e-5);
  std::size_t exceed = 0;
  std::string horizons;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double bound = horizon_bound({levels[i]}).value;
    if (static_cast<double>(g.empirical_horizon[i]) > bound) ++exceed;
    horizons += fmt("%s%zu<=%.0f", i ? " " : "", g.empirical_horizon[i], bound);
  }
  const bool mono = g.monotone();
  return {exceed == 0 && mono, fmt("monotone=%s, horizon vs bound: %s", mono ? "yes" : "no", horizons.c_str())};
}

Outcome monitor_completeness() {
  const auto& m = model();
  GuardConfig cfg;
  std::mt19937_64 rng(97);
  std::uniform_int_distribution<std::size_t> when(5, 58), which(0, m.config.n_layers - 1);
  std::uniform_real_distribution<double> depth(0.01, cfg.rho_min - 0.01);
  std::size_t detected = 0, exact_trigger = 0;
  for (int i = 0; i < 100; ++i) {
    const auto tokens = uniform_tokens(64, m.config.vocab_size, 1000 + i);
    const std::size_t t_inj = when(rng), l_inj = which(rng);
    const double target = depth(rng);
    const OperatorHook hook = [=](std::size_t t, std::size_t l, DiscretizedOperator& op) {
      if (t == t_inj && l == l_inj) op = clamp_operator(op, target);
    };
    const auto g = guarded_generate(m, tokens, cfg, hook);
    if (g.verdict.blocked()) ++detected;
    if (g.verdict.trigger_token == t_inj) ++exact_trigger;
  }
  std::size_t false_pos = 0;
  double benign_min = INFINITY;
  for (int i = 0; i < 100; ++i) {
    const auto g = guarded_generate(m, uniform_tokens(64, m.config.vocab_size, 5000 + i), cfg);
    const auto mins = g.trace.min_rho_per_token();
    benign_min = std::min(benign_min, *std::min_element(mins.begin(), mins.end()));
    if (g.verdict.blocked()) ++false_pos;
  }
  LabeledTraceConfig data_cfg;
  data_cfg.seed = 11;
  const auto data = gen_labeled_traces(m, 100, 100, data_cfg);
  const double grid[] = {cfg.rho_min};
  const auto row = ablate_threshold(data, grid, cfg).front();
  const bool ok = detected == 100 && exact_trigger == 100 && false_pos == 0 && benign_min >= cfg.rho_min + 1e-6 &&
                  row.f1 == 1.0 && row.fpr == 0.0;
  return {ok, fmt("detected=%zu/100 trigger@injection=%zu/100 benign FPR=%zu/100 (min rho %.3f), "
                  "ablation rho_min=0.30 F1=%.2f FPR=%.2f",
                  detected, exact_trigger, false_pos, benign_min, row.f1, row.fpr)};
}

Outcome attack_effectiveness() {
  const auto& m = model();
  const auto prompts = gen_benign_prompts(20, 20, m.config.vocab_size, 1.1, 2718);
  std::size_t decreased = 0;
  double mean_drop = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    AttackConfig cfg;
    cfg.seed = i;
    const auto r = pgd_attack(m, prompts[i], cfg);
    if (r.rho_mean_after < r.rho_mean_before) ++decreased;
    mean_drop += r.delta_rho_mean / 20.0;
  }

  // Gradient vs central differences on 50 random embedding coordinates.
  auto e = embed_tokens(m, prompts[0]);
  const auto grad = attack_objective(m, e, nullptr, 0.0, true).gradient;
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> pt(0, e.size() - 1), pj(0, m.config.d_model - 1);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t t = pt(rng), j = pj(rng);
    const double keep = e[t][j], h = 1e-5;
    e[t][j] = keep + h;
    const double up = spectral_loss(m, e);
    e[t][j] = keep - h;
    const double down = spectral_loss(m, e);
    e[t][j] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(grad[t][j] - fd) / std::max(std::abs(fd), 1e-8));
  }
  return {decreased >= 18 && worst < 1e-4,
          fmt("rho_mean decreased on %zu/20 prompts (mean drop %.4f), max grad rel err=%.2e", decreased, mean_drop,
              worst)};
}

Outcome pareto_structure() {
  const auto& m = model();
  const auto prompts = gen_benign_prompts(20, 20, m.config.vocab_size, 1.1, 1618);
  const std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  AttackConfig cfg;
  cfg.mode = AttackMode::joint_loss;
  const auto joint = pareto_sweep(m, prompts, lambdas, cfg, 4);
  cfg.mode = AttackMode::random_baseline;
  const auto random = pareto_sweep(m, prompts, lambdas, cfg, 4);
  std::size_t stealthy_damaging = 0;
  double max_joint = 0, max_random = 0, min_auc = 1;
  for (const auto& r : joint) {
    if (r.lexical_auc <= 0.60 && r.delta_rho_mean > 0.10) ++stealthy_damaging;
    max_joint = std::max(max_joint, r.delta_rho_mean);
    min_auc = std::min(min_auc, r.lexical_auc);
  }
  bool random_ok = true;
  for (const auto& r : random) {
    random_ok &= r.delta_rho_mean < 0.05;
    max_random = std::max(max_random, r.delta_rho_mean);
  }
  return {stealthy_damaging == 0 && random_ok,
          fmt("frontier points with AUC<=0.60 and drho>0.10: %zu; max drho joint=%.4f (min AUC %.3f), "
              "random=%.4f",
              stealthy_damaging, max_joint, min_auc, max_random)};
}

Outcome detector_end_to_end() {
  const auto& m = model();
  LabeledTraceConfig cfg;
  cfg.seed = 12;
  const auto data = gen_labeled_traces(m, 250, 250, cfg);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(13);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = 150;
  std::vector<FeatureVector> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& lt = data[order[i]];
    (i < n_test ? test_x : train_x).push_back(extract_features(lt.trace));
    (i < n_test ? test_y : train_y).push_back(lt.label);
  }
  const auto model_lr = train_classifier(train_x, train_y);
  std::vector<double> scores;
  for (const auto& x : test_x) scores.push_back(classify(model_lr, x).score);
  const double auc = auc_pairwise(scores, test_y);
  return {auc > 0.95, fmt("held-out AUC=%.4f on %zu traces (trained on %zu)", auc, test_x.size(), train_x.size())};
}

}  // namespace

int main() {
  run(1, "power-method fidelity", 10, power_method_fidelity);
  run(2, "detection metric arithmetic", 1, metric_arithmetic);
  run(3, "memory-horizon scaling", 1, horizon_scaling);
  run(4, "Lipschitz certificate", 5, lipschitz);
  run(5, "compounding contraction", 1, compounding_contraction);
  run(6, "clamp exactness", 5, clamp_exactness);
  run(7, "Gramian oracle", 10, gramian_oracle);
  run(8, "horizon ceiling", 60, horizon_ceiling);
  run(9, "monitor completeness and soundness", 30, monitor_completeness);
  run(10, "attack effectiveness", 300, attack_effectiveness);
  run(11, "stealth-damage structure", 600, pareto_structure);
  run(12, "detector end-to-end", 120, detector_end_to_end);
  std::printf("%d/12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
