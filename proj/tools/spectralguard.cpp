// spectralguard: command-line driver for the spectral safety toolkit.
//
// Every subcommand reads the model config (or serialized weights), writes
// machine-readable artifacts into --out, prints a one-line summary and, with
// --check, turns its acceptance assertions into the exit status.
//
// Exit codes: 0 success, 1 usage / input error, 2 failed assertion.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spectral/analysis.hpp"
#include "spectral/attack.hpp"
#include "spectral/experiments.hpp"
#include "spectral/guard.hpp"
#include "spectral/linalg.hpp"
#include "spectral/serialize.hpp"
#include "spectral/ssm.hpp"
#include "spectral/version.hpp"

namespace fs = std::filesystem;
using namespace spectral;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAssertion = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::string model_path;
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  bool check = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Schema errors are reported as "<file>: <field>: <problem>".
template <class F>
auto parse_file(const std::string& path, F&& parse) {
  const std::string text = read_file(path);
  try {
    return parse(text);
  } catch (const io::SchemaError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

class Context {
 public:
  explicit Context(const Globals& g) : g_(g) {
    if (!g.model_path.empty()) {
      model_ = parse_file(g.model_path, io::model_from_json);
    } else {
      SelectiveSsmConfig cfg;
      if (!g.config_path.empty()) cfg = parse_file(g.config_path, io::config_from_json);
      cfg.seed = g.seed;
      model_ = init_ssm(cfg);
    }
  }

  const SelectiveSsm& model() const { return model_; }
  std::uint64_t seed() const { return g_.seed; }
  bool check() const { return g_.check; }

  io::OutputMeta meta(const std::string& command, const std::string& params) const {
    return io::make_meta(g_.seed, io::config_to_json(model_.config) + "|" + command + "|" + params);
  }

  std::string write(const std::string& name, const std::string& body) const {
    fs::create_directories(g_.out_dir);
    const fs::path path = fs::path(g_.out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write output file '" + path.string() + "'");
    out << body;
    return path.string();
  }

 private:
  Globals g_;
  SelectiveSsm model_;
};

// Collects --check assertions; failures are printed and mapped to exit code 2.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      std::cerr << "check failed: " << what << "\n";
      failed_ = true;
    }
  }
  int status(bool enabled) const { return enabled && failed_ ? kExitAssertion : kExitOk; }

 private:
  bool failed_ = false;
};

std::string fmt(double x) { return io::format_double(x); }

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += fmt(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
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
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 1.0;
}

// --- validate-spectral --------------------------------------------------------

struct ValidateArgs {
  std::size_t n_matrices = 1000;
  std::size_t k = 3;
};

int cmd_validate_spectral(const Context& ctx, const ValidateArgs& a) {
  if (a.n_matrices == 0) throw UsageError("--n-matrices must be >= 1");
  if (a.k == 0) throw UsageError("--k must be >= 1");
  const auto& m = ctx.model();
  std::vector<double> exact, approx;
  std::uint64_t stream = 0;
  while (exact.size() < a.n_matrices) {
    const auto tokens = uniform_tokens(64, m.config.vocab_size, ctx.seed() * 7919 + stream++);
    RunOptions opts;
    opts.probe = true;
    opts.power_iters = a.k;
    for (const auto& r : run_sequence(m, tokens, opts).trace.records) {
      if (exact.size() == a.n_matrices) break;
      exact.push_back(*r.rho_exact);
      approx.push_back(r.rho_hat);
    }
  }
  double mae = 0.0;
  std::string csv = io::meta_csv_line(ctx.meta("validate-spectral", join(std::vector<std::size_t>{a.n_matrices, a.k}))) +
                    "rho_exact,rho_hat\n";
  for (std::size_t i = 0; i < exact.size(); ++i) {
    mae += std::abs(exact[i] - approx[i]);
    csv += fmt(exact[i]) + "," + fmt(approx[i]) + "\n";
  }
  mae /= static_cast<double>(exact.size());
  const double r = pearson(exact, approx);
  const auto path = ctx.write("validate_spectral.csv", csv);
  std::cout << "validate-spectral: n=" << exact.size() << " k=" << a.k << " MAE=" << fmt(mae) << " r=" << fmt(r)
            << " -> " << path << "\n";
  Checks checks;
  checks.expect(r > 0.999999 || !ctx.check(), "Pearson r > 0.999999");
  if (mae >= 1e-5) {
    std::cerr << "MAE " << fmt(mae) << " >= 1e-5\n";
    return kExitAssertion;
  }
  return checks.status(ctx.check());
}

// --- horizon -------------------------------------------------------------------

struct HorizonArgs {
  std::vector<double> rho{0.99, 0.98};
  double kappa = 1.0;
  double h0 = 1.0;
  double epsilon = 1e-5;
  double lambda_max = 1.0;
};

int cmd_horizon(const Context& ctx, const HorizonArgs& a) {
  if (a.rho.empty()) throw UsageError("--rho grid is empty");
  for (double rho : a.rho)
    if (!(rho > 0.0)) throw UsageError("--rho entries must be positive");
  std::string csv = io::meta_csv_line(ctx.meta("horizon", join(a.rho) + ";" + fmt(a.kappa) + ";" + fmt(a.h0) + ";" +
                                                               fmt(a.epsilon) + ";" + fmt(a.lambda_max))) +
                    "rho,h_eff,status\n";
  std::vector<std::pair<double, double>> values;
  for (double rho : a.rho) {
    try {
      const auto b = horizon_bound({rho, a.kappa, a.h0, a.epsilon, a.lambda_max});
      csv += fmt(rho) + "," + fmt(b.value) + "," + (b.vacuous ? "vacuous" : "ok") + "\n";
      values.emplace_back(rho, b.value);
    } catch (const std::domain_error&) {
      csv += fmt(rho) + ",,bound undefined\n";
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("invalid horizon input: ") + e.what());
    }
  }
  const auto path = ctx.write("horizon.csv", csv);
  std::cout << "horizon: " << a.rho.size() << " rows -> " << path << "\n";

  Checks checks;
  auto find = [&](double rho) -> const double* {
    for (const auto& [r, h] : values)
      if (std::abs(r - rho) < 1e-12) return &h;
    return nullptr;
  };
  if (const double *h99 = find(0.99), *h98 = find(0.98); h99 && h98) {
    const double ratio = *h99 / *h98;
    std::cout << "horizon: h_eff(0.99)/h_eff(0.98) = " << fmt(ratio) << "\n";
    checks.expect(ratio >= 1.9 && ratio <= 2.1, "h_eff ratio 0.99/0.98 in [1.9, 2.1]");
  }
  return checks.status(ctx.check());
}

// --- attack / pareto ------------------------------------------------------------

struct AttackArgs {
  std::vector<TokenId> prompt;
  std::size_t prompt_len = 20;
  double alpha = 0.01;
  std::size_t steps = 50;
  double lambda = 0.0;
  std::string mode = "spectral_only";
};

AttackConfig to_config(const AttackArgs& a, std::uint64_t seed) {
  AttackConfig c;
  c.alpha = a.alpha;
  c.steps = a.steps;
  c.lambda = a.lambda;
  c.seed = seed;
  try {
    c.mode = io::attack_mode_from_name(a.mode);
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

int cmd_attack(const Context& ctx, const AttackArgs& a) {
  const auto& m = ctx.model();
  const auto config = to_config(a, ctx.seed());
  auto prompt = a.prompt;
  if (prompt.empty()) {
    if (a.prompt_len == 0) throw UsageError("--prompt-len must be >= 1");
    prompt = uniform_tokens(a.prompt_len, m.config.vocab_size, ctx.seed());
  }
  for (TokenId t : prompt)
    if (t >= m.config.vocab_size) throw UsageError("--prompt: token id " + std::to_string(t) + " out of range");
  const auto result = pgd_attack(m, prompt, config);
  const auto meta = ctx.meta("attack", join(prompt) + ";" + fmt(a.alpha) + ";" + std::to_string(a.steps) + ";" +
                                           fmt(a.lambda) + ";" + a.mode);
  const auto path = ctx.write("attack.json", io::attack_result_to_json(result, prompt, config, meta));
  std::cout << "attack: mode=" << a.mode << " rho_mean " << fmt(result.rho_mean_before) << " -> "
            << fmt(result.rho_mean_after) << " (delta " << fmt(result.delta_rho_mean) << "), kl "
            << fmt(result.kl_to_benign) << ", " << result.tokens_changed << " tokens changed -> " << path << "\n";
  Checks checks;
  if (config.mode == AttackMode::spectral_only && config.steps > 0)
    checks.expect(result.rho_mean_after < result.rho_mean_before, "attack strictly lowers mean rho");
  return checks.status(ctx.check());
}

struct ParetoArgs {
  AttackArgs attack;
  std::size_t n_prompts = 20;
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  double zipf = 1.1;
  std::size_t threads = 4;
};

int cmd_pareto(const Context& ctx, const ParetoArgs& a) {
  if (a.lambdas.empty()) throw UsageError("--lambdas is empty");
  if (a.n_prompts == 0 || a.attack.prompt_len == 0) throw UsageError("--prompts and --prompt-len must be >= 1");
  const auto& m = ctx.model();
  auto config = to_config(a.attack, ctx.seed());
  if (config.mode == AttackMode::spectral_only) config.mode = AttackMode::joint_loss;
  const auto prompts = gen_benign_prompts(a.n_prompts, a.attack.prompt_len, m.config.vocab_size, a.zipf, ctx.seed());
  const auto rows = pareto_sweep(m, prompts, a.lambdas, config, a.threads);
  const auto meta = ctx.meta("pareto", join(a.lambdas) + ";" + std::to_string(a.n_prompts) + ";" +
                                           std::to_string(a.attack.prompt_len) + ";" + fmt(a.zipf) + ";" +
                                           io::attack_mode_name(config.mode) + ";" + std::to_string(a.attack.steps));
  const auto path = ctx.write("pareto.csv", io::pareto_to_csv(rows, meta));
  ctx.write("pareto_summary.json", io::pareto_summary_json(rows, config.mode, meta));
  Checks checks;
  for (const auto& r : rows) {
    checks.expect(!(r.lexical_auc <= 0.60 && r.delta_rho_mean > 0.10),
                  "frontier point lambda=" + fmt(r.lambda) + " has AUC <= 0.60 and drho > 0.10");
    if (config.mode == AttackMode::random_baseline)
      checks.expect(r.delta_rho_mean < 0.05, "random baseline drho < 0.05 at lambda=" + fmt(r.lambda));
  }
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.delta_rho_mean);
  std::cout << "pareto: " << rows.size() << " rows, mode=" << io::attack_mode_name(config.mode)
            << ", max delta_rho_mean " << fmt(worst) << " -> " << path << "\n";
  return checks.status(ctx.check());
}

// --- clamp / phase ---------------------------------------------------------------

struct ClampArgs {
  std::string mode = "all";
  std::size_t layer = 0;
  double rho_target = 0.2;
  std::size_t n_tokens = 64;
};

int cmd_clamp(const Context& ctx, const ClampArgs& a) {
  const auto& m = ctx.model();
  ClampProtocol protocol;
  if (a.mode == "all") protocol.mode = ClampMode::all_layer;
  else if (a.mode == "single") {
    protocol.mode = ClampMode::single_layer;
    protocol.layer = a.layer;
  } else throw UsageError("--mode must be 'all' or 'single'");
  protocol.rho_target = a.rho_target;
  try {
    protocol.validate(m.config.n_layers);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const auto tokens = uniform_tokens(a.n_tokens, m.config.vocab_size, ctx.seed());
  RunOptions opts;
  opts.probe = true;
  const auto clamped = run_with_clamp(m, tokens, protocol, opts);
  const auto baseline = run_sequence(m, tokens, opts);
  const auto meta = ctx.meta("clamp", a.mode + ";" + std::to_string(a.layer) + ";" + fmt(a.rho_target) + ";" +
                                          std::to_string(a.n_tokens));
  const auto path = ctx.write("clamp_trace.jsonl", io::trace_to_jsonl(clamped.trace, meta));
  ctx.write("baseline_trace.jsonl", io::trace_to_jsonl(baseline.trace, meta));

  // Layers below a single clamped layer never see its output, so their
  // records must be bit-identical to the unclamped run.
  bool over_target = false, upstream_changed = false;
  for (std::size_t i = 0; i < clamped.trace.records.size(); ++i) {
    const auto& r = clamped.trace.records[i];
    if (protocol.targets(r.layer)) over_target |= *r.rho_exact > a.rho_target;
    else if (protocol.layer && r.layer < *protocol.layer)
      upstream_changed |= r.rho_hat != baseline.trace.records[i].rho_hat;
  }
  Checks checks;
  checks.expect(!over_target, "every clamped operator has rho <= rho_target");
  checks.expect(!upstream_changed, "layers upstream of the clamped layer are unchanged");
  std::cout << "clamp: mode=" << a.mode << " target=" << fmt(a.rho_target) << " mean rho "
            << fmt(baseline.trace.mean_rho_hat()) << " -> " << fmt(clamped.trace.mean_rho_hat()) << " -> " << path
            << "\n";
  return checks.status(ctx.check());
}

struct PhaseArgs {
  std::vector<double> rho_levels{0.3, 0.7, 0.85, 0.9, 0.95, 0.99};
  std::vector<std::size_t> distances{10, 50, 100, 200, 500, 1000};
  double epsilon = 1e-5;
};

int cmd_phase(const Context& ctx, const PhaseArgs& a) {
  if (a.rho_levels.empty() || a.distances.empty()) throw UsageError("--rho-levels and --distances must be non-empty");
  for (double r : a.rho_levels)
    if (!(r > 0.0 && r < 1.0)) throw UsageError("--rho-levels entries must be in (0, 1)");
  const auto& m = ctx.model();
  const auto grid = phase_transition_grid(m, a.rho_levels, a.distances, a.epsilon, ctx.seed());
  const auto meta = ctx.meta("phase", join(a.rho_levels) + ";" + join(a.distances) + ";" + fmt(a.epsilon));
  const auto path = ctx.write("phase_grid.csv", io::grid_to_csv(grid, meta));

  Checks checks;
  checks.expect(grid.monotone(), "phase boundary is monotone");
  std::size_t recoverable = 0;
  for (std::size_t i = 0; i < a.rho_levels.size(); ++i) {
    const double bound = horizon_bound({a.rho_levels[i], 1.0, 1.0, a.epsilon, 1.0}).value;
    checks.expect(static_cast<double>(grid.empirical_horizon[i]) <= bound,
                  "empirical horizon exceeds bound at rho=" + fmt(a.rho_levels[i]));
    for (std::size_t j = 0; j < a.distances.size(); ++j) recoverable += grid.recoverable_at(i, j);
  }
  std::cout << "phase: " << a.rho_levels.size() << "x" << a.distances.size() << " grid, " << recoverable
            << " recoverable cells, monotone=" << (grid.monotone() ? "yes" : "no") << " -> " << path << "\n";
  return checks.status(ctx.check());
}

// --- gen-data / train-guard / eval-guard / monitor --------------------------------

struct GenArgs {
  std::size_t n_benign = 250;
  std::size_t n_adversarial = 250;
  std::size_t length = 64;
  std::string source = "clamp";
  std::size_t recall = 0;
  std::size_t recall_distance = 10;
};

int cmd_gen_data(const Context& ctx, const GenArgs& a) {
  const auto& m = ctx.model();
  LabeledTraceConfig cfg;
  cfg.length = a.length;
  cfg.seed = ctx.seed();
  if (a.source == "clamp") cfg.source = AdversarialSource::clamp;
  else if (a.source == "pgd") cfg.source = AdversarialSource::pgd;
  else throw UsageError("--source must be 'clamp' or 'pgd'");
  if (a.n_benign + a.n_adversarial == 0) throw UsageError("--benign + --adversarial must be >= 1");
  if (a.length < 4) throw UsageError("--length must be >= 4");
  const auto traces = gen_labeled_traces(m, a.n_benign, a.n_adversarial, cfg);
  const auto meta = ctx.meta("gen-data", std::to_string(a.n_benign) + ";" + std::to_string(a.n_adversarial) + ";" +
                                             std::to_string(a.length) + ";" + a.source);
  const auto path = ctx.write("labeled_traces.jsonl", io::labeled_traces_to_jsonl(traces, meta));
  std::cout << "gen-data: " << traces.size() << " labeled traces (" << a.n_benign << " benign, " << a.n_adversarial
            << " adversarial/" << a.source << ") -> " << path << "\n";

  if (a.recall > 0) {
    RecallConfig rc;
    rc.distance = a.recall_distance;
    rc.seed = ctx.seed();
    const auto tasks = gen_recall_dataset(a.recall, rc, m.config.vocab_size);
    std::string body = io::meta_csv_line(meta) + "prompt,query_key,answer\n";
    for (const auto& t : tasks) {
      std::string p;
      for (std::size_t i = 0; i < t.prompt.size(); ++i) p += (i ? " " : "") + std::to_string(t.prompt[i]);
      body += p + "," + std::to_string(t.query_key) + "," + std::to_string(t.answer) + "\n";
    }
    std::cout << "gen-data: " << tasks.size() << " recall tasks -> " << ctx.write("recall.csv", body) << "\n";
  }

  Checks checks;
  GuardConfig guard;
  for (const auto& lt : traces)
    if (lt.label == 0) checks.expect(!first_block(lt.trace, guard).blocked(), "benign trace blocked by default guard");
  return checks.status(ctx.check());
}

struct TrainArgs {
  std::string data;
  std::size_t epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  double tau = 0.5;
  double holdout = 0.3;
  bool gaps = false;
};

std::vector<FeatureVector> features_of(const std::vector<LabeledTrace>& traces, bool gaps) {
  std::vector<FeatureVector> out;
  for (const auto& lt : traces) out.push_back(extract_features(lt.trace, gaps));
  return out;
}

int cmd_train_guard(const Context& ctx, const TrainArgs& a) {
  if (a.data.empty()) throw UsageError("--data is required");
  if (!(a.holdout >= 0.0 && a.holdout < 1.0)) throw UsageError("--holdout must be in [0, 1)");
  auto traces = parse_file(a.data, io::labeled_traces_from_jsonl);
  if (traces.empty()) throw UsageError(a.data + ": no labeled traces");

  std::vector<std::size_t> order(traces.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(ctx.seed());
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::floor(a.holdout * static_cast<double>(traces.size())));
  std::vector<FeatureVector> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& lt = traces[order[i]];
    auto f = extract_features(lt.trace, a.gaps);
    if (i < n_test) {
      test_x.push_back(std::move(f));
      test_y.push_back(lt.label);
    } else {
      train_x.push_back(std::move(f));
      train_y.push_back(lt.label);
    }
  }
  TrainOptions opts{a.epochs, a.learning_rate, a.l2, ctx.seed()};
  LogisticModel model;
  try {
    model = train_classifier(train_x, train_y, opts);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train-guard: ") + e.what());
  }
  model.tau = a.tau;

  auto evaluate = [&](const std::vector<FeatureVector>& xs, const std::vector<int>& ys) {
    std::vector<double> scores;
    for (const auto& x : xs) scores.push_back(classify(model, x).score);
    return compute_metrics(scores, ys, a.tau);
  };
  std::vector<std::pair<std::string, DetectionMetrics>> rows{{"train", evaluate(train_x, train_y)}};
  if (!test_x.empty()) rows.emplace_back("holdout", evaluate(test_x, test_y));

  const auto meta = ctx.meta("train-guard", a.data + ";" + std::to_string(a.epochs) + ";" + fmt(a.learning_rate) +
                                                ";" + fmt(a.l2) + ";" + fmt(a.tau) + ";" + fmt(a.holdout) +
                                                (a.gaps ? ";gaps" : ""));
  const auto path = ctx.write("classifier.json", io::classifier_to_json(model, meta));
  ctx.write("train_metrics.csv", io::metrics_to_csv(rows, meta));
  const auto& report = rows.back().second;
  std::cout << "train-guard: " << train_x.size() << " train / " << test_x.size() << " holdout, " << rows.back().first
            << " AUC " << (report.auc_undefined ? std::string("undefined") : fmt(report.auc)) << ", F1 "
            << fmt(report.f1) << " -> " << path << "\n";
  Checks checks;
  checks.expect(!report.auc_undefined && report.auc > 0.95, rows.back().first + " AUC > 0.95");
  return checks.status(ctx.check());
}

struct EvalArgs {
  std::string counts;
  std::string data;
  std::string classifier;
  std::vector<double> rho_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
  std::size_t window = 10;
  std::size_t power_iters = 3;
  bool gaps = false;
};

int cmd_eval_guard(const Context& ctx, const EvalArgs& a) {
  if (a.counts.empty() && a.data.empty()) throw UsageError("eval-guard needs --counts or --data");
  const auto meta = ctx.meta("eval-guard", a.counts + ";" + a.data + ";" + a.classifier + ";" + join(a.rho_grid));
  std::vector<std::pair<std::string, DetectionMetrics>> rows;
  Checks checks;

  if (!a.counts.empty()) {
    const auto c = parse_file(a.counts, io::counts_from_json);
    const auto m = metrics_from_counts(c.tp, c.fp, c.tn, c.fn);
    rows.emplace_back("counts", m);
    char line[200];
    std::snprintf(line, sizeof line, "eval-guard: precision %.4f recall %.3f F1 %.3f FPR %.3f", m.precision, m.recall,
                  m.f1, m.fpr);
    std::cout << line << "\n";
  }
  if (!a.data.empty()) {
    const auto traces = parse_file(a.data, io::labeled_traces_from_jsonl);
    GuardConfig guard;
    guard.window = a.window;
    guard.power_iters = a.power_iters;
    const auto ablation = ablate_threshold(traces, a.rho_grid, guard);
    ctx.write("ablation.csv", io::ablation_to_csv(ablation, meta));
    for (const auto& row : ablation) {
      if (std::abs(row.rho_min - 0.30) < 1e-12) {
        std::cout << "eval-guard: threshold monitor rho_min=0.30 F1 " << fmt(row.f1) << " FPR " << fmt(row.fpr) << "\n";
        checks.expect(row.f1 == 1.0 && row.fpr == 0.0, "default threshold row reaches F1 1.00, FPR 0.00");
      }
    }
    if (!a.classifier.empty()) {
      const auto model = parse_file(a.classifier, io::classifier_from_json);
      std::vector<double> scores;
      std::vector<int> labels;
      for (const auto& lt : traces) {
        const auto f = extract_features(lt.trace, a.gaps || model.weights.size() == 3 * lt.trace.n_layers);
        if (f.dimension() != model.weights.size())
          throw UsageError(a.classifier + ": weights: dimension " + std::to_string(model.weights.size()) +
                           " does not match trace features (" + std::to_string(f.dimension()) + ")");
        scores.push_back(classify(model, f).score);
        labels.push_back(lt.label);
      }
      const auto m = compute_metrics(scores, labels, model.tau);
      rows.emplace_back("classifier", m);
      std::cout << "eval-guard: classifier AUC " << (m.auc_undefined ? std::string("undefined") : fmt(m.auc))
                << " F1 " << fmt(m.f1) << " FPR " << fmt(m.fpr) << "\n";
    }
  }
  ctx.write("metrics.csv", io::metrics_to_csv(rows, meta));
  return checks.status(ctx.check());
}

struct MonitorArgs {
  std::string trace;
  double rho_min = 0.30;
  std::size_t window = 10;
  std::size_t power_iters = 3;
};

int cmd_monitor(const Context& ctx, const MonitorArgs& a) {
  if (a.trace.empty()) throw UsageError("--trace is required");
  GuardConfig guard;
  guard.rho_min = a.rho_min;
  guard.window = a.window;
  guard.power_iters = a.power_iters;
  try {
    guard.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::string text = read_file(a.trace);
  // Labeled datasets carry a "label" field per line; plain traces do not.
  std::vector<std::pair<std::string, SpectralTrace>> streams;
  try {
    if (text.find("\"label\"") != std::string::npos) {
      const auto labeled = io::labeled_traces_from_jsonl(text);
      for (std::size_t i = 0; i < labeled.size(); ++i) streams.emplace_back("stream-" + std::to_string(i), labeled[i].trace);
    } else {
      streams.emplace_back(fs::path(a.trace).stem().string(), io::trace_from_jsonl(text));
    }
  } catch (const io::SchemaError& e) {
    throw UsageError(a.trace + ": " + e.what());
  }

  std::vector<io::VerdictLine> lines;
  std::size_t blocks = 0;
  for (const auto& [id, trace] : streams) {
    const auto v = first_block(trace, guard);
    io::VerdictLine line{id, v.trigger_token.value_or(trace.length), v.window_min_rho, v.decision};
    blocks += v.blocked();
    lines.push_back(line);
  }
  const auto meta = ctx.meta("monitor", a.trace + ";" + fmt(a.rho_min) + ";" + std::to_string(a.window));
  const auto path = ctx.write("verdicts.jsonl", io::verdicts_to_jsonl(lines, meta));
  std::cout << "monitor: " << streams.size() << " streams, " << blocks << " blocked -> " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectralguard: spectral-radius monitoring, attack and intervention experiments on a toy selective SSM"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "Model config JSON (fields of SelectiveSsmConfig)");
  app.add_option("--model", g.model_path, "Serialized model weights JSON (overrides --config)");
  app.add_option("--seed", g.seed, "Seed for the model and every generator")->capture_default_str();
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--check", g.check, "Exit with status 2 when an acceptance assertion fails");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate-spectral", "Power method vs exact eigen-radius on model operators");
  validate->add_option("--n-matrices", va.n_matrices)->capture_default_str();
  validate->add_option("--k", va.k, "Power iterations")->capture_default_str();

  HorizonArgs ha;
  auto* horizon = app.add_subcommand("horizon", "Memory-horizon bound over a rho grid");
  horizon->add_option("--rho", ha.rho, "Comma-separated rho values")->delimiter(',')->capture_default_str();
  horizon->add_option("--kappa", ha.kappa)->capture_default_str();
  horizon->add_option("--h0", ha.h0, "||h0||")->capture_default_str();
  horizon->add_option("--epsilon", ha.epsilon)->capture_default_str();
  horizon->add_option("--lambda-max", ha.lambda_max, "lambda_max of the Gramian")->capture_default_str();

  AttackArgs aa;
  auto add_attack_flags = [](CLI::App* cmd, AttackArgs& args) {
    cmd->add_option("--prompt-len", args.prompt_len)->capture_default_str();
    cmd->add_option("--alpha", args.alpha)->capture_default_str();
    cmd->add_option("--steps", args.steps)->capture_default_str();
    cmd->add_option("--mode", args.mode, "spectral_only | joint_loss | random_baseline")->capture_default_str();
  };
  auto* attack = app.add_subcommand("attack", "PGD spectral-collapse attack on one prompt");
  add_attack_flags(attack, aa);
  attack->add_option("--prompt", aa.prompt, "Comma-separated token ids (default: random)")->delimiter(',');
  attack->add_option("--lambda", aa.lambda, "Weight on the output-KL term")->capture_default_str();

  ParetoArgs pa;
  auto* pareto = app.add_subcommand("pareto", "Stealth-damage sweep over lambda");
  add_attack_flags(pareto, pa.attack);
  pareto->add_option("--prompts", pa.n_prompts)->capture_default_str();
  pareto->add_option("--lambdas", pa.lambdas)->delimiter(',')->capture_default_str();
  pareto->add_option("--zipf", pa.zipf, "Zipf exponent of benign prompts")->capture_default_str();
  pareto->add_option("--threads", pa.threads)->capture_default_str();

  ClampArgs ca;
  auto* clamp = app.add_subcommand("clamp", "Run with the causal spectral clamp");
  clamp->add_option("--mode", ca.mode, "all | single")->capture_default_str();
  clamp->add_option("--layer", ca.layer)->capture_default_str();
  clamp->add_option("--rho-target", ca.rho_target)->capture_default_str();
  clamp->add_option("--tokens", ca.n_tokens)->capture_default_str();

  PhaseArgs pha;
  auto* phase = app.add_subcommand("phase", "Retention phase-transition grid");
  phase->add_option("--rho-levels", pha.rho_levels)->delimiter(',')->capture_default_str();
  phase->add_option("--distances", pha.distances)->delimiter(',')->capture_default_str();
  phase->add_option("--epsilon", pha.epsilon)->capture_default_str();

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Labeled benign/adversarial traces (and optional recall tasks)");
  gen->add_option("--benign", ga.n_benign)->capture_default_str();
  gen->add_option("--adversarial", ga.n_adversarial)->capture_default_str();
  gen->add_option("--length", ga.length)->capture_default_str();
  gen->add_option("--source", ga.source, "clamp | pgd")->capture_default_str();
  gen->add_option("--recall", ga.recall, "Number of associative-recall tasks to emit")->capture_default_str();
  gen->add_option("--recall-distance", ga.recall_distance)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train-guard", "Fit the multi-layer feature classifier");
  train->add_option("--data", ta.data, "labeled_traces.jsonl")->required();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--lr", ta.learning_rate)->capture_default_str();
  train->add_option("--l2", ta.l2)->capture_default_str();
  train->add_option("--tau", ta.tau)->capture_default_str();
  train->add_option("--holdout", ta.holdout, "Held-out fraction")->capture_default_str();
  train->add_flag("--gaps", ta.gaps, "Include per-layer spectral gaps");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval-guard", "Detection metrics from counts, a classifier, or the threshold monitor");
  eval->add_option("--counts", ea.counts, "JSON with tp, fp, tn, fn");
  eval->add_option("--data", ea.data, "labeled_traces.jsonl");
  eval->add_option("--classifier", ea.classifier, "classifier.json");
  eval->add_option("--rho-grid", ea.rho_grid)->delimiter(',')->capture_default_str();
  eval->add_option("--window", ea.window)->capture_default_str();
  eval->add_flag("--gaps", ea.gaps);

  MonitorArgs ma;
  auto* monitor = app.add_subcommand("monitor", "Replay traces through the online monitor");
  monitor->add_option("--trace", ma.trace, "Trace JSONL or labeled traces JSONL")->required();
  monitor->add_option("--rho-min", ma.rho_min)->capture_default_str();
  monitor->add_option("--window", ma.window)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Context ctx(g);
    if (*validate) return cmd_validate_spectral(ctx, va);
    if (*horizon) return cmd_horizon(ctx, ha);
    if (*attack) return cmd_attack(ctx, aa);
    if (*pareto) return cmd_pareto(ctx, pa);
    if (*clamp) return cmd_clamp(ctx, ca);
    if (*phase) return cmd_phase(ctx, pha);
    if (*gen) return cmd_gen_data(ctx, ga);
    if (*train) return cmd_train_guard(ctx, ta);
    if (*eval) return cmd_eval_guard(ctx, ea);
    if (*monitor) return cmd_monitor(ctx, ma);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
