#include "spectral/guard.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace spectral {

void GuardConfig::validate() const {
  if (!(rho_min > 0.0 && rho_min < 1.0)) throw std::invalid_argument("GuardConfig: rho_min must be in (0, 1)");
  if (window == 0) throw std::invalid_argument("GuardConfig: window must be >= 1");
  if (power_iters == 0) throw std::invalid_argument("GuardConfig: power_iters must be >= 1");
}

RhoWindow::RhoWindow(std::size_t capacity) : buf_(capacity, 0.0) {
  if (capacity == 0) throw std::invalid_argument("RhoWindow: capacity must be >= 1");
}

void RhoWindow::push(double rho) {
  buf_[head_] = rho;
  head_ = (head_ + 1) % buf_.size();
  size_ = std::min(size_ + 1, buf_.size());
}

double RhoWindow::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size_; ++i) m = std::min(m, buf_[i]);
  return m;
}

GuardVerdict monitor_step(RhoWindow& window, double rho, const GuardConfig& config, std::size_t t) {
  window.push(rho);
  GuardVerdict v;
  v.window_min_rho = window.min();
  if (v.window_min_rho < config.rho_min) {
    v.decision = Decision::block;
    v.trigger_token = t;
  }
  return v;
}

std::vector<GuardVerdict> monitor_trace(const SpectralTrace& trace, const GuardConfig& config) {
  config.validate();
  RhoWindow window(config.window);
  std::vector<GuardVerdict> out;
  const auto mins = trace.min_rho_per_token();
  out.reserve(mins.size());
  for (std::size_t t = 0; t < mins.size(); ++t) out.push_back(monitor_step(window, mins[t], config, t));
  return out;
}

GuardVerdict first_block(const SpectralTrace& trace, const GuardConfig& config) {
  GuardVerdict overall;
  for (const auto& v : monitor_trace(trace, config)) {
    if (v.blocked()) return v;
    overall.window_min_rho = std::min(overall.window_min_rho, v.window_min_rho);
  }
  return overall;
}

GuardedOutput guarded_generate(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                               const GuardConfig& config, const OperatorHook& hook) {
  config.validate();
  const auto& cfg = ssm.config;
  const std::size_t L = cfg.n_layers, N = cfg.d_state, D = cfg.d_model, V = cfg.vocab_size;
  for (TokenId tok : tokens)
    if (tok >= V) throw std::out_of_range("guarded_generate: token id " + std::to_string(tok) + " out of range");

  GuardedOutput out;
  out.trace.n_layers = L;
  RhoWindow window(config.window);
  std::vector<std::vector<double>> states(L, std::vector<double>(N, 0.0));

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto row = ssm.embedding_row(tokens[t]);
    std::vector<double> stream(row.begin(), row.end());
    std::vector<std::vector<double>> next(L);
    double min_rho = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
      DiscretizedOperator op = discretize(ssm, l, compute_delta(ssm, l, stream));
      if (hook) hook(t, l, op);
      const auto est = linalg::power_method(op.abar, config.power_iters, probe_seed(l));
      min_rho = std::min(min_rho, est.rho_hat);

      next[l] = apply_operator(op, states[l], input_scalar(ssm, l, stream));
      const auto c = ssm.layer_slice(ssm.c, l, N);
      double y = 0.0;
      for (std::size_t i = 0; i < N; ++i) y += c[i] * next[l][i];
      const auto w_out = ssm.layer_slice(ssm.w_out, l, D);
      for (std::size_t j = 0; j < D; ++j) stream[j] += y * w_out[j];

      TraceRecord rec;
      rec.t = t;
      rec.layer = l;
      rec.delta = op.delta;
      rec.rho_hat = est.rho_hat;
      rec.rho_exact = linalg::eig_radius_exact(op.abar).rho_hat;
      rec.spectral_gap = linalg::spectral_gap(op.abar);
      rec.h_norm_before = linalg::vector_norm(states[l]);
      rec.h_norm_after = linalg::vector_norm(next[l]);
      out.trace.append(rec);
    }
    out.trace.length = t + 1;
    out.verdict = monitor_step(window, min_rho, config, t);
    if (out.verdict.blocked()) return out;

    states = std::move(next);
    std::vector<double> logits(V, 0.0);
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t v = 0; v < V; ++v) logits[v] += stream[j] * ssm.output_projection[j * V + v];
    out.outputs.push_back(std::move(logits));
  }
  return out;
}

// --- classifier ----------------------------------------------------------------

namespace {

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double log1p_exp(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace

LogisticModel train_classifier(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                               const TrainOptions& options, std::vector<double>* loss_history) {
  if (features.empty()) throw std::invalid_argument("train_classifier: no samples");
  if (features.size() != labels.size()) throw std::invalid_argument("train_classifier: features/labels length mismatch");
  if (!(options.learning_rate > 0.0) || !(options.l2 >= 0.0)) throw std::invalid_argument("train_classifier: bad options");
  const std::size_t n = features.size(), dim = features[0].dimension();
  if (dim == 0) throw std::invalid_argument("train_classifier: empty feature vectors");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].dimension() != dim) {
      throw std::invalid_argument("train_classifier: sample " + std::to_string(i) + " has dimension " +
                                  std::to_string(features[i].dimension()) + ", expected " + std::to_string(dim));
    }
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("train_classifier: labels must be 0 or 1");
    positives += static_cast<std::size_t>(labels[i]);
  }
  if (positives == 0 || positives == n) throw std::invalid_argument("train_classifier: single-class data");

  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (const auto& f : features)
    for (std::size_t j = 0; j < dim; ++j) mu[j] += f.values[j];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (const auto& f : features)
    for (std::size_t j = 0; j < dim; ++j) sd[j] += (f.values[j] - mu[j]) * (f.values[j] - mu[j]);
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) z[i][j] = (features[i].values[j] - mu[j]) / sd[j];

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  std::vector<double> w(dim);
  for (auto& x : w) x = normal(rng);
  double b = 0.0;

  auto loss = [&](const std::vector<double>& ww, double bb) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = bb;
      for (std::size_t j = 0; j < dim; ++j) s += ww[j] * z[i][j];
      total += log1p_exp(s) - labels[i] * s;
    }
    double reg = 0.0;
    for (double x : ww) reg += x * x;
    return total / static_cast<double>(n) + options.l2 * reg;
  };

  double lr = options.learning_rate;
  double current = loss(w, b);
  std::vector<double> gw(dim), trial(dim);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t j = 0; j < dim; ++j) s += w[j] * z[i][j];
      const double r = sigmoid(s) - labels[i];
      gb += r;
      for (std::size_t j = 0; j < dim; ++j) gw[j] += r * z[i][j];
    }
    gb /= static_cast<double>(n);
    for (std::size_t j = 0; j < dim; ++j) gw[j] = gw[j] / static_cast<double>(n) + 2.0 * options.l2 * w[j];

    // Halve the step until the loss does not increase.
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t j = 0; j < dim; ++j) trial[j] = w[j] - lr * gw[j];
      const double trial_b = b - lr * gb;
      const double next = loss(trial, trial_b);
      if (next <= current) {
        w = trial;
        b = trial_b;
        current = next;
        break;
      }
      lr *= 0.5;
    }
    if (loss_history) loss_history->push_back(current);
  }

  LogisticModel model;
  model.weights.resize(dim);
  model.bias = b;
  for (std::size_t j = 0; j < dim; ++j) {
    model.weights[j] = w[j] / sd[j];
    model.bias -= w[j] * mu[j] / sd[j];
  }
  model.layout = features[0].layout();
  return model;
}

Classification classify(const LogisticModel& model, std::span<const double> features) {
  if (features.size() != model.weights.size()) {
    throw std::invalid_argument("classify: feature dimension " + std::to_string(features.size()) +
                                " != model dimension " + std::to_string(model.weights.size()));
  }
  double s = model.bias;
  for (std::size_t j = 0; j < features.size(); ++j) s += model.weights[j] * features[j];
  const double score = sigmoid(s);
  return {score, score > model.tau};
}

Classification classify(const LogisticModel& model, const FeatureVector& features) {
  return classify(model, std::span<const double>(features.values));
}

// --- metrics -------------------------------------------------------------------

DetectionMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  DetectionMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const auto d = [](std::size_t x) { return static_cast<double>(x); };
  if (tp + fp > 0) {
    m.precision = d(tp) / d(tp + fp);
  } else {
    m.precision = 1.0;
    m.precision_undefined = true;
  }
  m.recall = tp + fn > 0 ? d(tp) / d(tp + fn) : 1.0;
  m.fpr = fp + tn > 0 ? d(fp) / d(fp + tn) : 0.0;
  m.f1 = 2 * tp + fp + fn > 0 ? 2.0 * d(tp) / d(2 * tp + fp + fn) : 1.0;
  m.auc_undefined = true;
  return m;
}

double auc_pairwise(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores/labels length mismatch");
  double credit = 0.0;
  std::size_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw std::domain_error("auc: undefined for single-class labels");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / (static_cast<double>(pos) * static_cast<double>(neg));
}

DetectionMetrics compute_metrics(std::span<const double> scores, std::span<const int> labels, double tau) {
  if (scores.empty()) throw std::invalid_argument("compute_metrics: empty input");
  if (scores.size() != labels.size()) throw std::invalid_argument("compute_metrics: scores/labels length mismatch");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("compute_metrics: labels must be 0 or 1");
    const bool predicted = scores[i] > tau;
    if (labels[i] == 1) (predicted ? tp : fn) += 1;
    else (predicted ? fp : tn) += 1;
  }
  auto m = metrics_from_counts(tp, fp, tn, fn);
  if (tp + fn > 0 && fp + tn > 0) {
    m.auc = auc_pairwise(scores, labels);
    m.auc_undefined = false;
  }
  return m;
}

std::vector<AblationRow> ablate_threshold(const std::vector<LabeledTrace>& traces, std::span<const double> rho_grid,
                                          const GuardConfig& config) {
  std::vector<AblationRow> rows;
  for (double r : rho_grid) {
    GuardConfig cfg = config;
    cfg.rho_min = r;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& lt : traces) {
      const bool flagged = first_block(lt.trace, cfg).blocked();
      if (lt.label == 1) (flagged ? tp : fn) += 1;
      else (flagged ? fp : tn) += 1;
    }
    const auto m = metrics_from_counts(tp, fp, tn, fn);
    rows.push_back({r, m.precision, m.recall, m.f1, m.fpr});
  }
  return rows;
}

}  // namespace spectral
