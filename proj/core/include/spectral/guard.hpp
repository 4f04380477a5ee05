#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spectral/analysis.hpp"
#include "spectral/ssm.hpp"
#include "spectral/trace.hpp"

namespace spectral {

struct GuardConfig {
  double rho_min = 0.30;
  std::size_t window = 10;
  std::size_t power_iters = 3;
  double rho_critical = 0.90;  // reported only

  void validate() const;
};

enum class Decision { pass, block };

struct GuardVerdict {
  Decision decision = Decision::pass;
  std::optional<std::size_t> trigger_token;
  double window_min_rho = std::numeric_limits<double>::infinity();

  bool blocked() const noexcept { return decision == Decision::block; }
};

// Fixed-capacity ring of the most recent rho values for one stream.
class RhoWindow {
 public:
  explicit RhoWindow(std::size_t capacity);

  void push(double rho);
  double min() const;
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return buf_.size(); }

 private:
  std::vector<double> buf_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

// Appends rho and blocks iff the window minimum is below rho_min.
// On block the caller must neither emit the output nor update the state.
GuardVerdict monitor_step(RhoWindow& window, double rho, const GuardConfig& config, std::size_t t);

// Per-token verdicts over a recorded trace, using the min rho_hat across layers.
std::vector<GuardVerdict> monitor_trace(const SpectralTrace& trace, const GuardConfig& config);

// First blocking verdict of monitor_trace, or a pass verdict carrying the overall minimum.
GuardVerdict first_block(const SpectralTrace& trace, const GuardConfig& config);

struct GuardedOutput {
  std::vector<std::vector<double>> outputs;  // logits of emitted tokens
  GuardVerdict verdict;
  SpectralTrace trace;
};

// Runs the model token by token, probing each layer's operator and gating
// on the windowed minimum. A blocked token leaves the states untouched and
// stops generation.
GuardedOutput guarded_generate(const SelectiveSsm& ssm, std::span<const TokenId> tokens,
                               const GuardConfig& config, const OperatorHook& hook = {});

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  double tau = 0.5;
  std::vector<std::string> layout;
};

struct TrainOptions {
  std::size_t epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

// Full-batch gradient descent on mean cross-entropy + l2 ||w||^2. Features
// are standardized internally and the result folded back to raw-feature
// weights. Throws std::invalid_argument on single-class data or mismatched
// dimensions. loss_history, if given, receives the loss after each epoch.
LogisticModel train_classifier(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                               const TrainOptions& options = {}, std::vector<double>* loss_history = nullptr);

struct Classification {
  double score = 0.5;
  bool hazard = false;  // score > tau
};

Classification classify(const LogisticModel& model, std::span<const double> features);
Classification classify(const LogisticModel& model, const FeatureVector& features);

struct DetectionMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double auc = 0.5;
  bool precision_undefined = false;  // no positive predictions
  bool auc_undefined = false;        // single-class labels
};

DetectionMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

// Confusion counts at score > tau plus pairwise AUC.
DetectionMetrics compute_metrics(std::span<const double> scores, std::span<const int> labels, double tau);

// Fraction of (positive, negative) pairs ranked correctly, ties count 1/2.
// Throws std::domain_error when either class is empty.
double auc_pairwise(std::span<const double> scores, std::span<const int> labels);

struct AblationRow {
  double rho_min = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
};

// Threshold-only monitor as a trace-level detector (any block => adversarial).
std::vector<AblationRow> ablate_threshold(const std::vector<LabeledTrace>& traces,
                                          std::span<const double> rho_grid, const GuardConfig& config);

}  // namespace spectral
