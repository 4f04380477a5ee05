#include "spectral/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spectral::ad {

Var Tape::push(double value, std::span<const Var> parents, std::span<const double> partials) {
  for (Var p : parents)
    if (p >= values_.size()) throw std::out_of_range("Tape: parent index out of range");
  values_.push_back(value);
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  offsets_.push_back(parents_.size());
  return static_cast<Var>(values_.size() - 1);
}

Var Tape::input(double value) { return push(value, {}, {}); }
Var Tape::constant(double value) { return push(value, {}, {}); }

Var Tape::add(Var a, Var b) {
  const Var ps[] = {a, b};
  const double ds[] = {1.0, 1.0};
  return push(value(a) + value(b), ps, ds);
}

Var Tape::sub(Var a, Var b) {
  const Var ps[] = {a, b};
  const double ds[] = {1.0, -1.0};
  return push(value(a) - value(b), ps, ds);
}

Var Tape::mul(Var a, Var b) {
  const Var ps[] = {a, b};
  const double ds[] = {value(b), value(a)};
  return push(value(a) * value(b), ps, ds);
}

Var Tape::scale(Var a, double factor) {
  const Var ps[] = {a};
  const double ds[] = {factor};
  return push(value(a) * factor, ps, ds);
}

Var Tape::offset(Var a, double shift) {
  const Var ps[] = {a};
  const double ds[] = {1.0};
  return push(value(a) + shift, ps, ds);
}

Var Tape::exp(Var a) {
  const double e = std::exp(value(a));
  const Var ps[] = {a};
  const double ds[] = {e};
  return push(e, ps, ds);
}

Var Tape::softplus(Var a) {
  const double x = value(a);
  const double y = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sig = 1.0 / (1.0 + std::exp(-x));
  const Var ps[] = {a};
  const double ds[] = {sig};
  return push(y, ps, ds);
}

Var Tape::clamp(Var a, double lo, double hi) {
  const double x = value(a);
  const Var ps[] = {a};
  const double ds[] = {(x < lo || x > hi) ? 0.0 : 1.0};
  return push(std::clamp(x, lo, hi), ps, ds);
}

Var Tape::dot(std::span<const Var> xs, std::span<const double> weights, double bias) {
  if (xs.size() != weights.size()) throw std::invalid_argument("Tape::dot: size mismatch");
  double s = bias;
  for (std::size_t i = 0; i < xs.size(); ++i) s += weights[i] * value(xs[i]);
  return push(s, xs, weights);
}

Var Tape::sum(std::span<const Var> xs) {
  double s = 0.0;
  for (Var x : xs) s += value(x);
  const std::vector<double> ones(xs.size(), 1.0);
  return push(s, xs, ones);
}

Var Tape::max(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::max: empty argument list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (value(xs[i]) > value(xs[best])) best = i;
  const Var ps[] = {xs[best]};
  const double ds[] = {1.0};
  return push(value(xs[best]), ps, ds);
}

Var Tape::kl_from_logits(std::span<const Var> logits, std::span<const double> log_q) {
  if (logits.size() != log_q.size() || logits.empty())
    throw std::invalid_argument("Tape::kl_from_logits: size mismatch");
  const std::size_t n = logits.size();
  double zmax = value(logits[0]);
  for (Var z : logits) zmax = std::max(zmax, value(z));
  double norm = 0.0;
  for (Var z : logits) norm += std::exp(value(z) - zmax);
  const double log_norm = zmax + std::log(norm);

  std::vector<double> log_p(n), p(n);
  double kl = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    log_p[v] = value(logits[v]) - log_norm;
    p[v] = std::exp(log_p[v]);
    kl += p[v] * (log_p[v] - log_q[v]);
  }
  std::vector<double> partials(n);
  for (std::size_t v = 0; v < n; ++v) partials[v] = p[v] * (log_p[v] - log_q[v] - kl);
  return push(std::max(kl, 0.0), logits, partials);
}

std::vector<double> Tape::gradient(Var output) const {
  if (output >= values_.size()) throw std::out_of_range("Tape::gradient: output index out of range");
  std::vector<double> adj(values_.size(), 0.0);
  adj[output] = 1.0;
  for (std::size_t node = output + 1; node-- > 0;) {
    const double a = adj[node];
    if (a == 0.0) continue;
    for (std::size_t k = offsets_[node]; k < offsets_[node + 1]; ++k) adj[parents_[k]] += a * partials_[k];
  }
  return adj;
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  values_.reserve(nodes);
  offsets_.reserve(nodes + 1);
  parents_.reserve(edges);
  partials_.reserve(edges);
}

void Tape::clear() {
  values_.clear();
  offsets_.assign(1, 0);
  parents_.clear();
  partials_.clear();
}

}  // namespace spectral::ad
