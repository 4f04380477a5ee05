#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spectral::ad {

// Index of a node on the tape.
using Var = std::uint32_t;

// Reverse-mode tape. Every node stores its value and the local partials
// with respect to its parents (variable arity, kept contiguously), so the
// backward pass is a single reverse sweep of adjoint accumulation.
class Tape {
 public:
  Var input(double value);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var offset(Var a, double shift);
  Var exp(Var a);
  Var softplus(Var a);
  // Identity inside [lo, hi]; constant (zero gradient) outside.
  Var clamp(Var a, double lo, double hi);

  // sum_i w_i x_i + bias
  Var dot(std::span<const Var> xs, std::span<const double> weights, double bias = 0.0);
  Var sum(std::span<const Var> xs);
  // Gradient flows to the lowest-index maximal argument.
  Var max(std::span<const Var> xs);
  // KL(softmax(z) || q) given log q.
  Var kl_from_logits(std::span<const Var> logits, std::span<const double> log_q);

  double value(Var v) const { return values_.at(v); }
  std::size_t size() const noexcept { return values_.size(); }

  // Adjoints d(output)/d(node) for every node on the tape.
  std::vector<double> gradient(Var output) const;

  void clear();
  // Capacity hint: expected node count and total parent edges.
  void reserve(std::size_t nodes, std::size_t edges);

 private:
  Var push(double value, std::span<const Var> parents, std::span<const double> partials);

  std::vector<double> values_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Var> parents_;
  std::vector<double> partials_;
};

}  // namespace spectral::ad
