#include "spectral/trace.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace spectral {

void SpectralTrace::validate() const {
  if (records.size() != n_layers * length) {
    throw std::invalid_argument("SpectralTrace: expected " + std::to_string(n_layers * length) +
                                " records (n_layers * length), got " + std::to_string(records.size()));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.t != i / n_layers || r.layer != i % n_layers) {
      throw std::invalid_argument("SpectralTrace: record " + std::to_string(i) + " out of (t, layer) order");
    }
    if (!(r.rho_hat >= 0.0)) throw std::invalid_argument("SpectralTrace: negative rho_hat");
  }
}

const TraceRecord& SpectralTrace::at(std::size_t t, std::size_t layer) const {
  if (t >= length || layer >= n_layers) throw std::out_of_range("SpectralTrace::at: index out of range");
  return records[t * n_layers + layer];
}

std::vector<double> SpectralTrace::min_rho_per_token() const {
  std::vector<double> out(length, std::numeric_limits<double>::infinity());
  for (const auto& r : records) out.at(r.t) = std::min(out.at(r.t), r.rho_hat);
  return out;
}

double SpectralTrace::mean_rho_hat() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : records) s += r.rho_hat;
  return s / static_cast<double>(records.size());
}

}  // namespace spectral
