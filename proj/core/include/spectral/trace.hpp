#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spectral {

using TokenId = std::uint32_t;

struct TraceRecord {
  std::size_t t = 0;
  std::size_t layer = 0;
  double delta = 0.0;
  double rho_hat = 0.0;
  std::optional<double> rho_exact;
  std::optional<double> spectral_gap;
  double h_norm_before = 0.0;
  double h_norm_after = 0.0;
};

// Records are ordered by (t, layer) with exactly n_layers records per token.
struct SpectralTrace {
  std::vector<TraceRecord> records;
  std::size_t n_layers = 0;
  std::size_t length = 0;

  bool empty() const noexcept { return records.empty(); }

  // Throws std::invalid_argument if ordering or record counts are off.
  void validate() const;

  const TraceRecord& at(std::size_t t, std::size_t layer) const;

  // Minimum rho_hat across layers at each token.
  std::vector<double> min_rho_per_token() const;

  double mean_rho_hat() const;

  void append(const TraceRecord& record) { records.push_back(record); }
};

struct LabeledTrace {
  SpectralTrace trace;
  std::vector<TokenId> tokens;
  int label = 0;  // 1 = adversarial
  std::string source;
};

}  // namespace spectral
