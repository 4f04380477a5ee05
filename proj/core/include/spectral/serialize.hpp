#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spectral/analysis.hpp"
#include "spectral/attack.hpp"
#include "spectral/experiments.hpp"
#include "spectral/guard.hpp"
#include "spectral/ssm.hpp"

namespace spectral::io {

// Raised for malformed or mismatched input documents; what() names the field.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Embedded in every output: CSV as a leading '#' line, JSONL as a first
// {"meta": ...} line, JSON as a "meta" member.
struct OutputMeta {
  std::uint64_t seed = 0;
  std::string config_hash;  // FNV-1a 64, hex
  std::string version;
};

std::uint64_t fnv1a64(std::string_view bytes);
OutputMeta make_meta(std::uint64_t seed, std::string_view canonical_config);
std::string meta_csv_line(const OutputMeta& meta);

// Shortest round-trip decimal form.
std::string format_double(double x);

std::string config_to_json(const SelectiveSsmConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
SelectiveSsmConfig config_from_json(std::string_view text);

std::string model_to_json(const SelectiveSsm& ssm);
SelectiveSsm model_from_json(std::string_view text);

std::string trace_to_jsonl(const SpectralTrace& trace, const OutputMeta& meta);
SpectralTrace trace_from_jsonl(std::string_view text);

std::string labeled_traces_to_jsonl(const std::vector<LabeledTrace>& traces, const OutputMeta& meta);
std::vector<LabeledTrace> labeled_traces_from_jsonl(std::string_view text);

std::string features_to_json(const FeatureVector& features, const OutputMeta& meta);

std::string classifier_to_json(const LogisticModel& model, const OutputMeta& meta);
LogisticModel classifier_from_json(std::string_view text);

struct VerdictLine {
  std::string stream_id;
  std::size_t t = 0;
  double window_min_rho = 0.0;
  Decision decision = Decision::pass;
};
std::string verdicts_to_jsonl(const std::vector<VerdictLine>& lines, const OutputMeta& meta);

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};
ConfusionCounts counts_from_json(std::string_view text);

std::string metrics_to_csv(const std::vector<std::pair<std::string, DetectionMetrics>>& rows, const OutputMeta& meta);
std::string ablation_to_csv(const std::vector<AblationRow>& rows, const OutputMeta& meta);
std::string grid_to_csv(const PhaseGrid& grid, const OutputMeta& meta);
std::string pareto_to_csv(const std::vector<ParetoRow>& rows, const OutputMeta& meta);
std::string pareto_summary_json(const std::vector<ParetoRow>& rows, AttackMode mode, const OutputMeta& meta);
std::string attack_result_to_json(const AttackResult& result, const std::vector<TokenId>& prompt,
                                  const AttackConfig& config, const OutputMeta& meta);

std::string attack_mode_name(AttackMode mode);
AttackMode attack_mode_from_name(std::string_view name);

}  // namespace spectral::io
