#include "spectral/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "spectral/version.hpp"

namespace spectral::io {

using nlohmann::json;

namespace {

json parse_doc(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(what + ": invalid JSON (" + e.what() + ")");
  }
}

const json& member(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError(ctx + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(ctx + "." + key + ": missing field");
  return *it;
}

double number(const json& j, const std::string& ctx) {
  if (!j.is_number()) throw SchemaError(ctx + ": expected a number");
  return j.get<double>();
}

std::size_t count(const json& j, const std::string& ctx) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw SchemaError(ctx + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

std::vector<double> numbers(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw SchemaError(ctx + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], ctx + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<TokenId> token_list(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw SchemaError(ctx + ": expected an array");
  std::vector<TokenId> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(static_cast<TokenId>(count(j[i], ctx + "[" + std::to_string(i) + "]")));
  return out;
}

json meta_json(const OutputMeta& meta) {
  return json{{"seed", meta.seed}, {"config_hash", meta.config_hash}, {"version", meta.version}};
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

OutputMeta make_meta(std::uint64_t seed, std::string_view canonical_config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_config)));
  return {seed, buf, kVersion};
}

std::string meta_csv_line(const OutputMeta& meta) {
  return "# seed=" + std::to_string(meta.seed) + " config_hash=" + meta.config_hash + " version=" + meta.version + "\n";
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// --- model -----------------------------------------------------------------------

namespace {

json config_json(const SelectiveSsmConfig& c) {
  return json{{"n_layers", c.n_layers},     {"d_state", c.d_state},     {"d_model", c.d_model},
              {"vocab_size", c.vocab_size}, {"delta_min", c.delta_min}, {"delta_max", c.delta_max},
              {"seed", c.seed}};
}

SelectiveSsmConfig config_from(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError(ctx + ": expected an object");
  SelectiveSsmConfig c;
  for (const auto& [key, value] : j.items()) {
    const std::string field = ctx + "." + key;
    if (key == "n_layers") c.n_layers = count(value, field);
    else if (key == "d_state") c.d_state = count(value, field);
    else if (key == "d_model") c.d_model = count(value, field);
    else if (key == "vocab_size") c.vocab_size = count(value, field);
    else if (key == "delta_min") c.delta_min = number(value, field);
    else if (key == "delta_max") c.delta_max = number(value, field);
    else if (key == "seed") c.seed = count(value, field);
    else throw SchemaError(field + ": unknown field");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(ctx + ": " + e.what());
  }
  return c;
}

}  // namespace

std::string config_to_json(const SelectiveSsmConfig& config) { return config_json(config).dump(); }

SelectiveSsmConfig config_from_json(std::string_view text) {
  const json j = parse_doc(text, "config");
  return config_from(j.contains("config") ? j["config"] : j, "config");
}

std::string model_to_json(const SelectiveSsm& ssm) {
  json j;
  j["config"] = config_json(ssm.config);
  j["log_a"] = ssm.log_a;
  j["b"] = ssm.b;
  j["c"] = ssm.c;
  j["w_delta"] = ssm.w_delta;
  j["delta_bias"] = ssm.delta_bias;
  j["w_in"] = ssm.w_in;
  j["w_out"] = ssm.w_out;
  j["embedding"] = ssm.embedding;
  j["output_projection"] = ssm.output_projection;
  return j.dump();
}

SelectiveSsm model_from_json(std::string_view text) {
  const json j = parse_doc(text, "model");
  SelectiveSsm m;
  m.config = config_from(member(j, "config", "model"), "model.config");
  m.log_a = numbers(member(j, "log_a", "model"), "model.log_a");
  m.b = numbers(member(j, "b", "model"), "model.b");
  m.c = numbers(member(j, "c", "model"), "model.c");
  m.w_delta = numbers(member(j, "w_delta", "model"), "model.w_delta");
  m.delta_bias = numbers(member(j, "delta_bias", "model"), "model.delta_bias");
  m.w_in = numbers(member(j, "w_in", "model"), "model.w_in");
  m.w_out = numbers(member(j, "w_out", "model"), "model.w_out");
  m.embedding = numbers(member(j, "embedding", "model"), "model.embedding");
  m.output_projection = numbers(member(j, "output_projection", "model"), "model.output_projection");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }
  return m;
}

// --- traces ----------------------------------------------------------------------

std::string trace_to_jsonl(const SpectralTrace& trace, const OutputMeta& meta) {
  std::string out =
      json{{"meta", meta_json(meta)}, {"n_layers", trace.n_layers}, {"length", trace.length}}.dump() + "\n";
  for (const auto& r : trace.records) {
    json line{{"t", r.t},
              {"layer", r.layer},
              {"delta", r.delta},
              {"rho_hat", r.rho_hat},
              {"rho_exact", r.rho_exact ? json(*r.rho_exact) : json(nullptr)},
              {"spectral_gap", r.spectral_gap ? json(*r.spectral_gap) : json(nullptr)},
              {"h_norm_before", r.h_norm_before},
              {"h_norm_after", r.h_norm_after}};
    out += line.dump() + "\n";
  }
  return out;
}

SpectralTrace trace_from_jsonl(std::string_view text) {
  SpectralTrace trace;
  std::size_t declared_layers = 0;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string ctx = "line " + std::to_string(i + 1);
    const json j = parse_doc(lines[i], ctx);
    if (j.contains("meta")) {
      if (j.contains("n_layers")) declared_layers = count(j["n_layers"], ctx + ".n_layers");
      continue;
    }
    TraceRecord r;
    r.t = count(member(j, "t", ctx), ctx + ".t");
    r.layer = count(member(j, "layer", ctx), ctx + ".layer");
    r.delta = j.contains("delta") ? number(j["delta"], ctx + ".delta") : 0.0;
    r.rho_hat = number(member(j, "rho_hat", ctx), ctx + ".rho_hat");
    if (j.contains("rho_exact") && !j["rho_exact"].is_null()) r.rho_exact = number(j["rho_exact"], ctx + ".rho_exact");
    if (j.contains("spectral_gap") && !j["spectral_gap"].is_null())
      r.spectral_gap = number(j["spectral_gap"], ctx + ".spectral_gap");
    if (j.contains("h_norm_before")) r.h_norm_before = number(j["h_norm_before"], ctx + ".h_norm_before");
    if (j.contains("h_norm_after")) r.h_norm_after = number(j["h_norm_after"], ctx + ".h_norm_after");
    trace.n_layers = std::max(trace.n_layers, r.layer + 1);
    trace.length = std::max(trace.length, r.t + 1);
    trace.records.push_back(r);
  }
  if (declared_layers) trace.n_layers = declared_layers;
  try {
    trace.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("trace: ") + e.what());
  }
  return trace;
}

std::string labeled_traces_to_jsonl(const std::vector<LabeledTrace>& traces, const OutputMeta& meta) {
  std::string out = json{{"meta", meta_json(meta)}, {"count", traces.size()}}.dump() + "\n";
  for (const auto& lt : traces) {
    std::vector<double> rho_hat, rho_exact, delta, gap;
    for (const auto& r : lt.trace.records) {
      rho_hat.push_back(r.rho_hat);
      rho_exact.push_back(r.rho_exact.value_or(r.rho_hat));
      delta.push_back(r.delta);
      gap.push_back(r.spectral_gap.value_or(0.0));
    }
    json line{{"label", lt.label},
              {"source", lt.source},
              {"tokens", lt.tokens},
              {"n_layers", lt.trace.n_layers},
              {"length", lt.trace.length},
              {"delta", delta},
              {"rho_hat", rho_hat},
              {"rho_exact", rho_exact},
              {"spectral_gap", gap}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<LabeledTrace> labeled_traces_from_jsonl(std::string_view text) {
  std::vector<LabeledTrace> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string ctx = "line " + std::to_string(i + 1);
    const json j = parse_doc(lines[i], ctx);
    if (j.contains("meta")) continue;
    LabeledTrace lt;
    const auto label = count(member(j, "label", ctx), ctx + ".label");
    if (label > 1) throw SchemaError(ctx + ".label: expected 0 or 1");
    lt.label = static_cast<int>(label);
    if (j.contains("source")) lt.source = j["source"].get<std::string>();
    lt.tokens = token_list(member(j, "tokens", ctx), ctx + ".tokens");
    const std::size_t L = count(member(j, "n_layers", ctx), ctx + ".n_layers");
    const std::size_t T = count(member(j, "length", ctx), ctx + ".length");
    const auto rho_hat = numbers(member(j, "rho_hat", ctx), ctx + ".rho_hat");
    if (rho_hat.size() != L * T) throw SchemaError(ctx + ".rho_hat: expected n_layers * length entries");
    auto optional_array = [&](const char* key) {
      if (!j.contains(key)) return std::vector<double>{};
      auto v = numbers(j[key], ctx + "." + key);
      if (v.size() != L * T) throw SchemaError(ctx + "." + key + ": expected n_layers * length entries");
      return v;
    };
    const auto rho_exact = optional_array("rho_exact");
    const auto delta = optional_array("delta");
    const auto gap = optional_array("spectral_gap");
    lt.trace.n_layers = L;
    lt.trace.length = T;
    for (std::size_t k = 0; k < L * T; ++k) {
      TraceRecord r;
      r.t = k / L;
      r.layer = k % L;
      r.rho_hat = rho_hat[k];
      if (!rho_exact.empty()) r.rho_exact = rho_exact[k];
      if (!delta.empty()) r.delta = delta[k];
      if (!gap.empty()) r.spectral_gap = gap[k];
      lt.trace.records.push_back(r);
    }
    out.push_back(std::move(lt));
  }
  return out;
}

// --- classifier / features ----------------------------------------------------

std::string features_to_json(const FeatureVector& features, const OutputMeta& meta) {
  return json{{"meta", meta_json(meta)}, {"layout", features.layout()}, {"values", features.values}}.dump();
}

std::string classifier_to_json(const LogisticModel& model, const OutputMeta& meta) {
  return json{{"meta", meta_json(meta)},
              {"layout", model.layout},
              {"weights", model.weights},
              {"bias", model.bias},
              {"tau", model.tau}}
      .dump(2);
}

LogisticModel classifier_from_json(std::string_view text) {
  const json j = parse_doc(text, "classifier");
  LogisticModel m;
  m.weights = numbers(member(j, "weights", "classifier"), "classifier.weights");
  m.bias = number(member(j, "bias", "classifier"), "classifier.bias");
  m.tau = j.contains("tau") ? number(j["tau"], "classifier.tau") : 0.5;
  if (j.contains("layout")) {
    const auto& layout = j["layout"];
    if (!layout.is_array()) throw SchemaError("classifier.layout: expected an array");
    for (const auto& name : layout) m.layout.push_back(name.get<std::string>());
    if (m.layout.size() != m.weights.size())
      throw SchemaError("classifier.layout: " + std::to_string(m.layout.size()) + " names for " +
                        std::to_string(m.weights.size()) + " weights");
  }
  return m;
}

std::string verdicts_to_jsonl(const std::vector<VerdictLine>& lines, const OutputMeta& meta) {
  std::string out = json{{"meta", meta_json(meta)}}.dump() + "\n";
  for (const auto& v : lines) {
    out += json{{"stream_id", v.stream_id},
                {"t", v.t},
                {"window_min_rho", finite_or_null(v.window_min_rho)},
                {"decision", v.decision == Decision::block ? "block" : "pass"}}
               .dump() +
           "\n";
  }
  return out;
}

ConfusionCounts counts_from_json(std::string_view text) {
  const json j = parse_doc(text, "counts");
  ConfusionCounts c;
  c.tp = count(member(j, "tp", "counts"), "counts.tp");
  c.fp = count(member(j, "fp", "counts"), "counts.fp");
  c.tn = count(member(j, "tn", "counts"), "counts.tn");
  c.fn = count(member(j, "fn", "counts"), "counts.fn");
  return c;
}

// --- tables ------------------------------------------------------------------

std::string metrics_to_csv(const std::vector<std::pair<std::string, DetectionMetrics>>& rows, const OutputMeta& meta) {
  std::string out = meta_csv_line(meta) + "name,tp,fp,tn,fn,precision,recall,f1,fpr,auc\n";
  for (const auto& [name, m] : rows) {
    out += name + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.tn) + "," +
           std::to_string(m.fn) + "," + format_double(m.precision) + "," + format_double(m.recall) + "," +
           format_double(m.f1) + "," + format_double(m.fpr) + "," + (m.auc_undefined ? "" : format_double(m.auc)) +
           "\n";
  }
  return out;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows, const OutputMeta& meta) {
  std::string out = meta_csv_line(meta) + "rho_min,precision,recall,f1,fpr\n";
  for (const auto& r : rows) {
    out += format_double(r.rho_min) + "," + format_double(r.precision) + "," + format_double(r.recall) + "," +
           format_double(r.f1) + "," + format_double(r.fpr) + "\n";
  }
  return out;
}

std::string grid_to_csv(const PhaseGrid& grid, const OutputMeta& meta) {
  std::string out = meta_csv_line(meta) + "rho,distance,retention,recoverable\n";
  for (std::size_t i = 0; i < grid.rho_levels.size(); ++i)
    for (std::size_t k = 0; k < grid.distances.size(); ++k) {
      out += format_double(grid.rho_levels[i]) + "," + std::to_string(grid.distances[k]) + "," +
             format_double(grid.retention_at(i, k)) + "," + (grid.recoverable_at(i, k) ? "1" : "0") + "\n";
    }
  return out;
}

std::string pareto_to_csv(const std::vector<ParetoRow>& rows, const OutputMeta& meta) {
  std::string out = meta_csv_line(meta) + "lambda,delta_rho_mean,lexical_auc\n";
  for (const auto& r : rows)
    out += format_double(r.lambda) + "," + format_double(r.delta_rho_mean) + "," + format_double(r.lexical_auc) + "\n";
  return out;
}

std::string pareto_summary_json(const std::vector<ParetoRow>& rows, AttackMode mode, const OutputMeta& meta) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back(json{{"lambda", r.lambda},
                       {"spectral_weight", r.spectral_weight},
                       {"output_weight", r.output_weight},
                       {"delta_rho_mean", r.delta_rho_mean},
                       {"lexical_auc", r.lexical_auc},
                       {"kl_mean", r.kl_mean}});
  }
  return json{{"meta", meta_json(meta)}, {"mode", attack_mode_name(mode)}, {"rows", arr}}.dump(2);
}

std::string attack_result_to_json(const AttackResult& result, const std::vector<TokenId>& prompt,
                                  const AttackConfig& config, const OutputMeta& meta) {
  json j{{"meta", meta_json(meta)},
         {"config",
          {{"alpha", config.alpha},
           {"steps", config.steps},
           {"lambda", config.lambda},
           {"seed", config.seed},
           {"mode", attack_mode_name(config.mode)}}},
         {"prompt", prompt},
         {"tokens", result.tokens},
         {"loss_curve", result.loss_curve},
         {"continuous_loss", result.continuous_loss},
         {"rho_mean_before", result.rho_mean_before},
         {"rho_mean_after", result.rho_mean_after},
         {"delta_rho_mean", result.delta_rho_mean},
         {"kl_to_benign", result.kl_to_benign},
         {"tokens_changed", result.tokens_changed}};
  j["lexical_auc"] = result.lexical_auc ? json(*result.lexical_auc) : json(nullptr);
  return j.dump(2);
}

std::string attack_mode_name(AttackMode mode) {
  switch (mode) {
    case AttackMode::spectral_only: return "spectral_only";
    case AttackMode::joint_loss: return "joint_loss";
    case AttackMode::random_baseline: return "random_baseline";
  }
  return "spectral_only";
}

AttackMode attack_mode_from_name(std::string_view name) {
  if (name == "spectral_only") return AttackMode::spectral_only;
  if (name == "joint_loss") return AttackMode::joint_loss;
  if (name == "random_baseline") return AttackMode::random_baseline;
  throw std::invalid_argument("unknown attack mode '" + std::string(name) + "'");
}

}  // namespace spectral::io
