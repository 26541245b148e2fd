#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpbam/errors.hpp"

namespace dpbam {

// One instrumented training step. Serialized as one JSON object per line;
// the schema is closed -- readers reject unknown fields.
struct MetricRecord {
  long step = 0;
  double epoch = 0.0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double bias_norm = 0.0;
  double a = 0.0;       // magnitude error
  double c_norm = 0.0;  // directional error magnitude
  double cos_prev_priv = 0.0;
  double cos_per_sample = 0.0;
  double cos_clip_raw = 0.0;
  double fraction_clipped = 0.0;
  double epsilon_spent = 0.0;
  double wall_ms = 0.0;  // emitted only when timings are enabled
  bool degenerate_decomposition = false;
  bool degenerate_cosine = false;
  bool empty_batch = false;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline const std::set<std::string>& metric_record_fields() {
  static const std::set<std::string> fields = {
      "step",          "epoch",           "train_loss",     "eval_accuracy",
      "bias_norm",     "a",               "c_norm",         "cos_prev_priv",
      "cos_per_sample", "cos_clip_raw",   "fraction_clipped", "epsilon_spent",
      "wall_ms",       "degenerate_decomposition", "degenerate_cosine", "empty_batch",
      "seed",          "config_hash",     "kind"};
  return fields;
}

inline nlohmann::json to_json(const MetricRecord& r, bool with_wall_ms = false) {
  nlohmann::json j;
  j["kind"] = "step";
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["eval_accuracy"] = r.eval_accuracy;
  j["bias_norm"] = r.bias_norm;
  j["a"] = r.a;
  j["c_norm"] = r.c_norm;
  j["cos_prev_priv"] = r.cos_prev_priv;
  j["cos_per_sample"] = r.cos_per_sample;
  j["cos_clip_raw"] = r.cos_clip_raw;
  j["fraction_clipped"] = r.fraction_clipped;
  j["epsilon_spent"] = r.epsilon_spent;
  if (with_wall_ms) j["wall_ms"] = r.wall_ms;
  j["degenerate_decomposition"] = r.degenerate_decomposition;
  j["degenerate_cosine"] = r.degenerate_cosine;
  j["empty_batch"] = r.empty_batch;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  return j;
}

// Strict parse: every key must belong to the documented field list.
inline MetricRecord metric_record_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (metric_record_fields().count(it.key()) == 0)
      throw ParseError("unknown metric field '" + it.key() + "'", 0);
  MetricRecord r;
  r.step = j.at("step").get<long>();
  r.epoch = j.at("epoch").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.eval_accuracy = j.at("eval_accuracy").get<double>();
  r.bias_norm = j.at("bias_norm").get<double>();
  r.a = j.at("a").get<double>();
  r.c_norm = j.at("c_norm").get<double>();
  r.cos_prev_priv = j.at("cos_prev_priv").get<double>();
  r.cos_per_sample = j.at("cos_per_sample").get<double>();
  r.cos_clip_raw = j.at("cos_clip_raw").get<double>();
  r.fraction_clipped = j.at("fraction_clipped").get<double>();
  r.epsilon_spent = j.at("epsilon_spent").get<double>();
  if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
  r.degenerate_decomposition = j.at("degenerate_decomposition").get<bool>();
  r.degenerate_cosine = j.at("degenerate_cosine").get<bool>();
  r.empty_batch = j.at("empty_batch").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

// Line-delimited writer; one object per line, one summary object at the end.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw ContractError("cannot open metrics file for writing: " + path);
  }

  void append(const MetricRecord& r, bool with_wall_ms = false) {
    out_ << to_json(r, with_wall_ms).dump() << "\n";
  }

  void append_summary(const nlohmann::json& summary) {
    nlohmann::json j = summary;
    j["kind"] = "summary";
    out_ << j.dump() << "\n";
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Load every step record from a JSONL metrics file (summary lines skipped).
inline std::vector<MetricRecord> load_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open metrics file " + path, 0);
  std::vector<MetricRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.value("kind", "step") == "summary") continue;
    records.push_back(metric_record_from_json(j));
  }
  return records;
}

inline void export_metrics_csv(const std::vector<MetricRecord>& records,
                               const std::string& path, bool with_wall_ms = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot open CSV file for writing: " + path);
  out << "step,epoch,train_loss,eval_accuracy,bias_norm,a,c_norm,cos_prev_priv,"
         "cos_per_sample,cos_clip_raw,fraction_clipped,epsilon_spent";
  if (with_wall_ms) out << ",wall_ms";
  out << ",degenerate_decomposition,degenerate_cosine,empty_batch,seed,config_hash\n";
  out.precision(17);
  for (const MetricRecord& r : records) {
    out << r.step << "," << r.epoch << "," << r.train_loss << "," << r.eval_accuracy << ","
        << r.bias_norm << "," << r.a << "," << r.c_norm << "," << r.cos_prev_priv << ","
        << r.cos_per_sample << "," << r.cos_clip_raw << "," << r.fraction_clipped << ","
        << r.epsilon_spent;
    if (with_wall_ms) out << "," << r.wall_ms;
    out << "," << r.degenerate_decomposition << "," << r.degenerate_cosine << ","
        << r.empty_batch << "," << r.seed << "," << r.config_hash << "\n";
  }
}

// FNV-1a over the canonical config serialization; stable across builds.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dpbam
