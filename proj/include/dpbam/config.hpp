#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/metrics.hpp"
#include "dpbam/optimizers.hpp"

namespace dpbam {

// Full description of a training run. Parsed from a key = value document
// and/or CLI flags; hashed via its canonical serialization so every metric
// record can name the exact configuration that produced it.
struct RunConfig {
  // dataset
  std::string dataset = "blobs";  // blobs | spirals | csv | idx
  std::string data_path;          // csv path or idx images path
  std::string labels_path;        // idx labels path
  std::size_t subset = 0;         // idx subset size (0 = all)
  std::size_t n = 10000;          // synthetic sample count
  std::size_t input_dim = 20;     // blobs dimension
  std::size_t classes = 10;       // synthetic class count
  double separation = 4.0;        // blobs center separation (in cluster sigmas)
  double spiral_noise = 0.15;
  double eval_fraction = 0.2;

  // model
  std::vector<std::size_t> hidden = {64};
  std::string activation = "tanh";
  std::string loss = "cross_entropy";  // cross_entropy | mse

  // method
  std::string method = "dp_sgd";
  double learning_rate = 0.5;
  double lambda = 0.0;
  bool lambda_decay = false;  // linear lambda^(t) decay to 0 across the run
  double momentum = 0.0;
  double ascent_norm_guard = 1e-12;

  // privacy: exactly one of sigma / target_epsilon must be set
  double clip = 1.0;
  double q = 0.05;
  std::optional<double> sigma;
  std::optional<double> target_epsilon;
  double delta = 1e-5;
  bool noise_inside_sum = false;

  // run
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0 = run all epochs; else cap the step count
  std::optional<std::uint64_t> seed;  // mandatory
  std::string out_path = "metrics.jsonl";
  std::string csv_path;  // optional CSV export
  std::size_t instrument_every = 10;
  bool emit_timings = false;

  void validate() const {
    if (!seed.has_value()) throw ContractError("RunConfig: seed is mandatory");
    if (sigma.has_value() == target_epsilon.has_value())
      throw ContractError(
          "RunConfig: exactly one of sigma and (epsilon, delta) target must be given");
    if (q <= 0.0 || q > 1.0) throw ContractError("RunConfig: q must lie in (0,1]");
    if (epochs == 0) throw ContractError("RunConfig: epochs must be >= 1");
    if (instrument_every == 0) throw ContractError("RunConfig: instrument_every must be >= 1");
    if (dataset != "blobs" && dataset != "spirals" && dataset != "csv" && dataset != "idx")
      throw ContractError("RunConfig: unknown dataset kind '" + dataset + "'");
    if (loss != "cross_entropy" && loss != "mse")
      throw ContractError("RunConfig: unknown loss '" + loss + "'");
    method_from_name(method);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  std::size_t e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

inline std::string join_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

// Canonical serialization: sorted key = value lines, shortest round-trip
// number formatting. This string (not the file on disk) is what gets hashed.
inline std::string canonical_config(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["dataset"] = c.dataset;
  kv["data_path"] = c.data_path;
  kv["labels_path"] = c.labels_path;
  kv["subset"] = std::to_string(c.subset);
  kv["n"] = std::to_string(c.n);
  kv["input_dim"] = std::to_string(c.input_dim);
  kv["classes"] = std::to_string(c.classes);
  kv["separation"] = detail::format_double(c.separation);
  kv["spiral_noise"] = detail::format_double(c.spiral_noise);
  kv["eval_fraction"] = detail::format_double(c.eval_fraction);
  kv["hidden"] = detail::join_size_list(c.hidden);
  kv["activation"] = c.activation;
  kv["loss"] = c.loss;
  kv["method"] = c.method;
  kv["learning_rate"] = detail::format_double(c.learning_rate);
  kv["lambda"] = detail::format_double(c.lambda);
  kv["lambda_decay"] = c.lambda_decay ? "true" : "false";
  kv["momentum"] = detail::format_double(c.momentum);
  kv["ascent_norm_guard"] = detail::format_double(c.ascent_norm_guard);
  kv["clip"] = detail::format_double(c.clip);
  kv["q"] = detail::format_double(c.q);
  kv["sigma"] = c.sigma ? detail::format_double(*c.sigma) : "";
  kv["target_epsilon"] = c.target_epsilon ? detail::format_double(*c.target_epsilon) : "";
  kv["delta"] = detail::format_double(c.delta);
  kv["noise_inside_sum"] = c.noise_inside_sum ? "true" : "false";
  kv["epochs"] = std::to_string(c.epochs);
  kv["max_steps"] = std::to_string(c.max_steps);
  kv["seed"] = c.seed ? std::to_string(*c.seed) : "";
  kv["instrument_every"] = std::to_string(c.instrument_every);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(canonical_config(c)); }

// Apply one key = value assignment (shared by the file parser and tests).
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  auto as_double = [&] { return std::stod(value); };
  auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ContractError("config: bad boolean for " + key + ": '" + value + "'");
  };
  if (key == "dataset") c.dataset = value;
  else if (key == "data_path") c.data_path = value;
  else if (key == "labels_path") c.labels_path = value;
  else if (key == "subset") c.subset = as_size();
  else if (key == "n") c.n = as_size();
  else if (key == "input_dim") c.input_dim = as_size();
  else if (key == "classes") c.classes = as_size();
  else if (key == "separation") c.separation = as_double();
  else if (key == "spiral_noise") c.spiral_noise = as_double();
  else if (key == "eval_fraction") c.eval_fraction = as_double();
  else if (key == "hidden") c.hidden = detail::parse_size_list(value);
  else if (key == "activation") c.activation = value;
  else if (key == "loss") c.loss = value;
  else if (key == "method") c.method = value;
  else if (key == "learning_rate") c.learning_rate = as_double();
  else if (key == "lambda") c.lambda = as_double();
  else if (key == "lambda_decay") c.lambda_decay = as_bool();
  else if (key == "momentum") c.momentum = as_double();
  else if (key == "ascent_norm_guard") c.ascent_norm_guard = as_double();
  else if (key == "clip") c.clip = as_double();
  else if (key == "q") c.q = as_double();
  else if (key == "sigma") c.sigma = as_double();
  else if (key == "target_epsilon") c.target_epsilon = as_double();
  else if (key == "delta") c.delta = as_double();
  else if (key == "noise_inside_sum") c.noise_inside_sum = as_bool();
  else if (key == "epochs") c.epochs = as_size();
  else if (key == "max_steps") c.max_steps = as_size();
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "out") c.out_path = value;
  else if (key == "csv") c.csv_path = value;
  else if (key == "instrument_every") c.instrument_every = as_size();
  else if (key == "timings") c.emit_timings = as_bool();
  else throw ContractError("config: unknown key '" + key + "'");
}

// key = value document; blank lines and #-comments ignored.
inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path, 0);
  RunConfig c;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    std::size_t line_offset = offset;
    offset += line.size() + 1;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("config line missing '='", line_offset);
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    try {
      apply_config_entry(c, key, value);
    } catch (const ContractError&) {
      throw;
    } catch (const std::invalid_argument&) {
      throw ParseError("config: bad value for '" + key + "'", line_offset);
    }
  }
  return c;
}

}  // namespace dpbam
