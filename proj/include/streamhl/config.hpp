#pragma once

// Flat key=value training configuration. Every key maps to one typed field;
// unknown or duplicate keys are errors so a typo cannot silently train the
// wrong model.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/losses.hpp"
#include "streamhl/metrics.hpp"
#include "streamhl/mtam.hpp"
#include "streamhl/numfmt.hpp"

namespace streamhl {

struct TrainConfig {
  // optimizer / loop
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::uint64_t epochs = 50;
  std::uint64_t seed = 1;
  // model dims
  std::size_t d = 32;
  std::size_t d_h = 8;
  std::size_t n_h = 4;
  std::size_t n_perceiver_layers = 3;
  std::size_t decoder_depth = 1;
  bool use_pos_emb = true;
  bool perceiver_causal = false;
  // losses
  double sigma = 10.0;
  double lambda1 = 0.65;
  double lambda2 = 0.15;
  double lambda3 = 0.20;
  PairVariant pair_variant = PairVariant::kL1;
  double pair_epsilon = 1e-6;
  // alignment
  double gamma = 1.0;
  double tau_c = 0.1;
  std::size_t negatives = 8;
  DtwMode dtw_mode = DtwMode::kMin;
  // data / outputs
  std::string train_dataset;
  std::string eval_dataset;
  std::string out_dir = ".";
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t eval_every = 1;
  std::vector<double> delta_list = {0.0, 0.2, 0.4, 0.6};
  TauVariant tau_variant = TauVariant::kTauB;

  LossConfig loss_config() const {
    LossConfig cfg;
    cfg.sigma = sigma;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = lambda2;
    cfg.lambda3 = lambda3;
    cfg.pair_variant = pair_variant;
    cfg.pair_epsilon = pair_epsilon;
    return cfg;
  }

  AlignConfig align_config() const {
    AlignConfig cfg;
    cfg.gamma = gamma;
    cfg.tau_c = tau_c;
    cfg.n_negatives = negatives;
    cfg.mode = dtw_mode;
    return cfg;
  }

  void validate() const {
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (d < 2 || d % 2 != 0)
      throw std::invalid_argument("TrainConfig: d must be even and >= 2");
    if (n_h * d_h == 0)
      throw std::invalid_argument("TrainConfig: n_h and d_h must be >= 1");
    if (n_perceiver_layers < 1 || decoder_depth < 1)
      throw std::invalid_argument("TrainConfig: need at least one layer");
    if (eval_every < 1)
      throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    if (delta_list.empty())
      throw std::invalid_argument("TrainConfig: delta_list must not be empty");
    for (double delta : delta_list)
      if (!(delta >= 0.0 && delta < 1.0))
        throw std::invalid_argument(
            "TrainConfig: delta values must lie in [0,1)");
    loss_config().validate();
    align_config().validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double config_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a number");
  }
}

inline std::uint64_t config_u64(const std::string& key,
                                const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("neg");
    std::uint64_t x = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a nonnegative integer");
  }
}

inline bool config_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': '" + value +
                              "' is not a boolean (true/false/1/0)");
}

inline std::vector<double> config_delta_list(const std::string& key,
                                             const std::string& value) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(value);
  while (std::getline(ss, item, ','))
    out.push_back(config_double(key, trim(item)));
  if (out.empty())
    throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

}  // namespace detail

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::config_bool;
  using detail::config_delta_list;
  using detail::config_double;
  using detail::config_u64;
  if (key == "learning_rate") cfg.learning_rate = config_double(key, value);
  else if (key == "batch_size") cfg.batch_size = config_u64(key, value);
  else if (key == "epochs") cfg.epochs = config_u64(key, value);
  else if (key == "seed") cfg.seed = config_u64(key, value);
  else if (key == "d") cfg.d = config_u64(key, value);
  else if (key == "d_h") cfg.d_h = config_u64(key, value);
  else if (key == "n_h") cfg.n_h = config_u64(key, value);
  else if (key == "n_perceiver_layers")
    cfg.n_perceiver_layers = config_u64(key, value);
  else if (key == "decoder_depth") cfg.decoder_depth = config_u64(key, value);
  else if (key == "use_pos_emb") cfg.use_pos_emb = config_bool(key, value);
  else if (key == "perceiver_causal")
    cfg.perceiver_causal = config_bool(key, value);
  else if (key == "sigma") cfg.sigma = config_double(key, value);
  else if (key == "lambda1") cfg.lambda1 = config_double(key, value);
  else if (key == "lambda2") cfg.lambda2 = config_double(key, value);
  else if (key == "lambda3") cfg.lambda3 = config_double(key, value);
  else if (key == "pair_variant") cfg.pair_variant = parse_pair_variant(value);
  else if (key == "pair_epsilon") cfg.pair_epsilon = config_double(key, value);
  else if (key == "gamma") cfg.gamma = config_double(key, value);
  else if (key == "tau_c") cfg.tau_c = config_double(key, value);
  else if (key == "negatives") cfg.negatives = config_u64(key, value);
  else if (key == "dtw_mode") cfg.dtw_mode = parse_dtw_mode(value);
  else if (key == "train_dataset") cfg.train_dataset = value;
  else if (key == "eval_dataset") cfg.eval_dataset = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "checkpoint_every")
    cfg.checkpoint_every = config_u64(key, value);
  else if (key == "eval_every") cfg.eval_every = config_u64(key, value);
  else if (key == "delta_list") cfg.delta_list = config_delta_list(key, value);
  else if (key == "tau_variant") {
    if (value == "b") cfg.tau_variant = TauVariant::kTauB;
    else if (value == "a") cfg.tau_variant = TauVariant::kTauA;
    else
      throw std::invalid_argument("config key 'tau_variant': '" + value +
                                  "' is not 'a' or 'b'");
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

// Parses flat key=value text. '#' starts a comment; blank lines are skipped;
// keys may appear at most once.
inline TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": empty key");
    for (const auto& s : seen)
      if (s == key)
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
  }
  return cfg;
}

inline TrainConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw std::invalid_argument("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

// Canonical serialization; parse_config_text(config_to_text(c)) == c.
inline std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  auto kv = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  kv("learning_rate", fmt17(cfg.learning_rate));
  kv("batch_size", std::to_string(cfg.batch_size));
  kv("epochs", std::to_string(cfg.epochs));
  kv("seed", std::to_string(cfg.seed));
  kv("d", std::to_string(cfg.d));
  kv("d_h", std::to_string(cfg.d_h));
  kv("n_h", std::to_string(cfg.n_h));
  kv("n_perceiver_layers", std::to_string(cfg.n_perceiver_layers));
  kv("decoder_depth", std::to_string(cfg.decoder_depth));
  kv("use_pos_emb", cfg.use_pos_emb ? "true" : "false");
  kv("perceiver_causal", cfg.perceiver_causal ? "true" : "false");
  kv("sigma", fmt17(cfg.sigma));
  kv("lambda1", fmt17(cfg.lambda1));
  kv("lambda2", fmt17(cfg.lambda2));
  kv("lambda3", fmt17(cfg.lambda3));
  kv("pair_variant", pair_variant_name(cfg.pair_variant));
  kv("pair_epsilon", fmt17(cfg.pair_epsilon));
  kv("gamma", fmt17(cfg.gamma));
  kv("tau_c", fmt17(cfg.tau_c));
  kv("negatives", std::to_string(cfg.negatives));
  kv("dtw_mode", dtw_mode_name(cfg.dtw_mode));
  if (!cfg.train_dataset.empty()) kv("train_dataset", cfg.train_dataset);
  if (!cfg.eval_dataset.empty()) kv("eval_dataset", cfg.eval_dataset);
  kv("out_dir", cfg.out_dir);
  kv("checkpoint_every", std::to_string(cfg.checkpoint_every));
  kv("eval_every", std::to_string(cfg.eval_every));
  std::string deltas;
  for (std::size_t i = 0; i < cfg.delta_list.size(); ++i) {
    if (i) deltas += ",";
    deltas += fmt17(cfg.delta_list[i]);
  }
  kv("delta_list", deltas);
  kv("tau_variant", cfg.tau_variant == TauVariant::kTauB ? "b" : "a");
  return out;
}

}  // namespace streamhl
