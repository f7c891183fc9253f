#pragma once

#include <map>
#include <set>
#include <sstream>

#include "cdc/fqe.hpp"
#include "cdc/trainer.hpp"

namespace cdc {

// Flat key=value run configuration. Lines starting with '#' are comments.
// Unknown keys are hard errors; a typo in eta/lambda must not silently turn
// an ablation into a different experiment.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError("duplicate config key: " + key);
    kv[key] = value;
  }
  return kv;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw ConfigError("config key " + key + " is not a number: " + value);
  return v;
}

inline long to_long(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw ConfigError("config key " + key + " is not an integer: " + value);
  return v;
}

}  // namespace detail

// Documented key list for training configs. eta, lambda, total_steps and seed
// define the run and are required; everything else falls back to defaults.
inline const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "eta",        "lambda",       "nu",          "n_candidates", "ensemble_size",
      "gamma",      "tau",          "batch_size",  "actor_lr",     "critic_lr",
      "total_steps", "seed",        "hidden_layers", "hidden_units", "log_interval",
      "eval_interval", "eval_episodes", "grad_clip"};
  return keys;
}

inline CdcConfig load_train_config(const std::string& path) {
  const auto kv = parse_kv_file(path);
  for (const auto& [key, value] : kv) {
    (void)value;
    if (!train_config_keys().count(key)) throw ConfigError("unknown config key: " + key);
  }
  for (const char* req : {"eta", "lambda", "total_steps", "seed"}) {
    if (!kv.count(req)) throw ConfigError(std::string("missing config key: ") + req);
  }
  CdcConfig cfg;
  auto num = [&kv](const char* key, double dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : detail::to_double(key, it->second);
  };
  auto integer = [&kv](const char* key, long dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : detail::to_long(key, it->second);
  };
  cfg.eta = num("eta", 0.0);
  cfg.lambda = num("lambda", 0.0);
  cfg.nu = num("nu", cfg.nu);
  cfg.n_candidates = int(integer("n_candidates", cfg.n_candidates));
  cfg.ensemble_size = int(integer("ensemble_size", cfg.ensemble_size));
  cfg.gamma = num("gamma", cfg.gamma);
  cfg.tau = num("tau", cfg.tau);
  cfg.batch_size = integer("batch_size", cfg.batch_size);
  cfg.actor_lr = num("actor_lr", cfg.actor_lr);
  cfg.critic_lr = num("critic_lr", cfg.critic_lr);
  cfg.total_steps = integer("total_steps", 0);
  cfg.seed = std::uint64_t(integer("seed", 0));
  const long layers = integer("hidden_layers", long(cfg.hidden.size()));
  const long units = integer("hidden_units", cfg.hidden.empty() ? 256 : cfg.hidden[0]);
  if (layers < 1 || units < 1) throw ConfigError("hidden_layers/hidden_units must be positive");
  cfg.hidden.assign(std::size_t(layers), int(units));
  cfg.log_interval = integer("log_interval", cfg.log_interval);
  cfg.eval_interval = integer("eval_interval", cfg.eval_interval);
  cfg.eval_episodes = int(integer("eval_episodes", cfg.eval_episodes));
  cfg.grad_clip = num("grad_clip", cfg.grad_clip);
  cfg.validate();
  return cfg;
}

}  // namespace cdc
