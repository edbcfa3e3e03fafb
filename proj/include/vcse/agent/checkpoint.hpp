#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vcse/agent/params.hpp"
#include "vcse/error.hpp"

namespace vcse::agent {

inline constexpr int kCheckpointVersion = 1;

inline std::string_view kind_str(ApproximatorKind k) { return k == ApproximatorKind::Tabular ? "Tabular" : "TinyMLP"; }
inline std::string_view optimizer_str(OptimizerKind k) { return k == OptimizerKind::SGD ? "SGD" : "RMSprop"; }
inline std::string_view extrinsic_head_str(ExtrinsicHead h) {
  return h == ExtrinsicHead::SeparateNetwork ? "SeparateNetwork" : "SharedTrunkStopGrad";
}

inline nlohmann::json agent_config_to_json(const AgentConfig& c) {
  return {{"kind", std::string(kind_str(c.kind))},
          {"hidden", c.hidden},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"gamma", c.gamma},
          {"n_step", c.n_step},
          {"max_grad_norm", c.max_grad_norm},
          {"optimizer", std::string(optimizer_str(c.optimizer))},
          {"rmsprop_alpha", c.rmsprop_alpha},
          {"rmsprop_eps", c.rmsprop_eps},
          {"extrinsic_head", std::string(extrinsic_head_str(c.extrinsic_head))},
          {"init_seed", c.init_seed}};
}

/// Parses an agent config over `base`; absent fields keep the base value,
/// unknown ones are rejected.
inline AgentConfig agent_config_from_json(const nlohmann::json& j, const std::string& where = "agent",
                                          const AgentConfig& base = {}) {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
  AgentConfig c = base;
  for (const auto& [key, value] : j.items()) {
    const std::string path = where + "." + key;
    try {
      if (key == "kind") {
        const auto s = value.get<std::string>();
        if (s == "Tabular") c.kind = ApproximatorKind::Tabular;
        else if (s == "TinyMLP") c.kind = ApproximatorKind::TinyMLP;
        else throw ConfigError(path, "expected Tabular or TinyMLP");
      } else if (key == "hidden") {
        c.hidden = value.get<std::vector<int>>();
      } else if (key == "learning_rate") {
        c.learning_rate = value.get<double>();
      } else if (key == "entropy_coef") {
        c.entropy_coef = value.get<double>();
      } else if (key == "value_coef") {
        c.value_coef = value.get<double>();
      } else if (key == "gamma") {
        c.gamma = value.get<double>();
      } else if (key == "n_step") {
        c.n_step = value.get<int>();
      } else if (key == "max_grad_norm") {
        c.max_grad_norm = value.get<double>();
      } else if (key == "optimizer") {
        const auto s = value.get<std::string>();
        if (s == "SGD") c.optimizer = OptimizerKind::SGD;
        else if (s == "RMSprop") c.optimizer = OptimizerKind::RMSprop;
        else throw ConfigError(path, "expected SGD or RMSprop");
      } else if (key == "rmsprop_alpha") {
        c.rmsprop_alpha = value.get<double>();
      } else if (key == "rmsprop_eps") {
        c.rmsprop_eps = value.get<double>();
      } else if (key == "extrinsic_head") {
        const auto s = value.get<std::string>();
        if (s == "SharedTrunkStopGrad") c.extrinsic_head = ExtrinsicHead::SharedTrunkStopGrad;
        else if (s == "SeparateNetwork") c.extrinsic_head = ExtrinsicHead::SeparateNetwork;
        else throw ConfigError(path, "expected SharedTrunkStopGrad or SeparateNetwork");
      } else if (key == "init_seed") {
        c.init_seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError(path, "unknown field");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path, "wrong type");
    }
  }
  if (c.learning_rate <= 0.0) throw ConfigError(where + ".learning_rate", "must be positive");
  if (c.gamma < 0.0 || c.gamma > 1.0) throw ConfigError(where + ".gamma", "must lie in [0, 1]");
  if (c.n_step < 1) throw ConfigError(where + ".n_step", "must be >= 1");
  if (c.entropy_coef < 0.0 || c.value_coef < 0.0) throw ConfigError(where, "coefficients must be >= 0");
  return c;
}

/// 64-bit FNV-1a, used to fingerprint configs in checkpoints and manifests.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const AgentConfig& c) { return hex64(fnv1a64(agent_config_to_json(c).dump())); }

namespace detail {

inline std::string to_hex(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 15]);
  }
  return out;
}

inline std::string from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw ConfigError("table_keys", "odd-length hex key");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw ConfigError("table_keys", "invalid hex digit");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
  }
  return out;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const ApproximatorParams& p) {
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& k : p.table_keys()) keys.push_back(detail::to_hex(k));
  const auto w = p.weights();
  return {{"format", "vcse-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", agent_config_to_json(p.config())},
          {"config_hash", config_hash(p.config())},
          {"obs_mode", std::string(gridworld::obs_mode_str(p.obs_mode()))},
          {"input_size", p.input_size()},
          {"weights", std::vector<double>(w.begin(), w.end())},
          {"optimizer_state", p.optimizer_state()},
          {"table_keys", keys}};
}

inline ApproximatorParams checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "vcse-checkpoint") throw ConfigError("format", "not a checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw ConfigError("version", "unsupported checkpoint version");
  const AgentConfig cfg = agent_config_from_json(j.at("config"), "config");
  if (j.at("config_hash").get<std::string>() != config_hash(cfg)) {
    throw ConfigError("config_hash", "does not match the stored config");
  }
  const auto mode = gridworld::parse_obs_mode(j.at("obs_mode").get<std::string>());
  if (!mode) throw ConfigError("obs_mode", "unknown observation mode");
  ApproximatorParams p(cfg, *mode, j.at("input_size").get<std::size_t>());
  auto weights = j.at("weights").get<std::vector<double>>();
  auto opt = j.at("optimizer_state").get<std::vector<double>>();
  if (p.tabular()) {
    std::vector<std::string> keys;
    for (const auto& k : j.at("table_keys")) keys.push_back(detail::from_hex(k.get<std::string>()));
    p.restore_table(keys, std::move(weights), std::move(opt));
  } else {
    p.restore_dense(std::move(weights), std::move(opt));
  }
  return p;
}

inline void save_checkpoint(const ApproximatorParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_json(p).dump() << '\n';
}

inline ApproximatorParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace vcse::agent
