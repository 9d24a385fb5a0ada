#pragma once

// SimConfig <-> JSON. Schema (all keys except "miners" optional):
//
//   {
//     "miners": [{"id": "a", "hashrate_share": 0.5, "clock_offset": 0,
//                 "timestamp_strategy": "honest" | {"fixed_skew": 7000},
//                 "node": 0}],
//     "nodes": 3,
//     "node_clock_offsets": [0, 0, 0],
//     "delay": {"fixed": 60} | {"per_pair": [[0, 1], [1, 0]]},
//     "rules": {"max_future_offset": 7200, "mpt_window": 11,
//               "retarget_interval": 2016, "target_spacing": 600,
//               "retarget_clamp": 4, "clock_warning_threshold": 600},
//     "initial_difficulty": 1,
//     "nominal_hashrate": 7158278.826666667,
//     "stop": {"blocks": 1000} | {"duration": 86400},
//     "seed": 42,
//     "retarget_enabled": false,
//     "hashrate_schedule": [{"at_height": 2016, "multiplier": 2}],
//     "script": [{"at": 100.0, "miner": 0}]
//   }

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "powtime/sim_config.hpp"

namespace powtime {

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

inline TimestampStrategy parse_strategy(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "honest") return HonestTimestamps{};
    throw ConfigError("unknown timestamp_strategy \"" + j.get<std::string>() + "\"");
  }
  if (j.is_object() && j.contains("fixed_skew")) return FixedSkewTimestamps{j.at("fixed_skew").get<double>()};
  throw ConfigError("timestamp_strategy must be \"honest\" or {\"fixed_skew\": seconds}");
}

}  // namespace detail

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    SimConfig c;
    if (!j.contains("miners") || !j.at("miners").is_array()) throw ConfigError("config needs a \"miners\" array");
    for (std::size_t i = 0; i < j.at("miners").size(); ++i) {
      const auto& mj = j.at("miners")[i];
      MinerSpec m;
      m.id = detail::get_or<std::string>(mj, "id", "m" + std::to_string(i));
      m.hashrate_share = mj.at("hashrate_share").get<double>();
      m.clock_offset = detail::get_or(mj, "clock_offset", 0.0);
      if (mj.contains("timestamp_strategy")) m.timestamp_strategy = detail::parse_strategy(mj.at("timestamp_strategy"));
      if (mj.contains("node")) m.node = mj.at("node").get<std::uint32_t>();
      c.miners.push_back(std::move(m));
    }
    c.nodes = detail::get_or<std::uint32_t>(j, "nodes", 0);
    c.node_clock_offsets = detail::get_or(j, "node_clock_offsets", std::vector<double>{});
    if (j.contains("delay")) {
      const auto& d = j.at("delay");
      if (d.is_number()) {
        c.delay = DelayModel::fixed(d.get<double>());
      } else if (d.contains("fixed")) {
        c.delay = DelayModel::fixed(d.at("fixed").get<double>());
      } else if (d.contains("per_pair")) {
        c.delay = DelayModel::per_pair(d.at("per_pair").get<std::vector<std::vector<double>>>());
      } else {
        throw ConfigError("delay must be {\"fixed\": tau} or {\"per_pair\": matrix}");
      }
    }
    if (j.contains("rules")) {
      const auto& r = j.at("rules");
      c.rules.max_future_offset = detail::get_or(r, "max_future_offset", c.rules.max_future_offset);
      c.rules.mpt_window = detail::get_or(r, "mpt_window", c.rules.mpt_window);
      c.rules.retarget_interval = detail::get_or(r, "retarget_interval", c.rules.retarget_interval);
      c.rules.target_spacing = detail::get_or(r, "target_spacing", c.rules.target_spacing);
      c.rules.retarget_clamp = detail::get_or(r, "retarget_clamp", c.rules.retarget_clamp);
      c.rules.clock_warning_threshold = detail::get_or(r, "clock_warning_threshold", c.rules.clock_warning_threshold);
    }
    c.initial_difficulty = Difficulty(detail::get_or(j, "initial_difficulty", 1.0));
    c.nominal_hashrate = HashRate(detail::get_or(j, "nominal_hashrate", kHashesPerUnitDifficulty / 600.0));
    if (j.contains("stop")) {
      const auto& s = j.at("stop");
      if (s.contains("blocks")) {
        c.stop = StopAtBlocks{s.at("blocks").get<std::uint64_t>()};
      } else if (s.contains("duration")) {
        c.stop = StopAtDuration{s.at("duration").get<double>()};
      } else {
        throw ConfigError("stop must be {\"blocks\": n} or {\"duration\": seconds}");
      }
    }
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
    c.retarget_enabled = detail::get_or(j, "retarget_enabled", false);
    for (const auto& s : detail::get_or(j, "hashrate_schedule", nlohmann::json::array())) {
      c.hashrate_schedule.push_back({s.at("at_height").get<std::uint64_t>(), s.at("multiplier").get<double>()});
    }
    for (const auto& s : detail::get_or(j, "script", nlohmann::json::array())) {
      c.script.push_back({s.at("at").get<double>(), s.at("miner").get<std::uint32_t>()});
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return sim_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const SimConfig& c) {
  nlohmann::json j;
  j["miners"] = nlohmann::json::array();
  for (const auto& m : c.miners) {
    nlohmann::json mj{{"id", m.id}, {"hashrate_share", m.hashrate_share}, {"clock_offset", m.clock_offset}};
    if (const auto* s = std::get_if<FixedSkewTimestamps>(&m.timestamp_strategy)) {
      mj["timestamp_strategy"] = {{"fixed_skew", s->skew}};
    } else {
      mj["timestamp_strategy"] = "honest";
    }
    if (m.node) mj["node"] = *m.node;
    j["miners"].push_back(mj);
  }
  j["nodes"] = c.node_count();
  if (!c.node_clock_offsets.empty()) j["node_clock_offsets"] = c.node_clock_offsets;
  if (c.delay.is_fixed()) {
    j["delay"] = {{"fixed", c.delay.fixed_delay()}};
  } else {
    j["delay"] = {{"per_pair", c.delay.matrix()}};
  }
  j["rules"] = {{"max_future_offset", c.rules.max_future_offset},
                {"mpt_window", c.rules.mpt_window},
                {"retarget_interval", c.rules.retarget_interval},
                {"target_spacing", c.rules.target_spacing},
                {"retarget_clamp", c.rules.retarget_clamp},
                {"clock_warning_threshold", c.rules.clock_warning_threshold}};
  j["initial_difficulty"] = c.initial_difficulty.value();
  j["nominal_hashrate"] = c.nominal_hashrate.value();
  if (const auto* b = std::get_if<StopAtBlocks>(&c.stop)) {
    j["stop"] = {{"blocks", b->blocks}};
  } else {
    j["stop"] = {{"duration", std::get<StopAtDuration>(c.stop).seconds}};
  }
  j["seed"] = c.seed;
  j["retarget_enabled"] = c.retarget_enabled;
  j["hashrate_schedule"] = nlohmann::json::array();
  for (const auto& s : c.hashrate_schedule) j["hashrate_schedule"].push_back({{"at_height", s.at_height}, {"multiplier", s.multiplier}});
  j["script"] = nlohmann::json::array();
  for (const auto& s : c.script) j["script"].push_back({{"at", s.at}, {"miner", s.miner}});
  return j;
}

}  // namespace powtime
