#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "powtime/analytic.hpp"
#include "powtime/chain.hpp"

namespace powtime {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HonestTimestamps {};
struct FixedSkewTimestamps {
  double skew = 0.0;  // seconds added to the miner's local clock
};
using TimestampStrategy = std::variant<HonestTimestamps, FixedSkewTimestamps>;

struct MinerSpec {
  std::string id;
  double hashrate_share = 1.0;
  double clock_offset = 0.0;
  TimestampStrategy timestamp_strategy = HonestTimestamps{};
  std::optional<std::uint32_t> node;  // defaults to the miner's index
};

// Propagation delay between nodes, seconds.
class DelayModel {
 public:
  static DelayModel fixed(double tau) {
    DelayModel m;
    m.fixed_ = tau;
    return m;
  }
  static DelayModel per_pair(std::vector<std::vector<double>> matrix) {
    DelayModel m;
    m.matrix_ = std::move(matrix);
    return m;
  }

  bool is_fixed() const { return matrix_.empty(); }
  const std::vector<std::vector<double>>& matrix() const { return matrix_; }
  double fixed_delay() const { return fixed_; }

  double delay(std::uint32_t from, std::uint32_t to) const {
    if (from == to) return 0.0;
    return is_fixed() ? fixed_ : matrix_.at(from).at(to);
  }

  // Largest off-diagonal delay.
  double max_delay() const {
    if (is_fixed()) return fixed_;
    double m = 0.0;
    for (std::size_t i = 0; i < matrix_.size(); ++i) {
      for (std::size_t j = 0; j < matrix_[i].size(); ++j) {
        if (i != j) m = std::max(m, matrix_[i][j]);
      }
    }
    return m;
  }

  void validate(std::uint32_t nodes) const {
    if (is_fixed()) {
      if (!(fixed_ >= 0.0) || !std::isfinite(fixed_)) throw ConfigError("delay must be nonnegative");
      return;
    }
    if (matrix_.size() != nodes) throw ConfigError("per_pair delay matrix must have one row per node");
    for (const auto& row : matrix_) {
      if (row.size() != nodes) throw ConfigError("per_pair delay matrix must be square");
      for (double d : row) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("delays must be nonnegative");
      }
    }
  }

 private:
  double fixed_ = 0.0;
  std::vector<std::vector<double>> matrix_;
};

struct StopAtBlocks {
  std::uint64_t blocks = 0;  // canonical height at node 0
};
struct StopAtDuration {
  double seconds = 0.0;
};
using StopCondition = std::variant<StopAtBlocks, StopAtDuration>;

// Multiplies the nominal hash rate once the first block at `at_height` is found.
struct HashrateStep {
  std::uint64_t at_height = 0;
  double multiplier = 1.0;
};

// Forced discovery; when a script is present, random mining is disabled.
struct ScriptedDiscovery {
  double at = 0.0;
  std::uint32_t miner = 0;
};

struct SimConfig {
  std::vector<MinerSpec> miners;
  std::uint32_t nodes = 0;  // 0 means one node per miner
  std::vector<double> node_clock_offsets;
  DelayModel delay = DelayModel::fixed(0.0);
  ConsensusRules rules;
  Difficulty initial_difficulty{1.0};
  HashRate nominal_hashrate{kHashesPerUnitDifficulty / 600.0};
  StopCondition stop = StopAtBlocks{1000};
  std::uint64_t seed = 1;
  bool retarget_enabled = false;
  std::vector<HashrateStep> hashrate_schedule;
  std::vector<ScriptedDiscovery> script;

  std::uint32_t node_count() const {
    return nodes != 0 ? nodes : static_cast<std::uint32_t>(miners.size());
  }

  std::uint32_t node_of(std::size_t miner) const {
    return miners[miner].node.value_or(static_cast<std::uint32_t>(miner));
  }

  // Validator clock offset: explicit per-node value, else the first attached miner's, else 0.
  double node_clock_offset(std::uint32_t node) const {
    if (!node_clock_offsets.empty()) return node_clock_offsets.at(node);
    for (std::size_t i = 0; i < miners.size(); ++i) {
      if (node_of(i) == node) return miners[i].clock_offset;
    }
    return 0.0;
  }

  // True arrival rate at the initial difficulty and nominal hash rate.
  ArrivalRate initial_arrival_rate() const {
    return arrival_rate(nominal_hashrate, theta_from_difficulty(initial_difficulty));
  }

  void validate() const {
    if (miners.empty()) throw ConfigError("at least one miner is required");
    const std::uint32_t n = node_count();
    double share_sum = 0.0;
    for (std::size_t i = 0; i < miners.size(); ++i) {
      const auto& m = miners[i];
      if (!(m.hashrate_share > 0.0 && m.hashrate_share <= 1.0)) {
        throw ConfigError("miner " + m.id + ": hashrate_share must lie in (0, 1]");
      }
      if (!std::isfinite(m.clock_offset)) throw ConfigError("miner " + m.id + ": bad clock_offset");
      if (node_of(i) >= n) throw ConfigError("miner " + m.id + ": node index out of range");
      share_sum += m.hashrate_share;
    }
    if (std::abs(share_sum - 1.0) > 1e-9) throw ConfigError("miner hashrate shares must sum to 1");
    if (!node_clock_offsets.empty() && node_clock_offsets.size() != n) {
      throw ConfigError("node_clock_offsets must have one entry per node");
    }
    delay.validate(n);
    try {
      rules.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("rules: ") + e.what());
    }
    if (const auto* b = std::get_if<StopAtBlocks>(&stop); b && b->blocks == 0) {
      throw ConfigError("stop block count must be positive");
    }
    if (const auto* d = std::get_if<StopAtDuration>(&stop); d && !(d->seconds > 0.0)) {
      throw ConfigError("stop duration must be positive");
    }
    for (const auto& step : hashrate_schedule) {
      if (!(step.multiplier > 0.0) || step.at_height == 0) {
        throw ConfigError("hashrate steps need a positive height and multiplier");
      }
    }
    for (const auto& s : script) {
      if (s.miner >= miners.size()) throw ConfigError("script references an unknown miner");
      if (!(s.at >= 0.0)) throw ConfigError("script times must be nonnegative");
    }
  }
};

}  // namespace powtime
