#pragma once

// Discrete-event network simulator. Miners race as independent exponential
// clocks on top of their node's tip; blocks reach other nodes after the
// configured propagation delay; each node validates timestamps against its own
// skewed clock and follows the most-work chain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "powtime/analytic.hpp"
#include "powtime/chain.hpp"
#include "powtime/rng.hpp"
#include "powtime/sim_config.hpp"

namespace powtime {

struct TipRecord {
  double at = 0.0;
  std::uint32_t node = 0;
  BlockId new_tip;
  std::uint64_t reorg_depth = 0;
};

struct RejectionRecord {
  double at = 0.0;
  std::uint32_t node = 0;
  BlockId block;
  TimestampRejection reason = TimestampRejection::kNotAfterMedianPast;
};

// Sibling blocks sharing one parent.
struct ForkEpisode {
  double window_start = 0.0;
  BlockId parent;
  std::vector<BlockId> competitors;  // by discovery time
  std::optional<BlockId> winner;     // empty: no competitor on the final canonical chain
};

struct DifficultyRecord {
  std::uint64_t height = 0;
  double difficulty = 0.0;
};

struct ClockWarning {
  std::uint32_t node = 0;
  double deviation = 0.0;  // node offset minus network median offset
};

struct SimTrace {
  SimConfig config;
  std::vector<Block> blocks;  // indexed by id, stale blocks included
  std::vector<double> cumulative_work;
  std::vector<TipRecord> tip_changes;
  std::vector<RejectionRecord> rejections;
  std::vector<ForkEpisode> forks;
  std::vector<DifficultyRecord> difficulty;
  std::vector<ClockWarning> warnings;
  std::vector<BlockId> canonical;   // genesis..tip at node 0
  std::vector<BlockId> final_tips;  // per node
  double end_time = 0.0;

  const Block& block(BlockId id) const { return blocks.at(id.value); }
  std::uint64_t canonical_height() const { return canonical.size() - 1; }
  std::size_t canonical_block_count() const { return canonical.size() - 1; }

  bool converged() const {
    return std::all_of(final_tips.begin(), final_tips.end(),
                       [&](BlockId t) { return t == final_tips.front(); });
  }

  std::uint64_t max_reorg_depth() const {
    std::uint64_t m = 0;
    for (const auto& r : tip_changes) m = std::max(m, r.reorg_depth);
    return m;
  }
};

class Simulator {
 public:
  explicit Simulator(SimConfig config) : cfg_(std::move(config)), rng_(cfg_.seed) {
    cfg_.validate();
    hashrate_ = cfg_.nominal_hashrate.value();
  }

  SimTrace run() {
    setup();
    if (cfg_.script.empty()) {
      for (std::size_t m = 0; m < cfg_.miners.size(); ++m) resample(m, 0.0);
    } else {
      for (const auto& s : cfg_.script) push(Event{s.at, 0, EventKind::kFound, s.miner, {}, 0, true});
    }
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      queue_.pop();
      if (!stopping_ && std::holds_alternative<StopAtDuration>(cfg_.stop) &&
          ev.at > std::get<StopAtDuration>(cfg_.stop).seconds) {
        stopping_ = true;
      }
      now_ = ev.at;
      if (ev.kind == EventKind::kFound) {
        on_block_found(ev);
      } else {
        --pending_deliveries_;
        on_block_delivered(ev.actor, ev.block, ev.at);
      }
      if (!stopping_ && cfg_.script.empty()) {
        if (const auto* b = std::get_if<StopAtBlocks>(&cfg_.stop); b && stores_[0].tip_block().height >= b->blocks) {
          stopping_ = true;
        }
      }
      if (stopping_ && quiescent()) break;
    }
    return finish();
  }

 private:
  enum class EventKind : std::uint8_t { kFound, kDelivered };

  struct Event {
    double at;
    std::uint64_t seq;
    EventKind kind;
    std::uint32_t actor;  // miner for kFound, node for kDelivered
    BlockId block;        // parent at scheduling time for kFound, payload for kDelivered
    std::uint64_t generation;
    bool scripted;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };

  void setup() {
    const Block genesis = make_genesis(cfg_.initial_difficulty);
    blocks_.push_back(genesis);
    work_.push_back(genesis.difficulty.value());
    const std::uint32_t n = cfg_.node_count();
    stores_.assign(n, ChainStore(genesis));
    orphans_.assign(n, OrphanPool{});
    miners_at_node_.assign(n, {});
    for (std::size_t m = 0; m < cfg_.miners.size(); ++m) miners_at_node_[cfg_.node_of(m)].push_back(m);
    generation_.assign(cfg_.miners.size(), 0);
    steps_applied_.assign(cfg_.hashrate_schedule.size(), false);
    record_clock_warnings();
  }

  // Advisory only: nodes whose clock strays from the median offset by more than the threshold.
  void record_clock_warnings() {
    const std::uint32_t n = cfg_.node_count();
    std::vector<double> offsets(n);
    for (std::uint32_t i = 0; i < n; ++i) offsets[i] = cfg_.node_clock_offset(i);
    std::vector<double> sorted = offsets;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[(n - 1) / 2];
    for (std::uint32_t i = 0; i < n; ++i) {
      const double dev = offsets[i] - median;
      if (std::abs(dev) > static_cast<double>(cfg_.rules.clock_warning_threshold)) {
        warnings_.push_back({i, dev});
      }
    }
  }

  void push(Event ev) {
    ev.seq = next_seq_++;
    queue_.push(ev);
  }

  std::int64_t local_clock(double offset, double at) const {
    return static_cast<std::int64_t>(std::floor(at + offset));
  }

  void resample(std::size_t miner, double at) {
    const std::uint64_t gen = ++generation_[miner];
    if (!cfg_.script.empty()) return;
    const ChainStore& store = stores_[cfg_.node_of(miner)];
    const Difficulty d = next_difficulty(store, store.tip(), cfg_.rules, cfg_.retarget_enabled);
    const double rate = cfg_.miners[miner].hashrate_share * hashrate_ * theta_from_difficulty(d).value();
    push(Event{at + rng_.exponential(rate), 0, EventKind::kFound, static_cast<std::uint32_t>(miner),
               store.tip(), gen, false});
  }

  void on_block_found(const Event& ev) {
    const std::size_t miner = ev.actor;
    if (!ev.scripted && ev.generation != generation_[miner]) return;  // cancelled by a tip change
    const std::uint32_t node = cfg_.node_of(miner);
    ChainStore& store = stores_[node];
    const BlockId parent = store.tip();

    const MinerSpec& spec = cfg_.miners[miner];
    std::int64_t stamp = local_clock(spec.clock_offset, ev.at);
    if (const auto* skew = std::get_if<FixedSkewTimestamps>(&spec.timestamp_strategy)) {
      stamp = local_clock(spec.clock_offset + skew->skew, ev.at);
    }
    stamp = std::max(stamp, median_past_time(store, parent, cfg_.rules.mpt_window) + 1);

    Block block{BlockId{blocks_.size()}, parent, store.get(parent).height + 1, static_cast<std::int32_t>(miner),
                stamp, next_difficulty(store, parent, cfg_.rules, cfg_.retarget_enabled), ev.at};
    blocks_.push_back(block);
    work_.push_back(work_[parent.value] + block.difficulty.value());

    const bool rate_changed = apply_hashrate_schedule(block.height);
    const bool own_tip_moved = accept(node, block, ev.at);
    for (std::uint32_t other = 0; other < stores_.size(); ++other) {
      if (other == node) continue;
      ++pending_deliveries_;
      push(Event{ev.at + cfg_.delay.delay(node, other), 0, EventKind::kDelivered, other, block.id, 0, false});
    }
    if (rate_changed) {
      for (std::size_t m = 0; m < cfg_.miners.size(); ++m) resample(m, ev.at);
    } else if (!own_tip_moved) {
      resample(miner, ev.at);  // the consumed draw must be replaced even if the tip stayed
    }
  }

  bool apply_hashrate_schedule(std::uint64_t height) {
    bool changed = false;
    for (std::size_t i = 0; i < cfg_.hashrate_schedule.size(); ++i) {
      if (!steps_applied_[i] && height >= cfg_.hashrate_schedule[i].at_height) {
        steps_applied_[i] = true;
        hashrate_ *= cfg_.hashrate_schedule[i].multiplier;
        changed = true;
      }
    }
    return changed;
  }

  void on_block_delivered(std::uint32_t node, BlockId id, double at) { accept(node, blocks_[id.value], at); }

  // Validates and stores a block (and any orphans it unblocks) at one node.
  // Returns whether the node's tip moved; attached miners are re-anchored if so.
  bool accept(std::uint32_t node, const Block& block, double at) {
    ChainStore& store = stores_[node];
    if (store.contains(block.id)) return false;
    if (!store.contains(block.parent)) {
      orphans_[node].add(block);
      return false;
    }
    const BlockId before = store.tip();
    std::vector<Block> ready{block};
    while (!ready.empty()) {
      const Block b = ready.back();
      ready.pop_back();
      const double offset = cfg_.node_clock_offset(node);
      const TimestampVerdict verdict = validate_timestamp(b, store, local_clock(offset, at), cfg_.rules);
      if (!verdict.accepted()) {
        rejections_.push_back({at, node, b.id, *verdict.rejection});
        if (*verdict.rejection == TimestampRejection::kTooFarInFuture) schedule_retry(node, b, offset);
        continue;
      }
      const TipChange change = store.insert(b);
      if (change.moved()) tip_changes_.push_back({at, node, change.new_tip, change.reorg_depth});
      for (Block& child : orphans_[node].take_children(b.id)) ready.push_back(std::move(child));
    }
    if (store.tip() == before) return false;
    for (std::size_t m : miners_at_node_[node]) resample(m, at);
    return true;
  }

  // A future-dated block is offered again once the node's clock admits it.
  void schedule_retry(std::uint32_t node, const Block& b, double offset) {
    double when = static_cast<double>(b.timestamp - cfg_.rules.max_future_offset) - offset;
    while (local_clock(offset, when) + cfg_.rules.max_future_offset < b.timestamp) {
      when = std::nextafter(when, INFINITY);
    }
    when = std::max(when, now_);
    ++pending_deliveries_;
    push(Event{when, 0, EventKind::kDelivered, node, b.id, 0, false});
  }

  bool quiescent() const {
    if (pending_deliveries_ != 0) return false;
    const BlockId tip = stores_[0].tip();
    return std::all_of(stores_.begin(), stores_.end(), [&](const ChainStore& s) { return s.tip() == tip; });
  }

  SimTrace finish() {
    SimTrace t;
    t.config = cfg_;
    t.end_time = now_;
    t.canonical = stores_[0].canonical_path();
    for (const auto& s : stores_) t.final_tips.push_back(s.tip());

    std::vector<std::vector<BlockId>> children(blocks_.size());
    for (std::size_t i = 1; i < blocks_.size(); ++i) children[blocks_[i].parent.value].push_back(blocks_[i].id);
    std::vector<bool> on_canonical(blocks_.size(), false);
    for (BlockId id : t.canonical) on_canonical[id.value] = true;
    for (std::size_t p = 0; p < children.size(); ++p) {
      if (children[p].size() < 2) continue;
      ForkEpisode ep;
      ep.parent = BlockId{p};
      ep.competitors = children[p];
      std::stable_sort(ep.competitors.begin(), ep.competitors.end(), [&](BlockId a, BlockId b) {
        return blocks_[a.value].found_at < blocks_[b.value].found_at;
      });
      ep.window_start = blocks_[ep.competitors.front().value].found_at;
      for (BlockId c : ep.competitors) {
        if (on_canonical[c.value]) ep.winner = c;
      }
      t.forks.push_back(std::move(ep));
    }
    std::sort(t.forks.begin(), t.forks.end(), [](const ForkEpisode& a, const ForkEpisode& b) {
      return a.window_start < b.window_start;
    });

    const std::uint32_t interval = cfg_.rules.retarget_interval;
    for (BlockId id : t.canonical) {
      const Block& b = blocks_[id.value];
      if (b.height == 0 || (b.height > 1 && (b.height - 1) % interval == 0)) {
        t.difficulty.push_back({b.height, b.difficulty.value()});
      }
    }

    t.blocks = std::move(blocks_);
    t.cumulative_work = std::move(work_);
    t.tip_changes = std::move(tip_changes_);
    t.rejections = std::move(rejections_);
    t.warnings = std::move(warnings_);
    return t;
  }

  SimConfig cfg_;
  Rng rng_;
  double hashrate_ = 0.0;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t pending_deliveries_ = 0;
  bool stopping_ = false;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<Block> blocks_;
  std::vector<double> work_;
  std::vector<ChainStore> stores_;
  std::vector<OrphanPool> orphans_;
  std::vector<std::vector<std::size_t>> miners_at_node_;
  std::vector<std::uint64_t> generation_;
  std::vector<bool> steps_applied_;
  std::vector<TipRecord> tip_changes_;
  std::vector<RejectionRecord> rejections_;
  std::vector<ClockWarning> warnings_;
};

inline SimTrace run(const SimConfig& config) { return Simulator(config).run(); }

}  // namespace powtime
