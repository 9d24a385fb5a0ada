#pragma once

// Block tree storage with most-work tip selection, consensus timestamp
// checks (median past time, future bound) and the epoch retarget rule.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "powtime/csv.hpp"
#include "powtime/units.hpp"

namespace powtime {

struct BlockId {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(BlockId, BlockId) = default;
};

inline constexpr BlockId kGenesisId{0};
inline constexpr std::int32_t kNoMiner = -1;

struct Block {
  BlockId id;
  BlockId parent;
  std::uint64_t height = 0;
  std::int32_t miner = kNoMiner;
  std::int64_t timestamp = 0;  // consensus timestamp, miner supplied
  Difficulty difficulty{1.0};
  double found_at = 0.0;  // ground-truth discovery instant, not consensus data
};

inline Block make_genesis(Difficulty difficulty, std::int64_t timestamp = 0) {
  return Block{kGenesisId, kGenesisId, 0, kNoMiner, timestamp, difficulty, 0.0};
}

struct ConsensusRules {
  std::int64_t max_future_offset = 7200;
  std::uint32_t mpt_window = 11;
  std::uint32_t retarget_interval = 2016;
  double target_spacing = 600.0;
  double retarget_clamp = 4.0;
  // Local clock deviation from network-adjusted time that triggers an advisory.
  std::int64_t clock_warning_threshold = 600;

  void validate() const {
    detail::require(max_future_offset > 0, "max_future_offset must be positive");
    detail::require(mpt_window > 0, "mpt_window must be positive");
    detail::require(retarget_interval > 0, "retarget_interval must be positive");
    detail::require(target_spacing > 0.0, "target_spacing must be positive");
    detail::require(retarget_clamp >= 1.0, "retarget_clamp must be at least 1");
    detail::require(clock_warning_threshold > 0, "clock_warning_threshold must be positive");
  }
};

class ChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownBlockError : public ChainError {
 public:
  explicit UnknownBlockError(BlockId id)
      : ChainError("unknown block " + std::to_string(id.value)) {}
};

class OrphanBlockError : public ChainError {
 public:
  explicit OrphanBlockError(const Block& b)
      : ChainError("block " + std::to_string(b.id.value) + " has unknown parent " +
                   std::to_string(b.parent.value)) {}
};

class DuplicateBlockError : public ChainError {
 public:
  explicit DuplicateBlockError(BlockId id)
      : ChainError("block " + std::to_string(id.value) + " already stored") {}
};

struct TipChange {
  BlockId old_tip;
  BlockId new_tip;
  std::uint64_t reorg_depth = 0;  // blocks discarded from the old canonical path

  bool moved() const { return old_tip != new_tip; }
};

// One node's view of the block tree.
class ChainStore {
 public:
  explicit ChainStore(const Block& genesis) : tip_(genesis.id) {
    detail::require(genesis.height == 0, "genesis must have height 0");
    entries_.emplace(genesis.id.value, Entry{genesis, genesis.difficulty.value(), next_seen_++});
  }

  bool contains(BlockId id) const { return entries_.contains(id.value); }
  std::size_t size() const { return entries_.size(); }
  BlockId tip() const { return tip_; }
  const Block& tip_block() const { return get(tip_); }

  const Block& get(BlockId id) const { return entry(id).block; }
  double cumulative_work(BlockId id) const { return entry(id).work; }
  std::uint64_t first_seen(BlockId id) const { return entry(id).seen; }

  // Stores a block and re-selects the tip: most cumulative work, earliest first-seen on ties.
  TipChange insert(const Block& block) {
    if (contains(block.id)) throw DuplicateBlockError(block.id);
    const auto parent = entries_.find(block.parent.value);
    if (parent == entries_.end()) throw OrphanBlockError(block);
    if (block.height != parent->second.block.height + 1) {
      throw ChainError("block " + std::to_string(block.id.value) + " height does not follow parent");
    }
    const double work = parent->second.work + block.difficulty.value();
    entries_.emplace(block.id.value, Entry{block, work, next_seen_++});

    TipChange change{tip_, tip_, 0};
    if (work > entry(tip_).work) {
      const BlockId old = tip_;
      tip_ = block.id;
      change.new_tip = tip_;
      const BlockId common = fork_point(old, tip_);
      if (common != old) change.reorg_depth = get(old).height - get(common).height;
    }
    return change;
  }

  BlockId ancestor_at_height(BlockId id, std::uint64_t height) const {
    const Entry* e = &entry(id);
    if (height > e->block.height) throw ChainError("ancestor height above block height");
    while (e->block.height > height) e = &entry(e->block.parent);
    return e->block.id;
  }

  // Deepest common ancestor.
  BlockId fork_point(BlockId a, BlockId b) const {
    const Entry* ea = &entry(a);
    const Entry* eb = &entry(b);
    while (ea->block.height > eb->block.height) ea = &entry(ea->block.parent);
    while (eb->block.height > ea->block.height) eb = &entry(eb->block.parent);
    while (ea->block.id != eb->block.id) {
      ea = &entry(ea->block.parent);
      eb = &entry(eb->block.parent);
    }
    return ea->block.id;
  }

  bool is_ancestor(BlockId ancestor, BlockId descendant) const {
    const auto h = get(ancestor).height;
    if (h > get(descendant).height) return false;
    return ancestor_at_height(descendant, h) == ancestor;
  }

  // Genesis-to-tip path.
  std::vector<BlockId> canonical_path() const { return path_to(tip_); }

  std::vector<BlockId> path_to(BlockId id) const {
    std::vector<BlockId> path;
    const Entry* e = &entry(id);
    path.reserve(e->block.height + 1);
    while (true) {
      path.push_back(e->block.id);
      if (e->block.height == 0) break;
      e = &entry(e->block.parent);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  // Blocks in first-seen order.
  std::vector<const Block*> blocks_by_arrival() const {
    std::vector<const Entry*> all;
    all.reserve(entries_.size());
    for (const auto& [_, e] : entries_) all.push_back(&e);
    std::sort(all.begin(), all.end(), [](const Entry* x, const Entry* y) { return x->seen < y->seen; });
    std::vector<const Block*> out;
    out.reserve(all.size());
    for (const Entry* e : all) out.push_back(&e->block);
    return out;
  }

 private:
  struct Entry {
    Block block;
    double work;
    std::uint64_t seen;
  };

  const Entry& entry(BlockId id) const {
    const auto it = entries_.find(id.value);
    if (it == entries_.end()) throw UnknownBlockError(id);
    return it->second;
  }

  std::unordered_map<std::uint64_t, Entry> entries_;
  BlockId tip_;
  std::uint64_t next_seen_ = 0;
};

inline TipChange insert_block(ChainStore& store, const Block& block) { return store.insert(block); }

inline BlockId fork_point(const ChainStore& store, BlockId a, BlockId b) {
  return store.fork_point(a, b);
}

// Median of the last min(window, available) timestamps ending at `parent`.
// Even counts take the lower-middle element.
inline std::int64_t median_past_time(const ChainStore& store, BlockId parent, std::uint32_t window) {
  detail::require(window > 0, "median window must be positive");
  std::vector<std::int64_t> stamps;
  stamps.reserve(window);
  const Block* b = &store.get(parent);
  while (true) {
    stamps.push_back(b->timestamp);
    if (stamps.size() == window || b->height == 0) break;
    b = &store.get(b->parent);
  }
  const auto mid = stamps.begin() + static_cast<std::ptrdiff_t>((stamps.size() - 1) / 2);
  std::nth_element(stamps.begin(), mid, stamps.end());
  return *mid;
}

enum class TimestampRejection { kNotAfterMedianPast, kTooFarInFuture };

inline const char* to_string(TimestampRejection r) {
  switch (r) {
    case TimestampRejection::kNotAfterMedianPast:
      return "mpt";
    case TimestampRejection::kTooFarInFuture:
      return "future";
  }
  return "unknown";
}

struct TimestampVerdict {
  std::optional<TimestampRejection> rejection;

  bool accepted() const { return !rejection.has_value(); }
};

// Accept iff MPT < timestamp <= local_clock + max_future_offset.
// Throws OrphanBlockError when the parent is not stored.
inline TimestampVerdict validate_timestamp(const Block& block, const ChainStore& store,
                                           std::int64_t local_clock, const ConsensusRules& rules) {
  if (!store.contains(block.parent)) throw OrphanBlockError(block);
  if (block.timestamp <= median_past_time(store, block.parent, rules.mpt_window)) {
    return {TimestampRejection::kNotAfterMedianPast};
  }
  if (block.timestamp > local_clock + rules.max_future_offset) {
    return {TimestampRejection::kTooFarInFuture};
  }
  return {};
}

// Scales difficulty by expected_span / actual_span, clamped to [1/clamp, clamp].
// A nonpositive span takes the maximum upward step.
inline Difficulty retarget(Difficulty d, std::int64_t first_ts, std::int64_t last_ts,
                           const ConsensusRules& rules) {
  const double expected = static_cast<double>(rules.retarget_interval) * rules.target_spacing;
  const double actual = static_cast<double>(last_ts - first_ts);
  double ratio = actual > 0.0 ? expected / actual : rules.retarget_clamp;
  ratio = std::clamp(ratio, 1.0 / rules.retarget_clamp, rules.retarget_clamp);
  return Difficulty(d.value() * ratio);
}

// Difficulty of a block built on `parent`. The block closing an epoch (height a
// positive multiple of the interval) sets the difficulty of everything after it,
// measured over the full interval span from the previous epoch's closing block.
inline Difficulty next_difficulty(const ChainStore& store, BlockId parent, const ConsensusRules& rules,
                                  bool retarget_enabled) {
  const Block& p = store.get(parent);
  if (!retarget_enabled || p.height == 0 || p.height % rules.retarget_interval != 0) {
    return p.difficulty;
  }
  const Block& first = store.get(store.ancestor_at_height(parent, p.height - rules.retarget_interval));
  return retarget(p.difficulty, first.timestamp, p.timestamp, rules);
}

// Blocks waiting for a parent the node has not seen yet.
class OrphanPool {
 public:
  void add(const Block& block) { waiting_[block.parent.value].push_back(block); }

  std::vector<Block> take_children(BlockId parent) {
    const auto it = waiting_.find(parent.value);
    if (it == waiting_.end()) return {};
    std::vector<Block> out = std::move(it->second);
    waiting_.erase(it);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, v] : waiting_) n += v.size();
    return n;
  }

  bool empty() const { return waiting_.empty(); }

 private:
  std::unordered_map<std::uint64_t, std::vector<Block>> waiting_;
};

inline constexpr const char* kBlocksCsvHeader =
    "id,parent,height,miner,timestamp,difficulty,cumulative_work,found_at";

inline void write_block_row(std::ostream& out, const Block& b, double cumulative_work) {
  out << b.id.value << ',' << b.parent.value << ',' << b.height << ',' << b.miner << ','
      << b.timestamp << ',' << csv::number(b.difficulty.value()) << ','
      << csv::number(cumulative_work) << ',' << csv::number(b.found_at) << '\n';
}

// Chain dump of one store, in first-seen order.
inline void write_blocks_csv(std::ostream& out, const ChainStore& store) {
  out << kBlocksCsvHeader << '\n';
  for (const Block* b : store.blocks_by_arrival()) write_block_row(out, *b, store.cumulative_work(b->id));
}

}  // namespace powtime

template <>
struct std::hash<powtime::BlockId> {
  std::size_t operator()(powtime::BlockId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
