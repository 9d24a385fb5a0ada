#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "powtime/metrics.hpp"
#include "powtime/simulator.hpp"
#include "powtime/trace_io.hpp"

using namespace powtime;

namespace {

SimConfig two_miners(double tau, std::uint64_t blocks, std::uint64_t seed) {
  SimConfig c;
  c.miners = {MinerSpec{"a", 0.5}, MinerSpec{"b", 0.5}};
  c.delay = DelayModel::fixed(tau);
  c.stop = StopAtBlocks{blocks};
  c.seed = seed;
  return c;
}

std::string csv_of(const SimTrace& t) {
  std::ostringstream out;
  for (const Table& table : trace_tables(t)) write_csv(out, table);
  return out.str();
}

// Three nodes, one miner each; node 2 hears node 0/1 30 s late.
SimConfig three_node_config() {
  SimConfig c;
  c.miners = {MinerSpec{"n1", 0.4}, MinerSpec{"n2", 0.3}, MinerSpec{"n3", 0.3}};
  c.delay = DelayModel::per_pair({{0, 1, 30}, {1, 0, 30}, {1, 1, 0}});
  c.script = {{100, 0}, {700, 0}, {705, 2}, {1300, 1}};
  return c;
}

}  // namespace

TEST(Simulator, SingleMinerBuildsLinearChain) {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.stop = StopAtBlocks{1000};
  const SimTrace t = run(c);
  EXPECT_EQ(t.canonical_height(), 1000u);
  EXPECT_EQ(t.blocks.size(), 1001u);
  EXPECT_TRUE(t.forks.empty());
  EXPECT_TRUE(reorg_depth_histogram(t).empty());
  EXPECT_TRUE(t.converged());
}

TEST(Simulator, ZeroDelayNeverForks) {
  const SimTrace t = run(two_miners(0.0, 20000, 3));
  EXPECT_TRUE(t.forks.empty());
  EXPECT_EQ(t.max_reorg_depth(), 0u);
  EXPECT_EQ(t.blocks.size(), t.canonical.size());
}

TEST(Simulator, IdenticalSeedsGiveIdenticalTraces) {
  const SimConfig c = two_miners(60.0, 3000, 12);
  const std::string a = csv_of(run(c));
  EXPECT_EQ(a, csv_of(run(c)));
  SimConfig other = c;
  other.seed = 13;
  EXPECT_NE(a, csv_of(run(other)));
}

TEST(Simulator, InvalidConfigFailsBeforeRunning) {
  SimConfig c;
  EXPECT_THROW(Simulator{c}, ConfigError);
  c.miners = {MinerSpec{"a", 0.5}, MinerSpec{"b", 0.4}};
  EXPECT_THROW(Simulator{c}, ConfigError);
  c.miners = {MinerSpec{"a", 1.0}};
  c.delay = DelayModel::fixed(-1.0);
  EXPECT_THROW(Simulator{c}, ConfigError);
  c.delay = DelayModel::per_pair({{0, 1}, {1, 0}});
  EXPECT_THROW(Simulator{c}, ConfigError);  // one node, 2x2 matrix
  c.delay = DelayModel::fixed(0);
  c.stop = StopAtBlocks{0};
  EXPECT_THROW(Simulator{c}, ConfigError);
}

TEST(Simulator, ThreeNodeReplayReorgsNodeThreeOnce) {
  const SimTrace t = run(three_node_config());
  // ids in discovery order: B=1, C=2, C'=3, D=4
  ASSERT_EQ(t.blocks.size(), 5u);
  EXPECT_EQ(t.block(BlockId{3}).parent, BlockId{1});
  EXPECT_EQ(t.block(BlockId{2}).parent, BlockId{1});
  EXPECT_EQ(t.block(BlockId{4}).parent, BlockId{2});

  std::vector<TipRecord> node3;
  for (const auto& r : t.tip_changes) {
    if (r.node == 2) node3.push_back(r);
  }
  ASSERT_EQ(node3.size(), 3u);
  EXPECT_EQ(node3[1].new_tip, BlockId{3});
  EXPECT_EQ(node3[2].new_tip, BlockId{4});
  EXPECT_EQ(node3[2].reorg_depth, 1u);
  EXPECT_DOUBLE_EQ(node3[2].at, 1330.0);

  ASSERT_EQ(t.forks.size(), 1u);
  EXPECT_EQ(t.forks[0].parent, BlockId{1});
  EXPECT_EQ(t.forks[0].winner, BlockId{2});
  EXPECT_EQ(reorg_depth_histogram(t), (std::map<std::uint64_t, std::uint64_t>{{1, 1}}));
  EXPECT_TRUE(t.converged());
  EXPECT_EQ(t.final_tips[0], BlockId{4});
}

TEST(Simulator, HonestTimestampAppliesClockOffset) {
  SimConfig c;
  c.miners = {MinerSpec{"m", 1.0, 30.0}};
  c.script = {{1000.0, 0}};
  const SimTrace t = run(c);
  EXPECT_EQ(t.block(BlockId{1}).timestamp, 1030);
}

TEST(Simulator, SlowClockClampsToMedianPlusOne) {
  SimConfig c;
  c.miners = {MinerSpec{"m", 1.0, -5000.0}};
  c.script = {{100.0, 0}, {200.0, 0}, {300.0, 0}};
  const SimTrace t = run(c);
  // MPT over [0] is 0, over [0, 1] is 0, over [0, 1, 1] is 1
  EXPECT_EQ(t.block(BlockId{1}).timestamp, 1);
  EXPECT_EQ(t.block(BlockId{2}).timestamp, 1);
  EXPECT_EQ(t.block(BlockId{3}).timestamp, 2);
  EXPECT_TRUE(t.rejections.empty());
  EXPECT_EQ(t.canonical_height(), 3u);
}

TEST(Simulator, SkewedMinerCreatesNegativeDeltas) {
  SimConfig c;
  c.miners = {MinerSpec{"skew", 0.5, 0.0, FixedSkewTimestamps{7000}}, MinerSpec{"honest", 0.5}};
  c.delay = DelayModel::fixed(1.0);
  c.script = {{100.0, 0}, {200.0, 1}};
  const SimTrace t = run(c);
  EXPECT_TRUE(t.rejections.empty());
  const Block& skewed = t.block(BlockId{1});
  const Block& next = t.block(BlockId{2});
  EXPECT_EQ(skewed.timestamp, 7100);
  EXPECT_EQ(next.parent, skewed.id);
  EXPECT_LT(next.timestamp - skewed.timestamp, -6000);
  EXPECT_EQ(t.canonical_height(), 2u);
}

TEST(Simulator, FutureBlockRejectedThenAdmittedWhenClockCatchesUp) {
  SimConfig c;
  c.miners = {MinerSpec{"skew", 0.5, 0.0, FixedSkewTimestamps{8000}}, MinerSpec{"honest", 0.5}};
  c.delay = DelayModel::fixed(1.0);
  c.script = {{100.0, 0}};
  const SimTrace t = run(c);
  // the skewed node itself rejects too: its own clock is 100 + 7200 < 8100
  ASSERT_GE(t.rejections.size(), 1u);
  for (const auto& r : t.rejections) EXPECT_EQ(r.reason, TimestampRejection::kTooFarInFuture);
  bool node1_rejected = false;
  for (const auto& r : t.rejections) node1_rejected |= (r.node == 1 && r.at == 101.0);
  EXPECT_TRUE(node1_rejected);
  EXPECT_TRUE(t.converged());
  EXPECT_EQ(t.final_tips[1], BlockId{1});
  for (const auto& r : t.tip_changes) EXPECT_GE(r.at, 900.0);
}

TEST(Simulator, ClockWarningsAreAdvisory) {
  SimConfig c;
  c.miners = {MinerSpec{"a", 0.4, 0.0}, MinerSpec{"b", 0.3, 10.0}, MinerSpec{"c", 0.3, 1200.0}};
  c.delay = DelayModel::fixed(2.0);
  c.stop = StopAtBlocks{200};
  const SimTrace t = run(c);
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_EQ(t.warnings[0].node, 2u);
  EXPECT_DOUBLE_EQ(t.warnings[0].deviation, 1190.0);
  EXPECT_TRUE(t.rejections.empty());
  EXPECT_GE(t.canonical_height(), 200u);
}

TEST(Simulator, OrphansWaitForTheirParent) {
  SimConfig c;
  c.miners = {MinerSpec{"a", 0.5}, MinerSpec{"b", 0.5}};
  c.nodes = 3;
  c.delay = DelayModel::per_pair({{0, 1, 100}, {1, 0, 1}, {100, 1, 0}});
  c.script = {{10.0, 0}, {20.0, 1}};
  const SimTrace t = run(c);
  std::vector<TipRecord> node2;
  for (const auto& r : t.tip_changes) {
    if (r.node == 2) node2.push_back(r);
  }
  // C reaches node 2 at 21, B at 110; both connect at 110
  ASSERT_EQ(node2.size(), 2u);
  EXPECT_DOUBLE_EQ(node2[0].at, 110.0);
  EXPECT_DOUBLE_EQ(node2[1].at, 110.0);
  EXPECT_EQ(node2[1].new_tip, BlockId{2});
  EXPECT_TRUE(t.converged());
}

TEST(Simulator, RetargetDisabledKeepsDifficulty) {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.rules.retarget_interval = 50;
  c.hashrate_schedule = {{50, 3.0}};
  c.stop = StopAtBlocks{300};
  const SimTrace t = run(c);
  ASSERT_GE(t.difficulty.size(), 6u);
  for (const auto& d : t.difficulty) EXPECT_EQ(d.difficulty, 1.0);
}

TEST(Simulator, RetargetTracksHashrateStep) {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.rules.retarget_interval = 400;
  c.retarget_enabled = true;
  c.hashrate_schedule = {{400, 2.0}};
  c.stop = StopAtBlocks{1200};
  c.seed = 5;
  const SimTrace t = run(c);
  ASSERT_GE(t.difficulty.size(), 3u);
  EXPECT_EQ(t.difficulty[1].height, 401u);
  EXPECT_EQ(t.difficulty[2].height, 801u);
  // 3 sigma of a 400-block span is 15%
  EXPECT_NEAR(t.difficulty[1].difficulty, 1.0, 0.15);
  EXPECT_NEAR(t.difficulty[2].difficulty / t.difficulty[1].difficulty, 2.0, 0.3);
}

TEST(Simulator, ConstantHashrateKeepsDifficultyNearTarget) {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.retarget_enabled = true;
  c.stop = StopAtBlocks{5 * 2016};
  c.seed = 17;
  const SimTrace t = run(c);
  ASSERT_GE(t.difficulty.size(), 5u);
  const double sigma = 1.0 / std::sqrt(2016.0);
  double drift_sum = 0.0;
  for (std::size_t i = 1; i < t.difficulty.size(); ++i) {
    const double ratio = t.difficulty[i].difficulty / t.difficulty[i - 1].difficulty;
    EXPECT_LT(std::abs(ratio - 1.0), 3 * sigma);
    drift_sum += ratio - 1.0;
  }
  EXPECT_LT(std::abs(drift_sum / static_cast<double>(t.difficulty.size() - 1)), 0.05);
}

TEST(Simulator, ProportionalWinsAtZeroDelay) {
  SimConfig c;
  c.miners = {MinerSpec{"a", 0.5}, MinerSpec{"b", 0.3}, MinerSpec{"c", 0.2}};
  c.stop = StopAtBlocks{50000};
  c.seed = 8;
  const SimTrace t = run(c);
  const auto shares = canonical_miner_shares(t);
  const double n = static_cast<double>(t.canonical_block_count());
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double s = c.miners[i].hashrate_share;
    EXPECT_LT(std::abs(shares[i] - s), 3 * std::sqrt(s * (1 - s) / n)) << c.miners[i].id;
  }
}

TEST(Simulator, ForkSiblingsFallInsideOnePropagationWindow) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const SimTrace t = run(two_miners(60.0, 20000, seed));
    ASSERT_FALSE(t.forks.empty());
    for (const auto& f : t.forks) {
      const double first = t.block(f.competitors.front()).found_at;
      const double last = t.block(f.competitors.back()).found_at;
      EXPECT_LE(last - first, 60.0);
    }
  }
}

// Per block, another miner holding share (1 - s) keeps mining the old parent for tau
// seconds: P(fork) ~ sum_i s_i (1 - exp(-lambda (1 - s_i) tau)), exact to first order.
TEST(Simulator, SmallDelayForkRateMatchesFirstOrderRace) {
  const double lambda = 1.0 / 600.0;
  const double tau = 2.0;
  const SimTrace t = run(two_miners(tau, 200000, 99));
  const double expected = -std::expm1(-lambda * 0.5 * tau);
  const double n = static_cast<double>(t.canonical_block_count());
  const double observed = static_cast<double>(t.forks.size()) / n;
  EXPECT_LT(std::abs(observed - expected), 3 * std::sqrt(expected / n));
}

TEST(Simulator, QuiescentAgreementAcrossTopologies) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> delay(0.0, 120.0);
  for (int round = 0; round < 12; ++round) {
    SimConfig c;
    const std::uint32_t miners = 2 + round % 4;
    const std::uint32_t nodes = miners + round % 3;  // some non-mining relays
    for (std::uint32_t i = 0; i < miners; ++i) c.miners.push_back(MinerSpec{"m" + std::to_string(i), 1.0 / miners});
    c.nodes = nodes;
    std::vector<std::vector<double>> m(nodes, std::vector<double>(nodes, 0.0));
    for (auto& row : m) {
      for (double& d : row) d = delay(gen);
    }
    c.delay = DelayModel::per_pair(m);
    c.stop = round % 2 ? StopCondition{StopAtBlocks{500}} : StopCondition{StopAtDuration{200000.0}};
    c.seed = static_cast<std::uint64_t>(round);
    const SimTrace t = run(c);
    EXPECT_TRUE(t.converged()) << "round " << round;

    std::set<std::uint64_t> ids;
    for (const Block& b : t.blocks) ids.insert(b.id.value);
    for (const auto& r : t.tip_changes) EXPECT_TRUE(ids.contains(r.new_tip.value));
    std::set<std::uint64_t> canonical;
    for (BlockId id : t.canonical) canonical.insert(id.value);
    for (const auto& f : t.forks) {
      if (f.winner) { EXPECT_TRUE(canonical.contains(f.winner->value)); }
      if (canonical.contains(f.parent.value) && f.parent != t.canonical.back()) { EXPECT_TRUE(f.winner.has_value()); }
      const double spread = t.block(f.competitors.back()).found_at - t.block(f.competitors.front()).found_at;
      EXPECT_LE(spread, c.delay.max_delay() + 1e-9);
    }
  }
}

TEST(Simulator, DurationStopRunsPastDeadlineOnlyToAgree) {
  SimConfig c = two_miners(30.0, 1, 4);
  c.stop = StopAtDuration{60000.0};
  const SimTrace t = run(c);
  EXPECT_TRUE(t.converged());
  EXPECT_GT(t.canonical_height(), 50u);
  EXPECT_LT(t.canonical_height(), 200u);
}
