#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "powtime/config_json.hpp"
#include "powtime/trace_io.hpp"

using namespace powtime;
using nlohmann::json;

TEST(ConfigJson, ParsesFullSchema) {
  const json j = json::parse(R"({
    "miners": [{"id": "a", "hashrate_share": 0.25, "clock_offset": -12, "node": 1},
               {"hashrate_share": 0.75, "timestamp_strategy": {"fixed_skew": 7000}}],
    "nodes": 3,
    "node_clock_offsets": [0, -12, 4],
    "delay": {"per_pair": [[0, 1, 2], [3, 0, 4], [5, 6, 0]]},
    "rules": {"retarget_interval": 10, "mpt_window": 5},
    "initial_difficulty": 2,
    "stop": {"duration": 3600},
    "seed": 99,
    "retarget_enabled": true,
    "hashrate_schedule": [{"at_height": 10, "multiplier": 3}]
  })");
  const SimConfig c = sim_config_from_json(j);
  ASSERT_EQ(c.miners.size(), 2u);
  EXPECT_EQ(c.miners[0].id, "a");
  EXPECT_EQ(c.miners[1].id, "m1");
  EXPECT_EQ(c.node_of(0), 1u);
  EXPECT_EQ(c.node_of(1), 1u);
  EXPECT_EQ(std::get<FixedSkewTimestamps>(c.miners[1].timestamp_strategy).skew, 7000.0);
  EXPECT_EQ(c.node_count(), 3u);
  EXPECT_EQ(c.node_clock_offset(2), 4.0);
  EXPECT_EQ(c.delay.delay(2, 1), 6.0);
  EXPECT_EQ(c.rules.retarget_interval, 10u);
  EXPECT_EQ(c.rules.mpt_window, 5u);
  EXPECT_EQ(c.rules.max_future_offset, 7200);
  EXPECT_EQ(c.initial_difficulty.value(), 2.0);
  EXPECT_EQ(std::get<StopAtDuration>(c.stop).seconds, 3600.0);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_TRUE(c.retarget_enabled);
  ASSERT_EQ(c.hashrate_schedule.size(), 1u);
  EXPECT_EQ(c.hashrate_schedule[0].multiplier, 3.0);
}

TEST(ConfigJson, RoundTrips) {
  SimConfig c;
  c.miners = {MinerSpec{"x", 0.6, 5.0, FixedSkewTimestamps{30}}, MinerSpec{"y", 0.4}};
  c.delay = DelayModel::fixed(12.5);
  c.stop = StopAtBlocks{77};
  c.seed = 5;
  c.script = {{10.0, 1}};
  const json j = to_json(c);
  EXPECT_EQ(to_json(sim_config_from_json(j)), j);
}

TEST(ConfigJson, RejectsBadInput) {
  const auto bad = [](const char* text) { return sim_config_from_json(json::parse(text)); };
  EXPECT_THROW(bad("[]"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": []})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"id": "a"}]})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 0.9}]})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "delay": {"sometimes": 3}})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "delay": -2})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1, "timestamp_strategy": "lazy"}]})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "initial_difficulty": 0})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "stop": {"forever": true}})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "rules": {"retarget_interval": 0}})"), ConfigError);
  EXPECT_THROW(bad(R"({"miners": [{"hashrate_share": 1}], "script": [{"at": 1, "miner": 3}]})"), ConfigError);
  EXPECT_THROW(load_sim_config("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigJson, BundledScenariosLoad) {
  for (const auto& entry : std::filesystem::directory_iterator(POWTIME_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_sim_config(entry.path().string())) << entry.path();
  }
}

TEST(TraceIo, CsvAndJsonCarryTheSameValues) {
  SimConfig c;
  c.miners = {MinerSpec{"a", 0.5}, MinerSpec{"b", 0.5}};
  c.delay = DelayModel::fixed(90);
  c.stop = StopAtBlocks{400};
  c.seed = 31;
  const SimTrace t = run(c);
  const json j = trace_json(t);
  for (const Table& table : trace_tables(t)) {
    std::ostringstream csv;
    write_csv(csv, table);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    const auto& jt = j.at(table.name);
    ASSERT_EQ(jt.size(), table.rows.size()) << table.name;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      std::getline(lines, line);
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      ASSERT_EQ(fields.size(), table.columns.size());
      for (std::size_t k = 0; k < fields.size(); ++k) {
        const json& v = jt[r].at(table.columns[k]);
        if (v.is_string()) {
          EXPECT_EQ(v.get<std::string>(), fields[k]);
        } else if (v.is_number_float()) {
          EXPECT_EQ(v.get<double>(), std::stod(fields[k])) << table.name << "." << table.columns[k];
        } else {
          EXPECT_EQ(v.dump(), fields[k]);
        }
      }
    }
  }
}

TEST(TraceIo, WritesOneFilePerTable) {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.stop = StopAtBlocks{10};
  const auto dir = std::filesystem::temp_directory_path() / "powtime_trace_io_test";
  std::filesystem::remove_all(dir);
  const auto files = write_trace_csv(run(c), dir);
  EXPECT_EQ(files.size(), 6u);
  std::ifstream blocks(dir / "blocks.csv");
  std::string header;
  std::getline(blocks, header);
  EXPECT_EQ(header, "id,parent,height,miner,timestamp,difficulty,cumulative_work,found_at");
  std::filesystem::remove_all(dir);
}
