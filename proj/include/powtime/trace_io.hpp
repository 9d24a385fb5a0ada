#pragma once

// Trace tables and their CSV / JSON encodings. Both encodings are produced
// from the same Table values.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "powtime/chain.hpp"
#include "powtime/csv.hpp"
#include "powtime/simulator.hpp"

namespace powtime {

using Cell = std::variant<std::int64_t, std::uint64_t, double, std::string>;

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline std::string cell_text(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return csv::number(v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else {
          return std::to_string(v);
        }
      },
      c);
}

inline nlohmann::json cell_json(const Cell& c) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, c);
}

inline void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i]);
    out << '\n';
  }
}

inline nlohmann::json table_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i]] = cell_json(row[i]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string join_ids(const std::vector<BlockId>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ";" : "") + std::to_string(ids[i].value);
  return s;
}

inline std::vector<Table> trace_tables(const SimTrace& trace) {
  Table blocks{"blocks", {"id", "parent", "height", "miner", "timestamp", "difficulty", "cumulative_work", "found_at"}, {}};
  for (std::size_t i = 0; i < trace.blocks.size(); ++i) {
    const Block& b = trace.blocks[i];
    blocks.rows.push_back({b.id.value, b.parent.value, b.height, static_cast<std::int64_t>(b.miner), b.timestamp,
                           b.difficulty.value(), trace.cumulative_work[i], b.found_at});
  }
  Table tips{"tip_changes", {"time", "node", "new_tip", "reorg_depth"}, {}};
  for (const auto& r : trace.tip_changes) {
    tips.rows.push_back({r.at, static_cast<std::uint64_t>(r.node), r.new_tip.value, r.reorg_depth});
  }
  Table forks{"forks", {"window_start", "parent", "competitors", "winner"}, {}};
  for (const auto& f : trace.forks) {
    forks.rows.push_back({f.window_start, f.parent.value, join_ids(f.competitors),
                          f.winner ? Cell{f.winner->value} : Cell{std::string("unresolved")}});
  }
  Table difficulty{"difficulty", {"height", "difficulty"}, {}};
  for (const auto& d : trace.difficulty) difficulty.rows.push_back({d.height, d.difficulty});
  Table rejections{"rejections", {"time", "node", "block", "reason"}, {}};
  for (const auto& r : trace.rejections) {
    rejections.rows.push_back({r.at, static_cast<std::uint64_t>(r.node), r.block.value, std::string(to_string(r.reason))});
  }
  Table warnings{"warnings", {"node", "deviation"}, {}};
  for (const auto& w : trace.warnings) warnings.rows.push_back({static_cast<std::uint64_t>(w.node), w.deviation});
  return {blocks, tips, forks, difficulty, rejections, warnings};
}

// Writes <name>.csv per table into `dir`.
inline std::vector<std::filesystem::path> write_trace_csv(const SimTrace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const Table& t : trace_tables(trace)) {
    const auto path = dir / (t.name + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_csv(out, t);
    written.push_back(path);
  }
  return written;
}

inline nlohmann::json trace_json(const SimTrace& trace) {
  nlohmann::json j = nlohmann::json::object();
  for (const Table& t : trace_tables(trace)) j[t.name] = table_json(t);
  return j;
}

}  // namespace powtime
