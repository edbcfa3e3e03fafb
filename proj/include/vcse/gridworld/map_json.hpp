#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "vcse/error.hpp"
#include "vcse/gridworld/map.hpp"
#include "vcse/gridworld/tasks.hpp"

namespace vcse::gridworld {

inline constexpr int kMapSchemaVersion = 1;

// Row glyphs: '#' wall, '.' floor, 'L' lava, 'D' locked door, 'd' closed
// door, 'o' open door, 'K' key, 'G' goal.
inline char cell_glyph(const Cell& c) {
  switch (c.kind) {
    case CellKind::Floor: return '.';
    case CellKind::Wall: return '#';
    case CellKind::Lava: return 'L';
    case CellKind::Key: return 'K';
    case CellKind::Goal: return 'G';
    case CellKind::Door: return c.locked ? 'D' : (c.open ? 'o' : 'd');
  }
  return '?';
}

inline Cell glyph_cell(char g) {
  switch (g) {
    case '.': return Cell{CellKind::Floor};
    case '#': return Cell{CellKind::Wall};
    case 'L': return Cell{CellKind::Lava};
    case 'K': return Cell{CellKind::Key};
    case 'G': return Cell{CellKind::Goal};
    case 'D': return Cell{CellKind::Door, true, false};
    case 'd': return Cell{CellKind::Door, false, false};
    case 'o': return Cell{CellKind::Door, false, true};
    default: throw ConfigError("rows", std::string("unknown cell glyph '") + g + "'");
  }
}

inline char heading_char(Heading h) { return "NESW"[static_cast<int>(h)]; }

inline nlohmann::json map_to_json(const MapSpec& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < m.height; ++y) {
    std::string row;
    for (int x = 0; x < m.width; ++x) row.push_back(cell_glyph(m.at(x, y)));
    rows.push_back(row);
  }
  return {
      {"schema_version", kMapSchemaVersion},
      {"width", m.width},
      {"height", m.height},
      {"rows", rows},
      {"agent_start",
       {{"x", m.agent_start.x}, {"y", m.agent_start.y}, {"heading", std::string(1, heading_char(m.agent_start.heading))}}},
      {"randomize_layout", m.randomize_layout},
      {"seed", m.seed},
      {"task", std::string(task_name_str(m.task))},
      {"task_size", m.task_size},
      {"max_steps", m.max_steps},
  };
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown field");
  }
}

template <typename T>
T require(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const std::string path = where.empty() ? key : where + "." + key;
  if (!j.contains(key)) throw ConfigError(path, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path, "wrong type");
  }
}

}  // namespace detail

inline MapSpec map_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"schema_version", "width", "height", "rows", "agent_start", "randomize_layout", "seed",
                             "task", "task_size", "max_steps"},
                         "");
  const int version = detail::require<int>(j, "schema_version", "");
  if (version != kMapSchemaVersion) throw ConfigError("schema_version", "unsupported map schema version");
  MapSpec m;
  m.width = detail::require<int>(j, "width", "");
  m.height = detail::require<int>(j, "height", "");
  const auto rows = detail::require<std::vector<std::string>>(j, "rows", "");
  if (static_cast<int>(rows.size()) != m.height) throw ConfigError("rows", "row count does not match height");
  for (const std::string& row : rows) {
    if (static_cast<int>(row.size()) != m.width) throw ConfigError("rows", "row length does not match width");
    for (char g : row) m.cells.push_back(glyph_cell(g));
  }
  const auto& start = j.contains("agent_start") ? j.at("agent_start") : throw ConfigError("agent_start", "missing required field");
  detail::reject_unknown(start, {"x", "y", "heading"}, "agent_start");
  m.agent_start.x = detail::require<int>(start, "x", "agent_start");
  m.agent_start.y = detail::require<int>(start, "y", "agent_start");
  const auto heading = detail::require<std::string>(start, "heading", "agent_start");
  const auto pos = std::string("NESW").find(heading);
  if (heading.size() != 1 || pos == std::string::npos) throw ConfigError("agent_start.heading", "expected N, E, S or W");
  m.agent_start.heading = static_cast<Heading>(pos);
  m.randomize_layout = j.value("randomize_layout", false);
  m.seed = j.value("seed", std::uint64_t{0});
  const auto task = parse_task_name(j.value("task", std::string("Custom")));
  if (!task) throw ConfigError("task", "unknown task name");
  m.task = *task;
  m.task_size = j.value("task_size", 0);
  m.max_steps = j.value("max_steps", 0);
  validate(m);
  return m;
}

}  // namespace vcse::gridworld
