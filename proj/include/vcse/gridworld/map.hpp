#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcse/error.hpp"

namespace vcse::gridworld {

enum class CellKind : std::uint8_t { Floor, Wall, Lava, Door, Key, Goal };

enum class Heading : std::uint8_t { N, E, S, W };

enum class TaskName { Custom, Empty, LavaGap, SimpleCrossingFixed, SimpleCrossingRandom, DoorKey, Unlock };

struct Cell {
  CellKind kind = CellKind::Floor;
  bool locked = false;  // doors only
  bool open = false;    // doors only

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct AgentStart {
  int x = 1;
  int y = 1;
  Heading heading = Heading::E;

  friend bool operator==(const AgentStart&, const AgentStart&) = default;
};

/// Static description of one gridworld. Cells are stored row-major,
/// y growing downward (south).
struct MapSpec {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  AgentStart agent_start;
  bool randomize_layout = false;
  std::uint64_t seed = 0;
  // Builtin task this layout came from; lets reset() regenerate randomised
  // layouts. Custom maps cannot be randomised.
  TaskName task = TaskName::Custom;
  int task_size = 0;
  // 0 selects the default of 4 * width * height.
  int max_steps = 0;

  const Cell& at(int x, int y) const { return cells[static_cast<std::size_t>(y * width + x)]; }
  Cell& at(int x, int y) { return cells[static_cast<std::size_t>(y * width + x)]; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  int episode_limit() const { return max_steps > 0 ? max_steps : 4 * width * height; }

  friend bool operator==(const MapSpec&, const MapSpec&) = default;
};

inline MapSpec blank_map(int width, int height) {
  MapSpec spec;
  spec.width = width;
  spec.height = height;
  spec.cells.assign(static_cast<std::size_t>(width * height), Cell{});
  for (int x = 0; x < width; ++x) {
    spec.at(x, 0).kind = CellKind::Wall;
    spec.at(x, height - 1).kind = CellKind::Wall;
  }
  for (int y = 0; y < height; ++y) {
    spec.at(0, y).kind = CellKind::Wall;
    spec.at(width - 1, y).kind = CellKind::Wall;
  }
  return spec;
}

inline void validate(const MapSpec& spec) {
  if (spec.width < 3 || spec.height < 3) throw InvalidMapError("map must be at least 3x3");
  if (spec.cells.size() != static_cast<std::size_t>(spec.width * spec.height)) {
    throw InvalidMapError("cell count does not match width * height");
  }
  if (spec.max_steps < 0) throw InvalidMapError("max_steps must be >= 0");
  int goals = 0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Cell& c = spec.at(x, y);
      const bool border = x == 0 || y == 0 || x == spec.width - 1 || y == spec.height - 1;
      if (border && c.kind != CellKind::Wall) throw InvalidMapError("border cells must be Wall");
      if (c.kind == CellKind::Goal) ++goals;
      if ((c.locked || c.open) && c.kind != CellKind::Door) {
        throw InvalidMapError("only doors can be locked or open");
      }
      if (c.locked && c.open) throw InvalidMapError("a door cannot be both locked and open");
    }
  }
  if (goals != 1) throw InvalidMapError("map must contain exactly one Goal cell, found " + std::to_string(goals));
  const auto& s = spec.agent_start;
  if (!spec.in_bounds(s.x, s.y) || spec.at(s.x, s.y).kind != CellKind::Floor) {
    throw InvalidMapError("agent must start on a Floor cell");
  }
  if (spec.randomize_layout && spec.task == TaskName::Custom) {
    throw InvalidMapError("custom maps cannot be randomised");
  }
}

inline int dx_of(Heading h) { return h == Heading::E ? 1 : (h == Heading::W ? -1 : 0); }
inline int dy_of(Heading h) { return h == Heading::S ? 1 : (h == Heading::N ? -1 : 0); }
inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

}  // namespace vcse::gridworld
