#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "vcse/error.hpp"
#include "vcse/gridworld/map.hpp"
#include "vcse/rng.hpp"

namespace vcse::gridworld {

inline constexpr int kMinTaskSize = 6;
inline constexpr int kMaxTaskSize = 16;

inline std::string_view task_name_str(TaskName t) {
  switch (t) {
    case TaskName::Custom: return "Custom";
    case TaskName::Empty: return "Empty";
    case TaskName::LavaGap: return "LavaGap";
    case TaskName::SimpleCrossingFixed: return "SimpleCrossingFixed";
    case TaskName::SimpleCrossingRandom: return "SimpleCrossingRandom";
    case TaskName::DoorKey: return "DoorKey";
    case TaskName::Unlock: return "Unlock";
  }
  return "Custom";
}

inline std::optional<TaskName> parse_task_name(std::string_view s) {
  for (TaskName t : {TaskName::Custom, TaskName::Empty, TaskName::LavaGap, TaskName::SimpleCrossingFixed,
                     TaskName::SimpleCrossingRandom, TaskName::DoorKey, TaskName::Unlock}) {
    if (task_name_str(t) == s) return t;
  }
  return std::nullopt;
}

/// Whether a task's layout is re-drawn at every reset unless overridden.
inline bool task_randomizes_by_default(TaskName t) {
  return t == TaskName::LavaGap || t == TaskName::SimpleCrossingRandom || t == TaskName::DoorKey ||
         t == TaskName::Unlock;
}

namespace detail {

inline void set_goal_corner(MapSpec& m) { m.at(m.width - 2, m.height - 2).kind = CellKind::Goal; }

// Two-room layout shared by DoorKey and Unlock: wall column at split_x with a
// locked door, key and agent somewhere west of the wall.
inline void build_two_rooms(MapSpec& m, Rng* rng, bool goal_behind_door) {
  const int size = m.width;
  int split = size / 2;
  int door_y = (size - 2) / 2;
  if (rng) {
    split = uniform_int(*rng, 2, size - 3);
    door_y = uniform_int(*rng, 1, size - 3);
  }
  for (int y = 1; y < size - 1; ++y) m.at(split, y).kind = CellKind::Wall;
  m.at(split, door_y) = Cell{CellKind::Door, true};

  if (goal_behind_door) {
    m.at(split + 1, door_y).kind = CellKind::Goal;
  } else {
    set_goal_corner(m);
  }

  int key_x = 1, key_y = size - 2;
  AgentStart start{1, 1, Heading::E};
  if (rng) {
    do {
      key_x = uniform_int(*rng, 1, split - 1);
      key_y = uniform_int(*rng, 1, size - 2);
      start.x = uniform_int(*rng, 1, split - 1);
      start.y = uniform_int(*rng, 1, size - 2);
    } while (key_x == start.x && key_y == start.y);
    start.heading = static_cast<Heading>(uniform_int(*rng, 0, 3));
  }
  m.at(key_x, key_y).kind = CellKind::Key;
  m.agent_start = start;
}

inline MapSpec generate(TaskName name, int size, Rng* rng) {
  MapSpec m = blank_map(size, size);
  m.agent_start = AgentStart{1, 1, Heading::E};
  switch (name) {
    case TaskName::Empty:
      set_goal_corner(m);
      break;
    case TaskName::LavaGap: {
      int gap_x = size / 2;
      int gap_y = size / 2;
      if (rng) {
        gap_x = uniform_int(*rng, 2, size - 3);
        gap_y = uniform_int(*rng, 1, size - 2);
      }
      for (int y = 1; y < size - 1; ++y) {
        if (y != gap_y) m.at(gap_x, y).kind = CellKind::Lava;
      }
      set_goal_corner(m);
      break;
    }
    case TaskName::SimpleCrossingFixed:
    case TaskName::SimpleCrossingRandom: {
      // One wall line at an even coordinate with a single opening.
      bool vertical = true;
      int pos = (size / 2) & ~1;
      int gap = size / 2;
      if (rng) {
        vertical = uniform_int(*rng, 0, 1) == 0;
        pos = 2 * uniform_int(*rng, 1, (size - 3) / 2);
        gap = uniform_int(*rng, 1, size - 2);
      }
      for (int t = 1; t < size - 1; ++t) {
        if (t == gap) continue;
        if (vertical) {
          m.at(pos, t).kind = CellKind::Wall;
        } else {
          m.at(t, pos).kind = CellKind::Wall;
        }
      }
      set_goal_corner(m);
      break;
    }
    case TaskName::DoorKey:
      build_two_rooms(m, rng, false);
      break;
    case TaskName::Unlock:
      build_two_rooms(m, rng, true);
      break;
    case TaskName::Custom:
      throw DomainError("builtin_task: Custom is not a builtin task");
  }
  return m;
}

}  // namespace detail

/// Layout of a builtin task. The canonical (fixed) layout is returned unless
/// `randomize` resolves to true, in which case `seed` draws it.
inline MapSpec builtin_task(TaskName name, int size, std::uint64_t seed = 0,
                            std::optional<bool> randomize = std::nullopt) {
  if (size < kMinTaskSize || size > kMaxTaskSize) {
    throw DomainError("builtin_task: unsupported size " + std::to_string(size) + " (supported 6-16)");
  }
  if (name == TaskName::Custom) throw DomainError("builtin_task: Custom is not a builtin task");
  const bool random = randomize.value_or(task_randomizes_by_default(name));
  Rng rng(seed);
  MapSpec m = detail::generate(name, size, random ? &rng : nullptr);
  m.randomize_layout = random;
  m.seed = seed;
  m.task = name;
  m.task_size = size;
  validate(m);
  return m;
}

/// Re-draws a randomised builtin layout for a new seed, keeping the
/// episode settings of `spec`.
inline MapSpec redraw_layout(const MapSpec& spec, std::uint64_t seed) {
  if (!spec.randomize_layout) return spec;
  MapSpec m = builtin_task(spec.task, spec.task_size, seed, true);
  m.max_steps = spec.max_steps;
  return m;
}

/// Interior column that is wall everywhere except a single passable cell,
/// i.e. the crossing of a vertical SimpleCrossing layout.
inline std::optional<int> crossing_column(const MapSpec& m) {
  for (int x = 1; x < m.width - 1; ++x) {
    int openings = 0;
    for (int y = 1; y < m.height - 1; ++y) {
      if (m.at(x, y).kind != CellKind::Wall) ++openings;
    }
    if (openings == 1) return x;
  }
  return std::nullopt;
}

}  // namespace vcse::gridworld
