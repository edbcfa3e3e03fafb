#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vcse/error.hpp"
#include "vcse/gridworld/map.hpp"
#include "vcse/gridworld/tasks.hpp"

namespace vcse::gridworld {

enum class Action : int { TurnLeft = 0, TurnRight = 1, Forward = 2, Pickup = 3, Toggle = 4, Done = 5 };
inline constexpr int kNumActions = 6;

enum class ObsMode { PartialGrid, FullOneHot, AgentXY };

struct AgentPose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::E;
  bool has_key = false;

  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

struct Observation {
  ObsMode mode = ObsMode::FullOneHot;
  std::vector<double> data;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct TransitionInfo {
  AgentPose pose;  // after the step
  int step_index = 0;
};

struct Transition {
  Observation obs;
  int action = 0;
  Observation next_obs;
  double extrinsic_reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  TransitionInfo info;
};

inline std::string_view obs_mode_str(ObsMode m) {
  switch (m) {
    case ObsMode::PartialGrid: return "PartialGrid";
    case ObsMode::FullOneHot: return "FullOneHot";
    case ObsMode::AgentXY: return "AgentXY";
  }
  return "FullOneHot";
}

inline std::optional<ObsMode> parse_obs_mode(std::string_view s) {
  for (ObsMode m : {ObsMode::PartialGrid, ObsMode::FullOneHot, ObsMode::AgentXY}) {
    if (obs_mode_str(m) == s) return m;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Observation encodings
// ---------------------------------------------------------------------------

inline constexpr int kViewSize = 7;
inline constexpr int kOneHotClasses = 8;

// Per-cell classes of the fully observable encoding.
enum class CellClass : int { Floor, Wall, Lava, DoorLocked, DoorClosed, DoorOpen, Key, Goal };

inline CellClass classify(const Cell& c) {
  switch (c.kind) {
    case CellKind::Floor: return CellClass::Floor;
    case CellKind::Wall: return CellClass::Wall;
    case CellKind::Lava: return CellClass::Lava;
    case CellKind::Key: return CellClass::Key;
    case CellKind::Goal: return CellClass::Goal;
    case CellKind::Door:
      return c.locked ? CellClass::DoorLocked : (c.open ? CellClass::DoorOpen : CellClass::DoorClosed);
  }
  return CellClass::Floor;
}

inline Cell unclassify(CellClass k) {
  switch (k) {
    case CellClass::Floor: return Cell{CellKind::Floor};
    case CellClass::Wall: return Cell{CellKind::Wall};
    case CellClass::Lava: return Cell{CellKind::Lava};
    case CellClass::DoorLocked: return Cell{CellKind::Door, true, false};
    case CellClass::DoorClosed: return Cell{CellKind::Door, false, false};
    case CellClass::DoorOpen: return Cell{CellKind::Door, false, true};
    case CellClass::Key: return Cell{CellKind::Key};
    case CellClass::Goal: return Cell{CellKind::Goal};
  }
  return Cell{};
}

inline std::size_t one_hot_size(int width, int height) {
  const auto cells = static_cast<std::size_t>(width * height);
  return cells * kOneHotClasses + cells + 4 + 1;
}

inline std::size_t obs_size(ObsMode mode, int width, int height) {
  switch (mode) {
    case ObsMode::PartialGrid: return kViewSize * kViewSize * 3;
    case ObsMode::FullOneHot: return one_hot_size(width, height);
    case ObsMode::AgentXY: return 2;
  }
  return 0;
}

/// Full-map one-hot: [cell classes (W*H*8) | agent cell (W*H) | heading (4) | has_key (1)].
inline std::vector<double> encode_one_hot(int width, int height, std::span<const Cell> cells, const AgentPose& pose) {
  std::vector<double> out(one_hot_size(width, height), 0.0);
  const auto n = static_cast<std::size_t>(width * height);
  for (std::size_t i = 0; i < n; ++i) out[i * kOneHotClasses + static_cast<std::size_t>(classify(cells[i]))] = 1.0;
  out[n * kOneHotClasses + static_cast<std::size_t>(pose.y * width + pose.x)] = 1.0;
  out[n * kOneHotClasses + n + static_cast<std::size_t>(pose.heading)] = 1.0;
  out[n * kOneHotClasses + n + 4] = pose.has_key ? 1.0 : 0.0;
  return out;
}

struct DecodedGrid {
  std::vector<Cell> cells;
  AgentPose pose;
};

inline DecodedGrid decode_one_hot(int width, int height, std::span<const double> data) {
  if (data.size() != one_hot_size(width, height)) throw ShapeError("one-hot observation has wrong length");
  const auto n = static_cast<std::size_t>(width * height);
  auto argmax = [&](std::size_t begin, std::size_t count) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < count; ++j) {
      if (data[begin + j] > data[begin + best]) best = j;
    }
    return best;
  };
  DecodedGrid g;
  g.cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.cells.push_back(unclassify(static_cast<CellClass>(argmax(i * kOneHotClasses, kOneHotClasses))));
  }
  const std::size_t agent = argmax(n * kOneHotClasses, n);
  g.pose.x = static_cast<int>(agent % static_cast<std::size_t>(width));
  g.pose.y = static_cast<int>(agent / static_cast<std::size_t>(width));
  g.pose.heading = static_cast<Heading>(argmax(n * kOneHotClasses + n, 4));
  g.pose.has_key = data[n * kOneHotClasses + n + 4] > 0.5;
  return g;
}

namespace detail {

// MiniGrid (object, colour, state) triples.
inline std::array<double, 3> minigrid_triple(const Cell& c) {
  switch (c.kind) {
    case CellKind::Floor: return {1, 0, 0};
    case CellKind::Wall: return {2, 5, 0};
    case CellKind::Door: return {4, 4, c.open ? 0.0 : (c.locked ? 2.0 : 1.0)};
    case CellKind::Key: return {5, 4, 0};
    case CellKind::Goal: return {8, 1, 0};
    case CellKind::Lava: return {9, 0, 0};
  }
  return {0, 0, 0};
}

}  // namespace detail

/// 7x7x3 egocentric crop: the agent sits at the bottom centre of the view,
/// facing up. Cells outside the map read as Wall; the agent's own cell shows
/// the carried key, if any.
inline std::vector<double> encode_partial(int width, int height, std::span<const Cell> cells, const AgentPose& pose) {
  std::vector<double> out(kViewSize * kViewSize * 3, 0.0);
  const int fx = dx_of(pose.heading), fy = dy_of(pose.heading);
  const Heading right = turn_right(pose.heading);
  const int rx = dx_of(right), ry = dy_of(right);
  for (int j = 0; j < kViewSize; ++j) {
    for (int i = 0; i < kViewSize; ++i) {
      const int ahead = kViewSize - 1 - j;
      const int side = i - kViewSize / 2;
      const int x = pose.x + fx * ahead + rx * side;
      const int y = pose.y + fy * ahead + ry * side;
      std::array<double, 3> t{2, 5, 0};
      if (x >= 0 && y >= 0 && x < width && y < height) t = detail::minigrid_triple(cells[static_cast<std::size_t>(y * width + x)]);
      if (ahead == 0 && side == 0) t = pose.has_key ? std::array<double, 3>{5, 4, 0} : std::array<double, 3>{1, 0, 0};
      const auto base = static_cast<std::size_t>((i * kViewSize + j) * 3);
      out[base] = t[0];
      out[base + 1] = t[1];
      out[base + 2] = t[2];
    }
  }
  return out;
}

inline Observation encode(ObsMode mode, int width, int height, std::span<const Cell> cells, const AgentPose& pose) {
  switch (mode) {
    case ObsMode::PartialGrid: return {mode, encode_partial(width, height, cells, pose)};
    case ObsMode::FullOneHot: return {mode, encode_one_hot(width, height, cells, pose)};
    case ObsMode::AgentXY: return {mode, {static_cast<double>(pose.x), static_cast<double>(pose.y)}};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

enum class StepEvent { None, ReachedGoal, EnteredLava };

/// Applies one action to a mutable grid and pose. Shared by GridEnv and the
/// enumerated transition model.
inline StepEvent apply_action(int width, std::span<Cell> cells, AgentPose& pose, Action action) {
  auto cell = [&](int x, int y) -> Cell& { return cells[static_cast<std::size_t>(y * width + x)]; };
  const int fx = pose.x + dx_of(pose.heading);
  const int fy = pose.y + dy_of(pose.heading);
  switch (action) {
    case Action::TurnLeft:
      pose.heading = turn_left(pose.heading);
      return StepEvent::None;
    case Action::TurnRight:
      pose.heading = turn_right(pose.heading);
      return StepEvent::None;
    case Action::Forward: {
      Cell& f = cell(fx, fy);
      const bool passable = f.kind == CellKind::Floor || f.kind == CellKind::Goal || f.kind == CellKind::Lava ||
                            (f.kind == CellKind::Door && f.open);
      if (!passable) return StepEvent::None;
      pose.x = fx;
      pose.y = fy;
      if (f.kind == CellKind::Goal) return StepEvent::ReachedGoal;
      if (f.kind == CellKind::Lava) return StepEvent::EnteredLava;
      return StepEvent::None;
    }
    case Action::Pickup: {
      Cell& f = cell(fx, fy);
      if (f.kind == CellKind::Key && !pose.has_key) {
        pose.has_key = true;
        f = Cell{CellKind::Floor};
      }
      return StepEvent::None;
    }
    case Action::Toggle: {
      Cell& f = cell(fx, fy);
      if (f.kind != CellKind::Door) return StepEvent::None;
      if (f.locked) {
        if (pose.has_key) {
          f.locked = false;
          f.open = true;
        }
      } else {
        f.open = !f.open;
      }
      return StepEvent::None;
    }
    case Action::Done:
      return StepEvent::None;
  }
  return StepEvent::None;
}

/// Sparse goal reward, 1 - 0.9 * steps_used / max_steps.
inline double goal_reward(int steps_used, int max_steps) {
  return 1.0 - 0.9 * static_cast<double>(steps_used) / static_cast<double>(max_steps);
}

/// A single gridworld episode runner. Not thread-safe; one owner per instance.
class GridEnv {
 public:
  explicit GridEnv(MapSpec spec, ObsMode mode = ObsMode::FullOneHot) : template_(std::move(spec)), mode_(mode) {
    validate(template_);
  }

  /// Restores the start state. Randomised layouts are re-drawn from `seed`.
  Observation reset(std::uint64_t seed) {
    layout_ = redraw_layout(template_, seed);
    validate(layout_);
    cells_ = layout_.cells;
    pose_ = AgentPose{layout_.agent_start.x, layout_.agent_start.y, layout_.agent_start.heading, false};
    steps_ = 0;
    started_ = true;
    finished_ = false;
    return observe();
  }

  Observation reset(const MapSpec& spec, std::uint64_t seed) {
    validate(spec);
    template_ = spec;
    return reset(seed);
  }

  Transition step(Action action) {
    if (!started_) throw EpisodeError("step called before reset");
    if (finished_) throw EpisodeError("step called on a finished episode");
    const int a = static_cast<int>(action);
    if (a < 0 || a >= kNumActions) throw EpisodeError("invalid action");

    Transition t;
    t.obs = observe();
    t.action = a;
    ++steps_;
    const StepEvent ev = apply_action(layout_.width, cells_, pose_, action);
    if (ev == StepEvent::ReachedGoal) {
      t.terminated = true;
      t.extrinsic_reward = goal_reward(steps_, layout_.episode_limit());
    } else if (ev == StepEvent::EnteredLava) {
      t.terminated = true;
    }
    if (!t.terminated && steps_ >= layout_.episode_limit()) t.truncated = true;
    finished_ = t.terminated || t.truncated;
    t.next_obs = observe();
    t.info = TransitionInfo{pose_, steps_};
    return t;
  }

  Observation observe() const { return observe(mode_); }
  Observation observe(ObsMode mode) const { return encode(mode, layout_.width, layout_.height, cells_, pose_); }

  const AgentPose& pose() const { return pose_; }
  int step_index() const { return steps_; }
  bool finished() const { return finished_; }
  ObsMode obs_mode() const { return mode_; }
  const MapSpec& layout() const { return layout_; }
  const MapSpec& spec() const { return template_; }
  std::span<const Cell> cells() const { return cells_; }
  std::size_t observation_size() const { return obs_size(mode_, template_.width, template_.height); }

 private:
  MapSpec template_;
  MapSpec layout_;
  ObsMode mode_;
  std::vector<Cell> cells_;
  AgentPose pose_;
  int steps_ = 0;
  bool started_ = false;
  bool finished_ = false;
};

}  // namespace vcse::gridworld
