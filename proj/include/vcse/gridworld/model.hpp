#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

#include "vcse/error.hpp"
#include "vcse/gridworld/env.hpp"
#include "vcse/gridworld/map.hpp"

namespace vcse::gridworld {

/// Reachable-state tabulation of a fixed layout. A state is the agent pose
/// plus which keys were taken and what each door looks like; the episode
/// clock is not part of it, so rewards that depend on elapsed steps are
/// produced by reward_at().
class TransitionModel {
 public:
  struct State {
    AgentPose pose;
    std::uint32_t keys_taken = 0;   // bit per key cell, in layout order
    std::uint32_t door_bits = 0;    // 2 bits per door: 0 locked, 1 closed, 2 open

    friend bool operator==(const State&, const State&) = default;
  };

  struct Outcome {
    int next = -1;  // -1 when the action ends the episode
    bool terminated = false;
    bool reached_goal = false;
  };

  static constexpr int kTerminal = -1;

  explicit TransitionModel(const MapSpec& spec) : layout_(spec) {
    validate(spec);
    if (spec.randomize_layout) throw DomainError("transition_model: randomised layouts have no fixed model");
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Cell& c = spec.at(x, y);
        if (c.kind == CellKind::Key) keys_.push_back(y * spec.width + x);
        if (c.kind == CellKind::Door) doors_.push_back(y * spec.width + x);
      }
    }
    if (keys_.size() > 8 || doors_.size() > 16) throw DomainError("transition_model: too many keys or doors");
    enumerate();
  }

  std::size_t num_states() const { return states_.size(); }
  const State& state(std::size_t i) const { return states_[i]; }
  const Outcome& outcome(std::size_t s, int action) const {
    return outcomes_[s * kNumActions + static_cast<std::size_t>(action)];
  }
  std::size_t start_state() const { return 0; }
  const MapSpec& layout() const { return layout_; }
  int max_steps() const { return layout_.episode_limit(); }

  /// Index of a (cells, pose) configuration, or -1 if it is not reachable.
  int index_of(std::span<const Cell> cells, const AgentPose& pose) const {
    const auto it = index_.find(pack(from_grid(cells, pose)));
    return it == index_.end() ? -1 : it->second;
  }

  std::vector<Cell> cells_of(std::size_t s) const {
    const State& st = states_[s];
    std::vector<Cell> cells = layout_.cells;
    for (std::size_t k = 0; k < keys_.size(); ++k) {
      if (st.keys_taken & (1u << k)) cells[static_cast<std::size_t>(keys_[k])] = Cell{CellKind::Floor};
    }
    for (std::size_t d = 0; d < doors_.size(); ++d) {
      const auto bits = (st.door_bits >> (2 * d)) & 3u;
      cells[static_cast<std::size_t>(doors_[d])] = Cell{CellKind::Door, bits == 0, bits == 2};
    }
    return cells;
  }

  Observation observation(std::size_t s, ObsMode mode) const {
    return encode(mode, layout_.width, layout_.height, cells_of(s), states_[s].pose);
  }

  /// Reward of an outcome reached on the `steps_used`-th step of an episode.
  double reward_at(const Outcome& o, int steps_used) const {
    return o.reached_goal ? goal_reward(steps_used, max_steps()) : 0.0;
  }

  /// Clock-free reward used for policy evaluation: 1 on reaching the goal.
  static double stationary_reward(const Outcome& o) { return o.reached_goal ? 1.0 : 0.0; }

 private:
  static std::uint64_t pack(const State& s) {
    std::uint64_t k = static_cast<std::uint64_t>(s.pose.x);
    k = (k << 6) | static_cast<std::uint64_t>(s.pose.y);
    k = (k << 2) | static_cast<std::uint64_t>(s.pose.heading);
    k = (k << 1) | (s.pose.has_key ? 1u : 0u);
    k = (k << 8) | s.keys_taken;
    k = (k << 32) | s.door_bits;
    return k;
  }

  State from_grid(std::span<const Cell> cells, const AgentPose& pose) const {
    State s;
    s.pose = pose;
    for (std::size_t k = 0; k < keys_.size(); ++k) {
      if (cells[static_cast<std::size_t>(keys_[k])].kind != CellKind::Key) s.keys_taken |= 1u << k;
    }
    for (std::size_t d = 0; d < doors_.size(); ++d) {
      const Cell& c = cells[static_cast<std::size_t>(doors_[d])];
      const std::uint32_t bits = c.locked ? 0u : (c.open ? 2u : 1u);
      s.door_bits |= bits << (2 * d);
    }
    return s;
  }

  int intern(const State& s, std::deque<std::size_t>& frontier) {
    const auto key = pack(s);
    const auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(states_.size());
    index_.emplace(key, id);
    states_.push_back(s);
    frontier.push_back(static_cast<std::size_t>(id));
    return id;
  }

  void enumerate() {
    std::deque<std::size_t> frontier;
    const auto& st = layout_.agent_start;
    intern(from_grid(layout_.cells, AgentPose{st.x, st.y, st.heading, false}), frontier);
    while (!frontier.empty()) {
      const std::size_t s = frontier.front();
      frontier.pop_front();
      if (outcomes_.size() < (s + 1) * kNumActions) outcomes_.resize((s + 1) * kNumActions);
      for (int a = 0; a < kNumActions; ++a) {
        std::vector<Cell> cells = cells_of(s);
        AgentPose pose = states_[s].pose;
        const StepEvent ev = apply_action(layout_.width, cells, pose, static_cast<Action>(a));
        Outcome o;
        if (ev == StepEvent::None) {
          o.next = intern(from_grid(cells, pose), frontier);
        } else {
          o.terminated = true;
          o.reached_goal = ev == StepEvent::ReachedGoal;
        }
        outcomes_[s * kNumActions + static_cast<std::size_t>(a)] = o;
      }
    }
    outcomes_.resize(states_.size() * kNumActions);
  }

  MapSpec layout_;
  std::vector<int> keys_;
  std::vector<int> doors_;
  std::vector<State> states_;
  std::vector<Outcome> outcomes_;
  std::unordered_map<std::uint64_t, int> index_;
};

/// Exact tabular dynamics of a fixed layout.
inline TransitionModel transition_model(const MapSpec& spec) { return TransitionModel(spec); }

}  // namespace vcse::gridworld
