#pragma once

#include <utility>

#include "stbd/trigger/formula.hpp"

namespace stbd::trigger {

inline Frame frame_of(const Arena& arena, std::span<const UnitState> units, int agent, int enemy) {
  Frame f;
  const auto& b = units[static_cast<std::size_t>(agent)];
  const auto& e = units[static_cast<std::size_t>(arena.n_allies() + enemy)];
  if (b.alive) f.b = b.position;
  if (e.alive) f.e = e.position;
  return f;
}

// Every index t >= window-1 whose window [t-window+1, t] satisfies the formula.
// Each constraint is evaluated once per frame and looked up per window.
inline std::vector<int> match_trajectory(const TriggerSpec& spec, std::span<const Frame> traj) {
  std::vector<int> hits;
  const int T = static_cast<int>(traj.size());
  if (T < spec.window) return hits;
  std::vector<std::vector<char>> table(spec.constraints.size(), std::vector<char>(static_cast<std::size_t>(T)));
  for (std::size_t c = 0; c < spec.constraints.size(); ++c)
    for (int t = 0; t < T; ++t) table[c][static_cast<std::size_t>(t)] = spec.constraints[c].eval(traj[static_cast<std::size_t>(t)]);
  for (int t = spec.window - 1; t < T; ++t) {
    const bool ok = eval_tree(spec.formula, [&](int c) {
      return table[static_cast<std::size_t>(c)][static_cast<std::size_t>(t + spec.constraints[static_cast<std::size_t>(c)].offset)] != 0;
    });
    if (ok) hits.push_back(t);
  }
  return hits;
}

struct MatchState {
  bool active = false;
  bool attempted = false;  // one activation per episode
  std::optional<int> controlled_enemy;
  int steps_into_sequence = 0;
  std::optional<int> activation_step;
  std::optional<int> completion_step;
  std::vector<Frame> window;  // realized frames since activation
};

struct DriverOutput {
  std::optional<std::pair<int, ArenaAction>> override_action;
  MatchState state;
};

// Called once per step of a poisoned episode with the world before actions.
// Scans visible enemies for one satisfying the anchor constraints, then plays
// the action sequence one step at a time and checks the realized window on
// the last step. An unavailable sequence action is replaced by stop.
inline DriverOutput drive_attacker(const TriggerSpec& spec, const Arena& arena, const WorldState& w, int agent,
                                   MatchState m) {
  DriverOutput out;
  const auto& me = arena.ally(w, agent);
  if (!m.active) {
    if (m.attempted || !me.alive) {
      out.state = std::move(m);
      return out;
    }
    const auto anchor = spec.anchor();
    for (int j = 0; j < arena.n_enemies(); ++j) {
      const auto& e = arena.enemy(w, j);
      if (!e.alive || distance(e.position, me.position) > arena.config().sight_radius) continue;
      const Frame f{me.position, e.position};
      bool ok = true;
      for (int c : anchor) ok = ok && spec.constraints[static_cast<std::size_t>(c)].eval(f);
      if (!ok) continue;
      m.active = true;
      m.attempted = true;
      m.controlled_enemy = j;
      m.steps_into_sequence = 0;
      m.activation_step = w.step_index;
      m.window.clear();
      break;
    }
    if (!m.active) {
      out.state = std::move(m);
      return out;
    }
  }

  const int j = *m.controlled_enemy;
  const auto& e = arena.enemy(w, j);
  if (!e.alive) {
    m.active = false;
    out.state = std::move(m);
    return out;
  }
  m.window.push_back(frame_of(arena, w.units, agent, j));
  ArenaAction a = spec.actions[static_cast<std::size_t>(m.steps_into_sequence)];
  const auto mask = arena.enemy_available_actions(w, j);
  if (a.index() >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(a.index())]) a = ArenaAction::stop();
  out.override_action = std::make_pair(j, a);
  ++m.steps_into_sequence;
  if (m.steps_into_sequence == spec.window) {
    if (eval_formula(spec, m.window)) m.completion_step = w.step_index;
    m.active = false;
  }
  out.state = std::move(m);
  return out;
}

}  // namespace stbd::trigger
