#pragma once

#include "stbd/marl/exploration.hpp"
#include "stbd/marl/rollout.hpp"
#include "stbd/marl/team.hpp"

namespace stbd::backdoor {

struct InfluenceResult {
  int raw = 0;                 // teammates whose next greedy clean action differs
  bool terminal = false;       // episode was already over at t
  ArenaAction clean_action;    // a_{k,t}, greedy clean
  ArenaAction backdoor_action; // \hat a_{k,t}, greedy backdoored
  std::vector<int> next_clean;     // a_{i,t+1} per agent (branch A), -1 for k
  std::vector<int> next_deviated;  // \hat a_{i,t+1} per agent (branch B), -1 for k
};

// Two-branch counterfactual at step t. `snap` holds the world before acting
// and the team's hidden states after consuming o_t; `team` must currently be
// in exactly that state (its values for o_t are read directly). Branch A runs
// agent k's greedy clean action, branch B its greedy backdoored action, both
// with the given teammate and enemy actions, and each ends by querying the
// clean network on o_{t+1}. The team is restored to the snapshot on return.
template <typename S>
InfluenceResult unilateral_influence(const Arena& arena, const Snapshot& snap, marl::TeamPolicy<S>& team, int k,
                                     std::span<const ArenaAction> teammates, std::span<const ArenaAction> enemies) {
  const int n = arena.n_allies();
  InfluenceResult out;
  auto [world, hidden] = arena.restore(snap);
  if (!team.has_backdoor() || team.backdoored_agent() != k)
    throw ValidationError("unilateral_influence: team has no backdoored network for agent " + std::to_string(k));
  const bool over = [&] {
    bool allies = false, foes = false;
    for (const auto& u : world.units)
      if (u.alive) (u.side == Side::ally ? allies : foes) = true;
    return !allies || !foes || world.step_index >= arena.config().step_limit;
  }();
  if (over) {
    out.terminal = true;
    return out;
  }

  auto values = team.values();
  const auto mask = arena.available_actions(world, k);
  out.clean_action = ArenaAction::from_index(marl::greedy_action(team.clean_q().col(k), mask));
  out.backdoor_action = ArenaAction::from_index(marl::greedy_action(team.acting_q().col(k), mask));

  auto branch = [&](ArenaAction a_k) {
    auto [w, h] = arena.restore(snap);
    team.import_hidden(h);
    std::vector<ArenaAction> joint(teammates.begin(), teammates.end());
    joint[static_cast<std::size_t>(k)] = a_k;
    const auto next = arena.step(w, joint, enemies);
    team.observe(marl::observe_all(arena, next.state));
    std::vector<int> acts(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      acts[static_cast<std::size_t>(i)] =
          marl::greedy_action(team.clean_q().col(i), arena.available_actions(next.state, i));
    }
    return acts;
  };
  out.next_clean = branch(out.clean_action);
  out.next_deviated = out.backdoor_action == out.clean_action ? out.next_clean : branch(out.backdoor_action);
  for (int i = 0; i < n; ++i)
    if (i != k && out.next_clean[static_cast<std::size_t>(i)] != out.next_deviated[static_cast<std::size_t>(i)]) ++out.raw;

  // Back to the live timeline: hidden states after o_t and the values for o_t.
  auto [w, h] = arena.restore(snap);
  (void)w;
  team.import_hidden(h);
  team.set_values(std::move(values));
  return out;
}

}  // namespace stbd::backdoor
