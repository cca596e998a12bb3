#pragma once

#include <functional>

#include "stbd/marl/episode.hpp"
#include "stbd/marl/exploration.hpp"
#include "stbd/marl/team.hpp"

namespace stbd::marl {

inline std::vector<Observation> observe_all(const Arena& arena, const WorldState& w) {
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(arena.n_allies()));
  for (int i = 0; i < arena.n_allies(); ++i) out.push_back(arena.observe(w, i));
  return out;
}

inline std::vector<ActionMask> avail_all(const Arena& arena, const WorldState& w) {
  std::vector<ActionMask> out;
  out.reserve(static_cast<std::size_t>(arena.n_allies()));
  for (int i = 0; i < arena.n_allies(); ++i) out.push_back(arena.available_actions(w, i));
  return out;
}

template <typename S>
struct StepContext {
  const Arena& arena;
  const WorldState& world;  // before the step
  const std::vector<Observation>& obs;
  const std::vector<ActionMask>& avail;
  const std::vector<ArenaAction>& ally_actions;
  const std::vector<ArenaAction>& enemy_actions;
  const StepResult& result;
  TeamPolicy<S>& team;  // hidden states already advanced past o_t
};

template <typename S>
struct EpisodeHooks {
  // Replaces one enemy's heuristic action; called before allies act.
  std::function<std::optional<std::pair<int, ArenaAction>>(const WorldState&)> enemy_override;
  // Returns a replacement learning reward for this step, if any.
  std::function<std::optional<double>(const StepContext<S>&)> reward;
};

struct RolloutOptions {
  std::vector<double> epsilon;  // per agent
  bool record_units = true;
};

// Plays one episode from `start`. Agents act epsilon-greedily on the team's
// acting values; exploration draws come from `rng`.
template <typename S>
EpisodeRecord run_episode_from(const Arena& arena, TeamPolicy<S>& team, WorldState start, const RolloutOptions& opt,
                               std::mt19937_64& rng, const EpisodeHooks<S>& hooks = {}) {
  const int n = arena.n_allies();
  if (static_cast<int>(opt.epsilon.size()) != n) throw ValidationError("run_episode: one epsilon per agent required");
  EpisodeRecord ep;
  WorldState w = std::move(start);
  team.reset();
  std::vector<ArenaAction> ally(static_cast<std::size_t>(n));
  while (true) {
    StepRecord rec;
    rec.obs = observe_all(arena, w);
    rec.avail = avail_all(arena, w);
    rec.state = arena.state_features(w);
    if (opt.record_units) rec.units = w.units;

    auto enemies = arena.heuristic_enemies(w);
    if (hooks.enemy_override)
      if (auto o = hooks.enemy_override(w)) enemies[static_cast<std::size_t>(o->first)] = o->second;

    team.observe(rec.obs);
    const auto& q = team.acting_q();
    rec.actions.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto col = q.col(i);
      const int a = epsilon_greedy(col, rec.avail[static_cast<std::size_t>(i)], opt.epsilon[static_cast<std::size_t>(i)], rng);
      rec.actions[static_cast<std::size_t>(i)] = a;
      ally[static_cast<std::size_t>(i)] = ArenaAction::from_index(a);
    }
    for (const auto& e : enemies) rec.enemy_actions.push_back(e.index());

    StepResult res = arena.step(w, ally, enemies);
    rec.env_reward = res.reward;
    rec.reward = res.reward;
    rec.done = res.done;
    if (hooks.reward) {
      const StepContext<S> ctx{arena, w, rec.obs, rec.avail, ally, enemies, res, team};
      if (auto r = hooks.reward(ctx)) {
        rec.reward = *r;
        rec.hacked = true;
      }
    }
    ep.steps.push_back(std::move(rec));
    w = std::move(res.state);
    if (res.done) {
      ep.won = res.won;
      ep.truncated = res.truncated;
      break;
    }
  }
  ep.final_obs = observe_all(arena, w);
  ep.final_avail = avail_all(arena, w);
  ep.final_state = arena.state_features(w);
  if (opt.record_units) ep.final_units = w.units;
  return ep;
}

template <typename S>
EpisodeRecord run_episode(const Arena& arena, TeamPolicy<S>& team, std::uint64_t seed, const RolloutOptions& opt,
                          std::mt19937_64& rng, const EpisodeHooks<S>& hooks = {}) {
  auto ep = run_episode_from<S>(arena, team, arena.reset(seed), opt, rng, hooks);
  ep.seed = seed;
  return ep;
}

}  // namespace stbd::marl
