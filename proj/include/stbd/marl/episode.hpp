#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "stbd/arena.hpp"

namespace stbd::marl {

struct StepRecord {
  std::vector<float> state;
  std::vector<Observation> obs;     // one per agent
  std::vector<ActionMask> avail;    // one per agent
  std::vector<int> actions;         // ally action indices
  std::vector<int> enemy_actions;
  std::vector<UnitState> units;     // world before the step, for traces and matching
  double reward = 0.0;              // reward used for learning (possibly hacked)
  double env_reward = 0.0;          // team reward returned by the arena
  bool done = false;
  bool hacked = false;
};

// One complete episode. `final_*` hold the observation after the last step so
// the learner can bootstrap from it.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<float> final_state;
  std::vector<Observation> final_obs;
  std::vector<ActionMask> final_avail;
  std::vector<UnitState> final_units;
  bool won = false;
  bool truncated = false;
  bool poisoned = false;
  std::optional<int> completion_step;
  std::optional<int> controlled_enemy;

  int length() const { return static_cast<int>(steps.size()); }

  double env_return() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.env_reward;
    return r;
  }

  std::vector<int> hacked_steps() const {
    std::vector<int> out;
    for (int t = 0; t < length(); ++t)
      if (steps[static_cast<std::size_t>(t)].hacked) out.push_back(t);
    return out;
  }

  // Structural invariants: exactly one terminal step at the end, hacked only when poisoned.
  bool well_formed() const {
    if (steps.empty()) return false;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      if (steps[t].done != (t + 1 == steps.size())) return false;
      if (steps[t].hacked && !poisoned) return false;
      if (steps[t].obs.size() != steps[t].actions.size() || steps[t].avail.size() != steps[t].actions.size()) return false;
    }
    return true;
  }
};

}  // namespace stbd::marl
