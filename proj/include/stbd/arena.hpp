#pragma once

// Partially observable n-vs-m combat arena.
//
// Units live on a continuous plane but move in fixed cardinal steps, so the
// relative offsets between an ally and an enemy stay on a lattice shifted by
// `enemy_lattice_offset` along x. Enemies are driven by a deterministic
// heuristic unless a caller overrides one of them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stbd/common.hpp"

namespace stbd {

enum class Side : std::uint8_t { ally, enemy };
enum class Dir : std::uint8_t { north, south, east, west };

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Action slots: 0 noop, 1 stop, 2..5 moves (N, S, E, W), 6.. attack target slot.
class ArenaAction {
 public:
  static constexpr int kNoOp = 0;
  static constexpr int kStop = 1;
  static constexpr int kFirstMove = 2;
  static constexpr int kFirstAttack = 6;

  constexpr ArenaAction() = default;
  static constexpr ArenaAction noop() { return ArenaAction(kNoOp); }
  static constexpr ArenaAction stop() { return ArenaAction(kStop); }
  static constexpr ArenaAction move(Dir d) { return ArenaAction(kFirstMove + static_cast<int>(d)); }
  static constexpr ArenaAction attack(int slot) { return ArenaAction(kFirstAttack + slot); }
  static constexpr ArenaAction from_index(int index) { return ArenaAction(index); }

  constexpr int index() const { return index_; }
  constexpr bool is_noop() const { return index_ == kNoOp; }
  constexpr bool is_stop() const { return index_ == kStop; }
  constexpr bool is_move() const { return index_ >= kFirstMove && index_ < kFirstAttack; }
  constexpr bool is_attack() const { return index_ >= kFirstAttack; }
  constexpr Dir direction() const { return static_cast<Dir>(index_ - kFirstMove); }
  constexpr int target() const { return index_ - kFirstAttack; }

  friend constexpr bool operator==(ArenaAction, ArenaAction) = default;

 private:
  constexpr explicit ArenaAction(int index) : index_(index) {}
  int index_ = kNoOp;
};

inline std::string to_string(ArenaAction a) {
  switch (a.index()) {
    case ArenaAction::kNoOp: return "noop";
    case ArenaAction::kStop: return "stop";
    case ArenaAction::kFirstMove + 0: return "north";
    case ArenaAction::kFirstMove + 1: return "south";
    case ArenaAction::kFirstMove + 2: return "east";
    case ArenaAction::kFirstMove + 3: return "west";
    default: return "attack(" + std::to_string(a.target()) + ")";
  }
}

// Parses the non-attack vocabulary used by trigger files.
inline std::optional<ArenaAction> parse_move_action(std::string_view name) {
  if (name == "noop") return ArenaAction::noop();
  if (name == "stop") return ArenaAction::stop();
  if (name == "north") return ArenaAction::move(Dir::north);
  if (name == "south") return ArenaAction::move(Dir::south);
  if (name == "east") return ArenaAction::move(Dir::east);
  if (name == "west") return ArenaAction::move(Dir::west);
  return std::nullopt;
}

struct ArenaConfig {
  int n_allies = 8;
  int n_enemies = 8;
  double width = 32.4;
  double height = 27.0;
  double move_step = 2.7;
  double enemy_lattice_offset = 0.8;
  double sight_radius = 9.0;
  double attack_radius = 9.0;
  double damage = 1.0;
  double initial_health = 15.0;
  int attack_cooldown = 1;
  int step_limit = 60;
  double kill_reward = 10.0;
  double win_reward = 200.0;
  // Per-step reward ceiling after scaling; the scale is derived from it.
  double reward_max = 20.0;
  // Probability that an in-range attack lands; draws from the world rng only when < 1.
  double hit_chance = 1.0;
  std::vector<int> ally_spawn_columns{0, 1};
  std::vector<int> enemy_spawn_columns{5, 6, 7, 8};

  int columns() const { return static_cast<int>(std::floor(width / move_step + 1e-9)); }
  int rows() const { return static_cast<int>(std::floor(height / move_step + 1e-9)); }

  double raw_reward_max() const {
    return n_enemies * kill_reward + win_reward + n_enemies * initial_health;
  }
  double reward_scale() const { return reward_max / raw_reward_max(); }

  void validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("arena config: " + what); };
    if (n_allies <= 0) fail("n_allies must be positive");
    if (n_enemies <= 0) fail("n_enemies must be positive");
    if (!(width > 0.0) || !(height > 0.0)) fail("arena size must be positive");
    if (!(move_step > 0.0)) fail("move_step must be positive");
    if (!(sight_radius > 0.0) || !(attack_radius > 0.0)) fail("radii must be positive");
    if (!(damage > 0.0)) fail("damage must be positive");
    if (!(initial_health > 0.0)) fail("initial_health must be positive");
    if (attack_cooldown < 1) fail("attack_cooldown must be >= 1");
    if (step_limit < 1) fail("step_limit must be >= 1");
    if (kill_reward < 0.0 || win_reward < 0.0) fail("reward bonuses must be non-negative");
    if (!(reward_max > 0.0)) fail("reward_max must be positive");
    if (!(hit_chance > 0.0) || hit_chance > 1.0) fail("hit_chance must lie in (0, 1]");
    if (enemy_lattice_offset < 0.0 || enemy_lattice_offset >= move_step)
      fail("enemy_lattice_offset must lie in [0, move_step)");
    if (rows() < std::max(n_allies, n_enemies)) fail("arena too short for one unit per spawn row");
    auto check_cols = [&](const std::vector<int>& cols, const char* name) {
      if (cols.empty()) fail(std::string(name) + " must not be empty");
      for (int c : cols)
        if (c < 0 || c >= columns()) fail(std::string(name) + " outside the arena");
    };
    check_cols(ally_spawn_columns, "ally_spawn_columns");
    check_cols(enemy_spawn_columns, "enemy_spawn_columns");
  }

  // 3-vs-3 layout used for the desk-scale experiments.
  static ArenaConfig desk_scale() {
    ArenaConfig c;
    c.n_allies = 3;
    c.n_enemies = 3;
    c.width = 12 * 2.7;
    c.height = 5 * 2.7;
    c.ally_spawn_columns = {0, 1};
    c.enemy_spawn_columns = {5, 6, 7, 8};
    return c;
  }
};

struct UnitState {
  int id = 0;
  Side side = Side::ally;
  Vec2 position;
  double health = 0.0;
  bool alive = false;
  int cooldown = 0;
  friend bool operator==(const UnitState&, const UnitState&) = default;
};

struct WorldState {
  std::vector<UnitState> units;  // allies first, then enemies
  int step_index = 0;
  std::mt19937_64 rng;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Canonical byte encoding; equal bytes <=> equal states.
inline std::string serialize(const WorldState& w) {
  std::ostringstream os(std::ios::binary);
  auto put = [&os](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(static_cast<std::uint32_t>(w.units.size()));
  for (const auto& u : w.units) {
    put(static_cast<std::int32_t>(u.id));
    put(static_cast<std::uint8_t>(u.side));
    put(u.position.x);
    put(u.position.y);
    put(u.health);
    put(static_cast<std::uint8_t>(u.alive));
    put(static_cast<std::int32_t>(u.cooldown));
  }
  put(static_cast<std::int32_t>(w.step_index));
  os << w.rng;
  return os.str();
}

using Observation = std::vector<float>;
using ActionMask = std::vector<std::uint8_t>;
using HiddenRegistry = std::map<std::string, std::vector<double>>;

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  std::uint32_t version = kSnapshotVersion;
  WorldState world;
  HiddenRegistry hidden;
};

struct StepResult {
  WorldState state;
  double reward = 0.0;
  bool done = false;
  bool won = false;
  bool truncated = false;  // ended by the step limit
  double raw_reward = 0.0;
  int kills = 0;
};

class Arena {
 public:
  explicit Arena(ArenaConfig config) : cfg_(std::move(config)) { cfg_.validate(); }

  const ArenaConfig& config() const { return cfg_; }
  int n_allies() const { return cfg_.n_allies; }
  int n_enemies() const { return cfg_.n_enemies; }
  int n_actions() const { return ArenaAction::kFirstAttack + cfg_.n_enemies; }
  int n_enemy_actions() const { return ArenaAction::kFirstAttack + cfg_.n_allies; }
  int obs_size() const { return 3 + 4 * (cfg_.n_allies - 1) + 4 * cfg_.n_enemies; }
  int state_size() const { return 3 * (cfg_.n_allies + cfg_.n_enemies); }
  double reward_min() const { return 0.0; }
  double reward_max() const { return cfg_.reward_max; }

  const UnitState& ally(const WorldState& w, int i) const { return w.units[static_cast<std::size_t>(i)]; }
  const UnitState& enemy(const WorldState& w, int j) const {
    return w.units[static_cast<std::size_t>(cfg_.n_allies + j)];
  }

  Vec2 ally_spawn(int column, int row) const {
    return {cfg_.move_step * (column + 0.5), cfg_.move_step * (row + 0.5)};
  }
  Vec2 enemy_spawn(int column, int row) const {
    return {cfg_.move_step * (column + 0.5) + cfg_.enemy_lattice_offset, cfg_.move_step * (row + 0.5)};
  }

  WorldState reset(std::uint64_t seed) const {
    WorldState w;
    w.rng.seed(seed);
    const int block = std::max(cfg_.n_allies, cfg_.n_enemies);
    const int first_row = uniform_int(w.rng, 0, cfg_.rows() - block);
    auto rows_for = [&](int count) {
      std::vector<int> rows(static_cast<std::size_t>(block));
      for (int r = 0; r < block; ++r) rows[static_cast<std::size_t>(r)] = first_row + r;
      for (int i = block - 1; i > 0; --i) std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(uniform_int(w.rng, 0, i))]);
      rows.resize(static_cast<std::size_t>(count));
      return rows;
    };
    const auto ally_rows = rows_for(cfg_.n_allies);
    const auto enemy_rows = rows_for(cfg_.n_enemies);
    auto pick = [&](const std::vector<int>& cols) {
      return cols[static_cast<std::size_t>(uniform_int(w.rng, 0, static_cast<int>(cols.size()) - 1))];
    };
    for (int i = 0; i < cfg_.n_allies; ++i) {
      UnitState u;
      u.id = i;
      u.side = Side::ally;
      u.position = ally_spawn(pick(cfg_.ally_spawn_columns), ally_rows[static_cast<std::size_t>(i)]);
      u.health = cfg_.initial_health;
      u.alive = true;
      w.units.push_back(u);
    }
    for (int j = 0; j < cfg_.n_enemies; ++j) {
      UnitState u;
      u.id = cfg_.n_allies + j;
      u.side = Side::enemy;
      u.position = enemy_spawn(pick(cfg_.enemy_spawn_columns), enemy_rows[static_cast<std::size_t>(j)]);
      u.health = cfg_.initial_health;
      u.alive = true;
      w.units.push_back(u);
    }
    return w;
  }

  ActionMask available_actions(const WorldState& w, int agent) const {
    check_ally(agent);
    return mask_for(w, ally(w, agent), Side::enemy);
  }

  ActionMask enemy_available_actions(const WorldState& w, int enemy_index) const {
    check_enemy(enemy_index);
    return mask_for(w, enemy(w, enemy_index), Side::ally);
  }

  Observation observe(const WorldState& w, int agent) const {
    check_ally(agent);
    Observation obs(static_cast<std::size_t>(obs_size()), 0.0f);
    const UnitState& self = ally(w, agent);
    if (!self.alive) return obs;
    const double h0 = cfg_.initial_health;
    obs[0] = static_cast<float>(self.health / h0);
    obs[1] = static_cast<float>(self.position.x / cfg_.width);
    obs[2] = static_cast<float>(self.position.y / cfg_.height);
    std::size_t k = 3;
    auto put_unit = [&](const UnitState& u) {
      if (u.alive && distance(u.position, self.position) <= cfg_.sight_radius) {
        obs[k + 0] = static_cast<float>((u.position.x - self.position.x) / cfg_.sight_radius);
        obs[k + 1] = static_cast<float>((u.position.y - self.position.y) / cfg_.sight_radius);
        obs[k + 2] = static_cast<float>(u.health / h0);
        obs[k + 3] = 1.0f;
      }
      k += 4;
    };
    for (int i = 0; i < cfg_.n_allies; ++i)
      if (i != agent) put_unit(ally(w, i));
    for (int j = 0; j < cfg_.n_enemies; ++j) put_unit(enemy(w, j));
    return obs;
  }

  // Global state for the centralized mixer: position and health per unit, zero when dead.
  std::vector<float> state_features(const WorldState& w) const {
    std::vector<float> s;
    s.reserve(static_cast<std::size_t>(state_size()));
    for (const auto& u : w.units) {
      if (u.alive) {
        s.push_back(static_cast<float>(u.position.x / cfg_.width));
        s.push_back(static_cast<float>(u.position.y / cfg_.height));
        s.push_back(static_cast<float>(u.health / cfg_.initial_health));
      } else {
        s.insert(s.end(), 3, 0.0f);
      }
    }
    return s;
  }

  ArenaAction heuristic_enemy(const WorldState& w, int enemy_index) const {
    check_enemy(enemy_index);
    const UnitState& self = enemy(w, enemy_index);
    if (!self.alive) return ArenaAction::noop();
    int target = -1;
    double best = 0.0;
    for (int i = 0; i < cfg_.n_allies; ++i) {
      const UnitState& a = ally(w, i);
      if (!a.alive) continue;
      const double d = distance(a.position, self.position);
      if (target < 0 || d < best) {
        target = i;
        best = d;
      }
    }
    if (target < 0) return ArenaAction::stop();
    if (best <= cfg_.attack_radius) {
      return self.cooldown == 0 ? ArenaAction::attack(target) : ArenaAction::stop();
    }
    const Vec2 goal = ally(w, target).position;
    ArenaAction choice = ArenaAction::stop();
    double choice_dist = best;
    for (int d = 0; d < 4; ++d) {
      const Vec2 next = moved(self.position, static_cast<Dir>(d));
      if (!in_bounds(next)) continue;
      const double nd = distance(next, goal);
      if (nd < choice_dist - 1e-12) {
        choice = ArenaAction::move(static_cast<Dir>(d));
        choice_dist = nd;
      }
    }
    return choice;
  }

  std::vector<ArenaAction> heuristic_enemies(const WorldState& w) const {
    std::vector<ArenaAction> out;
    out.reserve(static_cast<std::size_t>(cfg_.n_enemies));
    for (int j = 0; j < cfg_.n_enemies; ++j) out.push_back(heuristic_enemy(w, j));
    return out;
  }

  StepResult step(const WorldState& w, std::span<const ArenaAction> ally_actions,
                  std::span<const ArenaAction> enemy_actions) const {
    if (static_cast<int>(ally_actions.size()) != cfg_.n_allies ||
        static_cast<int>(enemy_actions.size()) != cfg_.n_enemies)
      throw ArenaError("step: expected " + std::to_string(cfg_.n_allies) + " ally and " +
                       std::to_string(cfg_.n_enemies) + " enemy actions");
    const std::size_t n_units = w.units.size();
    std::vector<ArenaAction> acts(n_units);
    for (int i = 0; i < cfg_.n_allies; ++i) {
      const auto a = ally_actions[static_cast<std::size_t>(i)];
      require_available(available_actions(w, i), a, "ally " + std::to_string(i));
      acts[static_cast<std::size_t>(i)] = a;
    }
    for (int j = 0; j < cfg_.n_enemies; ++j) {
      const auto a = enemy_actions[static_cast<std::size_t>(j)];
      require_available(enemy_available_actions(w, j), a, "enemy " + std::to_string(j));
      acts[static_cast<std::size_t>(cfg_.n_allies + j)] = a;
    }

    StepResult out;
    out.state = w;
    auto& units = out.state.units;

    // Sequential resolution in unit-id order: a move into an occupied spot is blocked.
    for (std::size_t u = 0; u < n_units; ++u) {
      if (!units[u].alive || !acts[u].is_move()) continue;
      const Vec2 dest = moved(units[u].position, acts[u].direction());
      bool blocked = false;
      for (std::size_t v = 0; v < n_units && !blocked; ++v)
        blocked = v != u && units[v].alive && distance(units[v].position, dest) < kOccupancyTolerance;
      if (!blocked) units[u].position = dest;
    }

    std::vector<double> incoming(n_units, 0.0);
    for (std::size_t u = 0; u < n_units; ++u) {
      if (!units[u].alive || !acts[u].is_attack()) continue;
      const std::size_t t = target_unit(units[u].side, acts[u].target());
      units[u].cooldown = cfg_.attack_cooldown;
      if (distance(units[u].position, units[t].position) > cfg_.attack_radius + 1e-9) continue;
      if (cfg_.hit_chance < 1.0) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(out.state.rng) >= cfg_.hit_chance) continue;
      }
      incoming[t] += cfg_.damage;
    }

    double damage_dealt = 0.0;
    for (std::size_t u = 0; u < n_units; ++u) {
      auto& unit = units[u];
      if (!unit.alive || incoming[u] == 0.0) continue;
      const double before = unit.health;
      unit.health = std::max(0.0, before - incoming[u]);
      unit.alive = unit.health > 0.0;
      if (unit.side == Side::enemy) {
        damage_dealt += before - unit.health;
        if (!unit.alive) ++out.kills;
      }
    }
    for (auto& unit : units) {
      if (unit.cooldown > 0) --unit.cooldown;
      if (!unit.alive) unit.cooldown = 0;
    }
    ++out.state.step_index;

    bool allies_alive = false, enemies_alive = false;
    for (const auto& unit : units) {
      if (!unit.alive) continue;
      (unit.side == Side::ally ? allies_alive : enemies_alive) = true;
    }
    out.won = !enemies_alive && allies_alive;
    const bool combat_over = !enemies_alive || !allies_alive;
    out.done = combat_over || out.state.step_index >= cfg_.step_limit;
    out.truncated = out.done && !combat_over;
    out.raw_reward = damage_dealt + cfg_.kill_reward * out.kills + (out.won ? cfg_.win_reward : 0.0);
    out.reward = cfg_.reward_scale() * out.raw_reward;
    return out;
  }

  StepResult step(const WorldState& w, std::span<const ArenaAction> ally_actions) const {
    const auto enemies = heuristic_enemies(w);
    return step(w, ally_actions, enemies);
  }

  Snapshot snapshot(const WorldState& w, HiddenRegistry hidden = {}) const {
    return Snapshot{kSnapshotVersion, w, std::move(hidden)};
  }

  std::pair<WorldState, HiddenRegistry> restore(const Snapshot& s) const {
    if (s.version != kSnapshotVersion)
      throw ArenaError("snapshot version " + std::to_string(s.version) + " does not match " +
                       std::to_string(kSnapshotVersion));
    if (static_cast<int>(s.world.units.size()) != cfg_.n_allies + cfg_.n_enemies)
      throw ArenaError("snapshot unit count does not match the arena");
    return {s.world, s.hidden};
  }

  bool in_bounds(Vec2 p) const { return p.x >= 0.0 && p.x <= cfg_.width && p.y >= 0.0 && p.y <= cfg_.height; }

  Vec2 moved(Vec2 p, Dir d) const {
    switch (d) {
      case Dir::north: return {p.x, p.y + cfg_.move_step};
      case Dir::south: return {p.x, p.y - cfg_.move_step};
      case Dir::east: return {p.x + cfg_.move_step, p.y};
      case Dir::west: return {p.x - cfg_.move_step, p.y};
    }
    return p;
  }

 private:
  static constexpr double kOccupancyTolerance = 1e-3;

  static int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }

  void check_ally(int agent) const {
    if (agent < 0 || agent >= cfg_.n_allies) throw ArenaError("unknown ally id " + std::to_string(agent));
  }
  void check_enemy(int e) const {
    if (e < 0 || e >= cfg_.n_enemies) throw ArenaError("unknown enemy id " + std::to_string(e));
  }

  std::size_t target_unit(Side attacker, int slot) const {
    return static_cast<std::size_t>(attacker == Side::ally ? cfg_.n_allies + slot : slot);
  }

  ActionMask mask_for(const WorldState& w, const UnitState& self, Side opponents) const {
    const int n_targets = opponents == Side::enemy ? cfg_.n_enemies : cfg_.n_allies;
    ActionMask mask(static_cast<std::size_t>(ArenaAction::kFirstAttack + n_targets), 0);
    if (!self.alive) {
      mask[ArenaAction::kNoOp] = 1;
      return mask;
    }
    mask[ArenaAction::kStop] = 1;
    for (int d = 0; d < 4; ++d)
      mask[static_cast<std::size_t>(ArenaAction::kFirstMove + d)] = in_bounds(moved(self.position, static_cast<Dir>(d)));
    if (self.cooldown == 0) {
      for (int t = 0; t < n_targets; ++t) {
        const UnitState& other = w.units[target_unit(self.side, t)];
        mask[static_cast<std::size_t>(ArenaAction::kFirstAttack + t)] =
            other.alive && distance(other.position, self.position) <= cfg_.attack_radius;
      }
    }
    return mask;
  }

  static void require_available(const ActionMask& mask, ArenaAction a, const std::string& who) {
    if (a.index() < 0 || a.index() >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(a.index())])
      throw ArenaError(who + ": action " + to_string(a) + " is not available");
  }

  ArenaConfig cfg_;
};

}  // namespace stbd
