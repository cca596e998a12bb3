#include <gtest/gtest.h>

#include "stbd/arena.hpp"

using namespace stbd;

namespace {

// Places every unit by hand; units not listed are parked dead.
WorldState scene(const Arena& a, const std::vector<std::pair<int, Vec2>>& alive) {
  WorldState w = a.reset(0);
  for (auto& u : w.units) {
    u.alive = false;
    u.health = 0.0;
  }
  for (const auto& [id, p] : alive) {
    auto& u = w.units[static_cast<std::size_t>(id)];
    u.alive = true;
    u.health = a.config().initial_health;
    u.position = p;
  }
  return w;
}

std::vector<ArenaAction> all(int n, ArenaAction a) { return std::vector<ArenaAction>(static_cast<std::size_t>(n), a); }

std::vector<ArenaAction> noops_for_dead(const Arena& a, const WorldState& w, Side side, ArenaAction live) {
  std::vector<ArenaAction> out;
  const int n = side == Side::ally ? a.n_allies() : a.n_enemies();
  for (int i = 0; i < n; ++i) {
    const auto& u = side == Side::ally ? a.ally(w, i) : a.enemy(w, i);
    out.push_back(u.alive ? live : ArenaAction::noop());
  }
  return out;
}

ArenaAction random_available(const ActionMask& m, std::mt19937_64& rng) {
  std::vector<int> ok;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) ok.push_back(static_cast<int>(i));
  return ArenaAction::from_index(ok[rng() % ok.size()]);
}

struct RandomJoint {
  std::vector<ArenaAction> allies, enemies;
};

RandomJoint random_joint(const Arena& a, const WorldState& w, std::mt19937_64& rng) {
  RandomJoint j;
  for (int i = 0; i < a.n_allies(); ++i) j.allies.push_back(random_available(a.available_actions(w, i), rng));
  for (int e = 0; e < a.n_enemies(); ++e) j.enemies.push_back(random_available(a.enemy_available_actions(w, e), rng));
  return j;
}

}  // namespace

TEST(Reset, UnitCountsAndDeterminism) {
  const Arena big{ArenaConfig{}};
  const auto w8 = big.reset(1);
  EXPECT_EQ(w8.units.size(), 16u);
  for (const auto& u : w8.units) EXPECT_TRUE(u.alive);
  EXPECT_EQ(w8.step_index, 0);

  const Arena small(ArenaConfig::desk_scale());
  const auto w3 = small.reset(7);
  EXPECT_EQ(w3.units.size(), 6u);
  for (const auto& u : w3.units) {
    EXPECT_TRUE(u.alive);
    EXPECT_TRUE(small.in_bounds(u.position));
  }
  EXPECT_EQ(serialize(small.reset(7)), serialize(w3));
}

TEST(Reset, InvalidConfigsAreRejected) {
  auto c = ArenaConfig::desk_scale();
  c.n_allies = 0;
  EXPECT_THROW(Arena{c}, ValidationError);
  c = ArenaConfig::desk_scale();
  c.width = 0.0;
  EXPECT_THROW(Arena{c}, ValidationError);
  c = ArenaConfig::desk_scale();
  c.n_enemies = -2;
  EXPECT_THROW(Arena{c}, ValidationError);
  c = ArenaConfig::desk_scale();
  c.reward_max = 0.0;
  EXPECT_THROW(Arena{c}, ValidationError);
}

TEST(Step, NoInteractionGivesZeroReward) {
  const Arena a(ArenaConfig::desk_scale());
  const auto w = scene(a, {{0, {1.35, 1.35}}, {3, {30.0, 12.0}}});
  const auto allies = noops_for_dead(a, w, Side::ally, ArenaAction::stop());
  const auto enemies = noops_for_dead(a, w, Side::enemy, ArenaAction::stop());
  const auto r = a.step(w, allies, enemies);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.done);
  EXPECT_EQ(r.state.step_index, 1);
}

TEST(Step, FinalKillAddsKillAndWinBonus) {
  const Arena a(ArenaConfig::desk_scale());
  auto w = scene(a, {{0, {10.0, 5.0}}, {3, {13.0, 5.0}}});
  w.units[3].health = 1.0;
  auto allies = noops_for_dead(a, w, Side::ally, ArenaAction::stop());
  allies[0] = ArenaAction::attack(0);
  const auto r = a.step(w, allies, noops_for_dead(a, w, Side::enemy, ArenaAction::stop()));
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.won);
  EXPECT_EQ(r.kills, 1);
  EXPECT_DOUBLE_EQ(r.raw_reward, 1.0 + 10.0 + 200.0);
  EXPECT_DOUBLE_EQ(r.reward, 211.0 * 20.0 / (3 * 10.0 + 200.0 + 3 * 15.0));
}

TEST(Step, AllAlliesDeadEndsWithoutReward) {
  const Arena a(ArenaConfig::desk_scale());
  auto w = scene(a, {{0, {10.0, 5.0}}, {3, {13.0, 5.0}}});
  w.units[0].health = 1.0;
  auto enemies = noops_for_dead(a, w, Side::enemy, ArenaAction::stop());
  enemies[0] = ArenaAction::attack(0);
  const auto r = a.step(w, noops_for_dead(a, w, Side::ally, ArenaAction::stop()), enemies);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.won);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.state.units[0].alive);
  EXPECT_EQ(r.state.units[0].health, 0.0);
}

TEST(Step, UnavailableActionNamesTheAgent) {
  const Arena a(ArenaConfig::desk_scale());
  const auto w = scene(a, {{0, {1.35, 1.35}}, {1, {1.35, 4.05}}, {3, {30.0, 12.0}}});
  auto allies = noops_for_dead(a, w, Side::ally, ArenaAction::stop());
  allies[1] = ArenaAction::attack(0);
  try {
    a.step(w, allies, noops_for_dead(a, w, Side::enemy, ArenaAction::stop()));
    FAIL() << "expected ArenaError";
  } catch (const ArenaError& e) {
    EXPECT_NE(std::string(e.what()).find("ally 1"), std::string::npos) << e.what();
  }
  allies[1] = ArenaAction::stop();
  allies[2] = ArenaAction::stop();  // dead unit may only no-op
  EXPECT_THROW(a.step(w, allies, noops_for_dead(a, w, Side::enemy, ArenaAction::stop())), ArenaError);
  EXPECT_THROW(a.step(w, all(2, ArenaAction::noop()), all(3, ArenaAction::noop())), ArenaError);
}

TEST(Step, StepLimitTruncates) {
  auto c = ArenaConfig::desk_scale();
  c.step_limit = 3;
  const Arena a(c);
  auto w = scene(a, {{0, {1.35, 1.35}}, {3, {30.0, 12.0}}});
  const auto allies = noops_for_dead(a, w, Side::ally, ArenaAction::stop());
  const auto enemies = noops_for_dead(a, w, Side::enemy, ArenaAction::stop());
  StepResult r;
  for (int t = 0; t < 3; ++t) {
    r = a.step(w, allies, enemies);
    w = r.state;
  }
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.won);
}

TEST(Step, MovesResolveInIdOrderAndBlockCollisions) {
  const Arena a(ArenaConfig::desk_scale());
  const double s = a.config().move_step;
  const auto w = scene(a, {{0, {s * 1.5, s * 1.5}}, {1, {s * 3.5, s * 1.5}}, {3, {30.0, 12.0}}});
  auto allies = noops_for_dead(a, w, Side::ally, ArenaAction::stop());
  allies[0] = ArenaAction::move(Dir::east);
  allies[1] = ArenaAction::move(Dir::west);
  const auto r = a.step(w, allies, noops_for_dead(a, w, Side::enemy, ArenaAction::stop()));
  EXPECT_DOUBLE_EQ(r.state.units[0].position.x, s * 2.5);
  EXPECT_DOUBLE_EQ(r.state.units[1].position.x, s * 3.5);  // blocked by unit 0
}

TEST(Observe, EnemyDueEastIsEncodedRelativeToSight) {
  const Arena a(ArenaConfig::desk_scale());
  const double d = 5.0;
  const auto w = scene(a, {{0, {10.0, 6.0}}, {4, {10.0 + d, 6.0}}});
  const auto o = a.observe(w, 0);
  ASSERT_EQ(static_cast<int>(o.size()), a.obs_size());
  const std::size_t slot = 3 + 4 * 2 + 4 * 1;  // enemy 1
  EXPECT_FLOAT_EQ(o[slot + 0], static_cast<float>(d / 9.0));
  EXPECT_FLOAT_EQ(o[slot + 1], 0.0f);
  EXPECT_FLOAT_EQ(o[slot + 2], 1.0f);
  EXPECT_FLOAT_EQ(o[slot + 3], 1.0f);
  EXPECT_FLOAT_EQ(o[0], 1.0f);
  EXPECT_FLOAT_EQ(o[1], static_cast<float>(10.0 / a.config().width));
  EXPECT_THROW(a.observe(w, 3), ArenaError);
}

TEST(Observe, OutOfSightAndDeadUnitsAreZero) {
  const Arena a(ArenaConfig::desk_scale());
  auto w = scene(a, {{0, {1.35, 1.35}}, {1, {4.05, 1.35}}, {3, {30.0, 12.0}}});
  const auto o = a.observe(w, 0);
  for (std::size_t k = 3 + 8; k < 3 + 8 + 4; ++k) EXPECT_EQ(o[k], 0.0f);   // enemy 0 beyond sight
  for (std::size_t k = 3 + 4; k < 3 + 8; ++k) EXPECT_EQ(o[k], 0.0f);       // ally 2 dead
  EXPECT_EQ(o[3 + 3], 1.0f);                                              // ally 1 visible
  const auto dead = a.observe(w, 2);
  for (float v : dead) EXPECT_EQ(v, 0.0f);
}

TEST(Availability, DeadInRangeAndOutOfRange) {
  const Arena a(ArenaConfig::desk_scale());
  const auto w = scene(a, {{0, {10.0, 6.0}}, {1, {1.35, 1.35}}, {3, {15.0, 6.0}}, {4, {30.0, 12.0}}});
  const auto dead = a.available_actions(w, 2);
  for (std::size_t i = 0; i < dead.size(); ++i) EXPECT_EQ(dead[i], i == 0 ? 1 : 0);
  const auto near = a.available_actions(w, 0);
  EXPECT_TRUE(near[ArenaAction::kFirstAttack + 0]);
  EXPECT_FALSE(near[ArenaAction::kFirstAttack + 1]);
  EXPECT_FALSE(near[ArenaAction::kFirstAttack + 2]);
  EXPECT_FALSE(near[ArenaAction::kNoOp]);
  const auto far = a.available_actions(w, 1);
  for (int e = 0; e < 3; ++e) EXPECT_FALSE(far[static_cast<std::size_t>(ArenaAction::kFirstAttack + e)]);
  EXPECT_FALSE(far[ArenaAction::move(Dir::south).index()]);  // would leave the arena
  EXPECT_TRUE(far[ArenaAction::move(Dir::north).index()]);
}

TEST(Heuristic, AttackNearestMoveTowardAndTieToLowerId) {
  const Arena a(ArenaConfig::desk_scale());
  auto w = scene(a, {{0, {10.0, 6.0}}, {1, {12.0, 6.0}}, {3, {16.0, 6.0}}});
  EXPECT_EQ(a.heuristic_enemy(w, 0), ArenaAction::attack(1));
  w = scene(a, {{0, {2.0, 6.0}}, {3, {20.0, 6.0}}});
  EXPECT_EQ(a.heuristic_enemy(w, 0), ArenaAction::move(Dir::west));
  w = scene(a, {{0, {16.0, 2.0}}, {1, {16.0, 10.0}}, {3, {16.0, 6.0}}});
  EXPECT_EQ(a.heuristic_enemy(w, 0), ArenaAction::attack(0));
  w = scene(a, {{0, {16.0, 2.0}}, {1, {16.0, 10.0}}, {3, {16.0, 6.0}}});
  w.units[3].cooldown = 1;
  EXPECT_EQ(a.heuristic_enemy(w, 0), ArenaAction::stop());
  EXPECT_EQ(a.heuristic_enemy(w, 1), ArenaAction::noop());
}

TEST(Snapshot, RoundTripAndVersionCheck) {
  const Arena a(ArenaConfig::desk_scale());
  const auto w = a.reset(3);
  HiddenRegistry h{{"clean.0", {0.5, -1.25}}};
  const auto snap = a.snapshot(w, h);
  const auto [w2, h2] = a.restore(snap);
  EXPECT_EQ(serialize(w2), serialize(w));
  EXPECT_EQ(h2, h);
  auto bad = snap;
  bad.version = kSnapshotVersion + 1;
  EXPECT_THROW(a.restore(bad), ArenaError);
  auto wrong = snap;
  wrong.world.units.pop_back();
  EXPECT_THROW(a.restore(wrong), ArenaError);
}

TEST(Snapshot, RngDrawAfterRestoreMatches) {
  const Arena a(ArenaConfig::desk_scale());
  auto w = a.reset(9);
  const auto snap = a.snapshot(w);
  const auto first = w.rng();
  auto [back, h] = a.restore(snap);
  EXPECT_EQ(back.rng(), first);
}

TEST(Snapshot, ThousandRandomCyclesReplayBitIdentically) {
  auto c = ArenaConfig::desk_scale();
  c.hit_chance = 0.6;  // exercises the world rng
  const Arena a(c);
  std::mt19937_64 rng(2024);
  int cycles = 0;
  std::uint64_t episode = 0;
  auto w = a.reset(episode++);
  while (cycles < 1000) {
    const auto snap = a.snapshot(w);
    const int k = 1 + static_cast<int>(rng() % 6);
    std::vector<RandomJoint> script;
    std::vector<std::string> first;
    WorldState cur = w;
    for (int s = 0; s < k; ++s) {
      script.push_back(random_joint(a, cur, rng));
      auto r = a.step(cur, script.back().allies, script.back().enemies);
      cur = std::move(r.state);
      first.push_back(serialize(cur));
      if (r.done) break;
    }
    auto [replay, h] = a.restore(snap);
    ASSERT_EQ(serialize(replay), serialize(w));
    for (std::size_t s = 0; s < first.size(); ++s) {
      replay = a.step(replay, script[s].allies, script[s].enemies).state;
      ASSERT_EQ(serialize(replay), first[s]) << "cycle " << cycles << " step " << s;
    }
    ++cycles;
    const auto adv = random_joint(a, w, rng);
    auto r = a.step(w, adv.allies, adv.enemies);
    w = r.done ? a.reset(episode++) : std::move(r.state);
  }
}

TEST(Properties, RandomRolloutsRespectRewardBoundsHealthAndDeterminism) {
  auto c = ArenaConfig::desk_scale();
  c.hit_chance = 0.8;
  const Arena a(c);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    std::mt19937_64 r1(seed), r2(seed);
    auto w1 = a.reset(seed), w2 = a.reset(seed);
    while (true) {
      const auto j1 = random_joint(a, w1, r1);
      const auto j2 = random_joint(a, w2, r2);
      const auto s1 = a.step(w1, j1.allies, j1.enemies);
      const auto s2 = a.step(w2, j2.allies, j2.enemies);
      ASSERT_EQ(serialize(s1.state), serialize(s2.state));
      ASSERT_GE(s1.reward, a.reward_min());
      ASSERT_LE(s1.reward, a.reward_max());
      for (std::size_t u = 0; u < w1.units.size(); ++u) {
        ASSERT_LE(s1.state.units[u].health, w1.units[u].health);
        ASSERT_EQ(s1.state.units[u].alive, s1.state.units[u].health > 0.0);
        if (s1.state.units[u].alive) {
          ASSERT_TRUE(a.in_bounds(s1.state.units[u].position));
        }
      }
      ASSERT_EQ(s1.state.units.size(), w1.units.size());
      w1 = s1.state;
      w2 = s2.state;
      if (s1.done) break;
    }
  }
}

TEST(Properties, ScaleMapsTheoreticalMaximumToCeiling) {
  const Arena a(ArenaConfig::desk_scale());
  EXPECT_DOUBLE_EQ(a.config().reward_scale() * a.config().raw_reward_max(), a.reward_max());
}

TEST(Properties, ObservationIgnoresUnitsOutOfSight) {
  const Arena a(ArenaConfig::desk_scale());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(0.0, a.config().width), uy(0.0, a.config().height);
  int checked = 0;
  while (checked < 500) {
    auto w = a.reset(rng());
    const Vec2 self = w.units[0].position;
    for (std::size_t u = 1; u < w.units.size(); ++u) {
      if (distance(w.units[u].position, self) <= a.config().sight_radius) continue;
      auto moved = w;
      Vec2 p{ux(rng), uy(rng)};
      if (distance(p, self) <= a.config().sight_radius) continue;
      moved.units[u].position = p;
      moved.units[u].health = 0.5 * moved.units[u].health;
      ASSERT_EQ(a.observe(w, 0), a.observe(moved, 0));
      ++checked;
    }
  }
}

TEST(Actions, NamesRoundTrip) {
  for (const char* name : {"north", "south", "east", "west", "stop"}) {
    const auto a = parse_move_action(name);
    ASSERT_TRUE(a.has_value()) << name;
    EXPECT_EQ(to_string(*a), name);
  }
  EXPECT_FALSE(parse_move_action("jump").has_value());
}
