#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "stbd/backdoor/inject.hpp"
#include "stbd/marl/train.hpp"
#include "stbd/trigger/parser.hpp"

namespace stbd {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported. Every error names the full dotted path.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(path(key) + ": wrong type");
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ValidationError(path(key) + ": missing required field");
    T v{};
    get(key, v);
    return v;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ValidationError(path(key) + ": missing section");
    return Section(j_.at(key), path(key));
  }

  std::optional<Section> optional_child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return Section(j_.at(key), path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(path(it.key()) + ": unknown field");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

struct EvaluationSettings {
  int episodes = 500;
  int moving_average_window = 50;
  std::vector<double> lambdas{0.0, 0.2, 0.5, 0.8, 1.0};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  ArenaConfig arena = ArenaConfig::desk_scale();
  marl::CleanTrainConfig train;
  backdoor::AttackConfig attack;
  std::string trigger_file;
  backdoor::InjectConfig inject;
  EvaluationSettings evaluation;
  nlohmann::json raw;  // as read, for provenance in summaries
};

namespace detail {

inline void read_arena(Section s, ArenaConfig& a) {
  std::string preset = "desk_scale";
  s.get("preset", preset);
  if (preset == "desk_scale") a = ArenaConfig::desk_scale();
  else if (preset == "default") a = ArenaConfig{};
  else throw ValidationError(s.path("preset") + ": expected desk_scale or default");
  s.get("n_allies", a.n_allies);
  s.get("n_enemies", a.n_enemies);
  s.get("width", a.width);
  s.get("height", a.height);
  s.get("move_step", a.move_step);
  s.get("enemy_lattice_offset", a.enemy_lattice_offset);
  s.get("sight_radius", a.sight_radius);
  s.get("attack_radius", a.attack_radius);
  s.get("damage", a.damage);
  s.get("initial_health", a.initial_health);
  s.get("attack_cooldown", a.attack_cooldown);
  s.get("step_limit", a.step_limit);
  s.get("kill_reward", a.kill_reward);
  s.get("win_reward", a.win_reward);
  s.get("reward_max", a.reward_max);
  s.get("hit_chance", a.hit_chance);
  s.get("ally_spawn_columns", a.ally_spawn_columns);
  s.get("enemy_spawn_columns", a.enemy_spawn_columns);
  s.finish();
  a.validate();
}

inline void read_optimizer(Section& s, marl::LearnerConfig& l) {
  s.get("gamma", l.gamma);
  s.get("learning_rate", l.optimizer.learning_rate);
  s.get("rms_alpha", l.optimizer.smoothing);
  s.get("rms_epsilon", l.optimizer.epsilon);
  s.get("grad_clip", l.optimizer.grad_clip);
  s.get("target_update_interval", l.target_update_interval);
  if (!(l.gamma >= 0.0 && l.gamma <= 1.0)) throw ValidationError(s.path("gamma") + ": must lie in [0, 1]");
  if (!(l.optimizer.learning_rate > 0.0)) throw ValidationError(s.path("learning_rate") + ": must be positive");
  if (l.target_update_interval < 1) throw ValidationError(s.path("target_update_interval") + ": must be positive");
}

inline void read_algorithm(Section s, marl::CleanTrainConfig& t) {
  const auto name = s.require<std::string>("name");
  try {
    t.algo = nn::parse_mixer_kind(name);
  } catch (const Error&) {
    throw ValidationError(s.path("name") + ": expected vdn or qmix");
  }
  s.get("episodes", t.episodes);
  s.get("batch_size", t.batch_size);
  s.get("buffer_capacity", t.buffer_capacity);
  s.get("epsilon_start", t.epsilon_start);
  s.get("epsilon_end", t.epsilon_end);
  s.get("epsilon_anneal_episodes", t.epsilon_anneal_episodes);
  s.get("eval_interval", t.eval_interval);
  s.get("eval_episodes", t.eval_episodes);
  s.get("keep_best", t.keep_best);
  read_optimizer(s, t.learner);
  s.finish();
  marl::validate(t);
}

inline void read_injection(Section s, backdoor::InjectConfig& c, const marl::LearnerConfig& base) {
  c.learner = base;
  s.get("episodes", c.episodes);
  s.get("batch_size", c.batch_size);
  s.get("buffer_capacity", c.buffer_capacity);
  s.get("epsilon", c.epsilon);
  s.get("eval_interval", c.eval_interval);
  s.get("eval_episodes", c.eval_episodes);
  s.get("patience", c.patience);
  read_optimizer(s, c.learner);
  s.finish();
  if (c.episodes < 1) throw ValidationError(s.path("episodes") + ": must be positive");
  if (c.batch_size < 1) throw ValidationError(s.path("batch_size") + ": must be positive");
  if (c.buffer_capacity < 1) throw ValidationError(s.path("buffer_capacity") + ": must be positive");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ValidationError(s.path("epsilon") + ": must lie in [0, 1]");
  if (c.eval_interval < 0 || c.eval_episodes < 1) throw ValidationError(s.path("eval_interval") + ": invalid evaluation schedule");
}

inline void read_attack(Section s, ExperimentConfig& cfg, const std::filesystem::path& base_dir) {
  auto& a = cfg.attack;
  s.get("agent", a.agent);
  s.get("poison_rate", a.poison_rate);
  s.get("duration", a.duration);
  s.get("lambda", a.lambda);
  s.get("reward_min", a.reward_min);
  s.get("reward_max", a.reward_max);
  s.get("strict_poison_buffer", a.strict_poison_buffer);
  const auto file = s.require<std::string>("trigger_file");
  std::filesystem::path p(file);
  if (p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) throw ValidationError(s.path("trigger_file") + ": no such file " + p.string());
  cfg.trigger_file = p.string();
  a.trigger = trigger::load_trigger(cfg.trigger_file);
  std::optional<std::string> last_action;
  s.get("final_action", last_action);
  if (last_action) {
    const auto act = parse_move_action(*last_action);
    if (!act) throw ValidationError(s.path("final_action") + ": unknown action " + *last_action);
    a.trigger.actions.back() = *act;
  }
  if (auto inj = s.optional_child("injection")) read_injection(*inj, cfg.inject, cfg.train.learner);
  else cfg.inject.learner = cfg.train.learner;
  s.finish();
  a.validate(Arena(cfg.arena));
}

inline void read_evaluation(Section s, EvaluationSettings& e) {
  s.get("episodes", e.episodes);
  s.get("moving_average_window", e.moving_average_window);
  s.get("lambdas", e.lambdas);
  s.finish();
  if (e.episodes < 1) throw ValidationError(s.path("episodes") + ": must be positive");
  if (e.moving_average_window < 1) throw ValidationError(s.path("moving_average_window") + ": must be positive");
  if (e.lambdas.empty()) throw ValidationError(s.path("lambdas") + ": must not be empty");
  for (double l : e.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError(s.path("lambdas") + ": values must lie in [0, 1]");
}

}  // namespace detail

// Sections: arena, algorithm (required), attack, evaluation (optional);
// top level: seed, output_dir. A relative trigger path resolves against the
// config file's directory.
inline ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  ExperimentConfig cfg;
  cfg.raw = j;
  Section top(j, "");
  top.get("seed", cfg.seed);
  top.get("output_dir", cfg.output_dir);
  detail::read_arena(top.child("arena"), cfg.arena);
  detail::read_algorithm(top.child("algorithm"), cfg.train);
  if (auto atk = top.optional_child("attack")) detail::read_attack(*atk, cfg, base_dir);
  if (auto ev = top.optional_child("evaluation")) detail::read_evaluation(*ev, cfg.evaluation);
  top.finish();
  return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return parse_experiment(j, std::filesystem::path(path).parent_path());
}

}  // namespace stbd
