#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stbd/config.hpp"
#include "stbd/trigger/matcher.hpp"

#ifndef STBD_CLI_PATH
#define STBD_CLI_PATH "stbd"
#endif
#ifndef STBD_SOURCE_DIR
#define STBD_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stbd;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + STBD_CLI_PATH + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json smoke_json() {
  auto j = json::parse(slurp(STBD_SOURCE_DIR "/configs/smoke.json"));
  j["attack"]["trigger_file"] = STBD_SOURCE_DIR "/configs/example1.trigger";
  return j;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;
  static fs::path config;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("stbd_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = write_config("smoke.json", smoke_json());
    const auto t = run("train-clean --config " + config.string() + " --out " + (dir / "a").string());
    ASSERT_EQ(t.code, 0) << t.output;
    const auto i = run("inject --config " + config.string() + " --out " + (dir / "a").string() + " --checkpoint " +
                       (dir / "a" / "clean.ckpt").string());
    ASSERT_EQ(i.code, 0) << i.output;
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static fs::path write_config(const std::string& name, const json& j) {
    const auto p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }
  static std::string clean_ckpt() { return (dir / "a" / "clean.ckpt").string(); }
  static std::string backdoor_ckpt() { return (dir / "a" / "backdoor.ckpt").string(); }
};

fs::path Cli::dir;
fs::path Cli::config;

}  // namespace

TEST_F(Cli, TrainCleanWritesCheckpointCurvesAndSummary) {
  EXPECT_TRUE(fs::exists(dir / "a" / "clean.ckpt"));
  const auto csv = slurp(dir / "a" / "clean_curve.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "episode,train_reward,train_win_rate,eval_reward,eval_win_rate,loss,epsilon,eval_win_rate_ma");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto summary = json::parse(slurp(dir / "a" / "train_summary.json"));
  EXPECT_EQ(summary["checkpoint_hash"], hex64(nn::Checkpoint::load(clean_ckpt()).content_hash()));
}

TEST_F(Cli, SameSeedGivesByteIdenticalCheckpoint) {
  const auto r = run("train-clean --config " + config.string() + " --out " + (dir / "b").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir / "b" / "clean.ckpt"), slurp(clean_ckpt()));
  const auto r2 = run("train-clean --config " + config.string() + " --seed 99 --out " + (dir / "c").string());
  ASSERT_EQ(r2.code, 0) << r2.output;
  EXPECT_NE(slurp(dir / "c" / "clean.ckpt"), slurp(clean_ckpt()));
}

TEST_F(Cli, MissingArenaSectionIsAValidationError) {
  auto j = smoke_json();
  j.erase("arena");
  const auto p = write_config("no_arena.json", j);
  const auto r = run("train-clean --config " + p.string() + " --out " + (dir / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("arena"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "x" / "clean.ckpt"));
}

TEST_F(Cli, UnknownFieldsAndBadValuesAreNamed) {
  auto j = smoke_json();
  j["arena"]["widht"] = 10;
  auto r = run("train-clean --config " + write_config("typo.json", j).string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("arena.widht"), std::string::npos) << r.output;

  j = smoke_json();
  j["algorithm"]["name"] = "coma";
  r = run("train-clean --config " + write_config("algo.json", j).string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("algorithm.name"), std::string::npos) << r.output;

  j = smoke_json();
  j["attack"]["trigger_file"] = "/nonexistent/trigger";
  r = run("train-clean --config " + write_config("trig.json", j).string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("attack.trigger_file"), std::string::npos) << r.output;

  EXPECT_EQ(run("train-clean").code, 1);
  EXPECT_EQ(run("frobnicate --config " + config.string()).code, 1);
}

TEST_F(Cli, InjectTagsCheckpointWithAttackMetadata) {
  const auto ck = nn::Checkpoint::load(backdoor_ckpt());
  const auto& atk = ck.metadata.at("attack");
  EXPECT_EQ(atk["poison_rate"], 0.05);
  EXPECT_EQ(atk["duration"], 20);
  EXPECT_EQ(atk["lambda"], 0.5);
  EXPECT_EQ(atk["trigger_hash"],
            hex64(backdoor::trigger_hash(trigger::load_trigger(STBD_SOURCE_DIR "/configs/example1.trigger"))));
  const auto summary = json::parse(slurp(dir / "a" / "inject_summary.json"));
  EXPECT_EQ(summary["clean_hash_before"], summary["clean_hash_after"]);
  const auto curve = slurp(dir / "a" / "injection_curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "episode,r_bc,r_bp,wr_bc,wr_bp,r_cc,wr_cc,r_bc_ma,r_bp_ma,wr_bc_ma,wr_bp_ma");
}

TEST_F(Cli, PoisonRateOutsideUnitIntervalIsRejected) {
  auto j = smoke_json();
  j["attack"]["poison_rate"] = 1.5;
  const auto r = run("inject --config " + write_config("p.json", j).string() + " --out " + (dir / "p").string() +
                     " --checkpoint " + clean_ckpt());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("poison_rate"), std::string::npos) << r.output;
}

TEST_F(Cli, LambdaListDelegatesToSweep) {
  const auto r = run("inject --config " + config.string() + " --out " + (dir / "s").string() + " --checkpoint " +
                     clean_ckpt() + " --lambdas 0,1");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto csv = slurp(dir / "s" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "lambda,wr_bc,wr_bp,r_bc,r_bp,cpvr,asr,trigger_rate,attack_drop_rate");
}

TEST_F(Cli, EvaluateReportsAllMetrics) {
  const auto r = run("evaluate --config " + config.string() + " --out " + (dir / "e").string() + " --checkpoint " +
                     clean_ckpt() + " --checkpoint " + backdoor_ckpt());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* key : {"wr_cc", "wr_bc", "wr_bp"}) EXPECT_NE(r.output.find(key), std::string::npos) << key;
  const auto m = json::parse(slurp(dir / "e" / "metrics.json"))["metrics"];
  EXPECT_TRUE(m.contains("wr_cc"));
  EXPECT_TRUE(m.contains("wr_bc"));
  EXPECT_TRUE(m.contains("wr_bp"));
  if (m["wr_cc"].get<double>() > 0.0) {
    EXPECT_TRUE(m.contains("cpvr"));
    EXPECT_TRUE(m.contains("asr"));
  }
  EXPECT_TRUE(fs::exists(dir / "e" / "action_distribution.csv"));
}

TEST_F(Cli, PoisonedOnlyGivesASingleConditionReport) {
  const auto r = run("evaluate --poisoned-only --config " + config.string() + " --out " + (dir / "po").string() +
                     " --checkpoint " + backdoor_ckpt());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = json::parse(slurp(dir / "po" / "metrics.json"))["metrics"];
  EXPECT_TRUE(m.contains("poisoned"));
  EXPECT_FALSE(m.contains("wr_cc"));
  EXPECT_FALSE(m.contains("clean"));
}

TEST_F(Cli, TamperedCheckpointFailsToLoad) {
  auto text = slurp(clean_ckpt());
  const auto pos = text.find("\"values\":[") + 10;
  text[pos] = text[pos] == '1' ? '2' : '1';
  const auto bad = dir / "bad.ckpt";
  std::ofstream(bad, std::ios::binary) << text;
  const auto r = run("evaluate --config " + config.string() + " --out " + (dir / "t").string() + " --checkpoint " +
                     bad.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("hash"), std::string::npos) << r.output;
}

namespace {

struct TraceLine {
  std::vector<UnitState> units;
  json annotations;
};

std::vector<TraceLine> read_trace(const fs::path& p) {
  std::vector<TraceLine> out;
  std::istringstream is(slurp(p));
  std::string line;
  while (std::getline(is, line)) {
    const auto j = json::parse(line);
    TraceLine t;
    for (const auto& u : j["units"]) {
      UnitState s;
      s.id = u["id"];
      s.side = u["side"] == "ally" ? Side::ally : Side::enemy;
      s.position = {u["x"].get<double>(), u["y"].get<double>()};
      s.health = u["health"];
      s.alive = u["alive"];
      t.units.push_back(s);
    }
    t.annotations = j.value("annotations", json());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_F(Cli, TracesAnnotateTheTriggerAndAgreeWithTheOfflineMatcher) {
  const auto spec = trigger::load_trigger(STBD_SOURCE_DIR "/configs/example1.trigger");
  const Arena arena(ArenaConfig::desk_scale());
  int checked = 0;
  for (int e = 0; e < 12 && checked < 2; ++e) {
    const auto out = dir / ("tr" + std::to_string(e));
    const auto r = run("trace --config " + config.string() + " --out " + out.string() + " --checkpoint " +
                       backdoor_ckpt() + " --episode " + std::to_string(e));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto lines = read_trace(out / "trace_poisoned.jsonl");
    std::optional<int> tc;
    int enemy = -1, window_steps = 0;
    for (int t = 0; t < static_cast<int>(lines.size()); ++t) {
      const auto& a = lines[static_cast<std::size_t>(t)].annotations;
      if (a.is_null()) continue;
      if (a.value("completion", false)) tc = t;
      if (a.contains("attack_window")) {
        ++window_steps;
        EXPECT_EQ(a["attack_window"].get<int>(), t - *tc);
      }
      enemy = a["controlled_enemy"];
    }
    if (!tc) continue;
    ++checked;
    EXPECT_EQ(window_steps, std::min<int>(20, static_cast<int>(lines.size()) - *tc));
    std::vector<trigger::Frame> frames;
    for (const auto& l : lines) frames.push_back(trigger::frame_of(arena, l.units, 0, enemy));
    const auto hits = trigger::match_trajectory(spec, frames);
    EXPECT_NE(std::find(hits.begin(), hits.end(), *tc), hits.end());
  }
  EXPECT_GT(checked, 0) << "no traced episode completed the trigger";

  const auto r = run("trace --condition clean --config " + config.string() + " --out " + (dir / "tc").string() +
                     " --checkpoint " + backdoor_ckpt());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const auto& l : read_trace(dir / "tc" / "trace_clean.jsonl")) EXPECT_TRUE(l.annotations.is_null());
}

TEST_F(Cli, EnvironmentOverridesOutputDirectoryButFlagWins) {
  const auto env_dir = dir / "env";
  auto r = run("evaluate --config " + config.string() + " --checkpoint " + clean_ckpt(),
               "STBD_OUTPUT_DIR=" + env_dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(env_dir / "metrics.json"));
  r = run("evaluate --config " + config.string() + " --out " + (dir / "flag").string() + " --checkpoint " + clean_ckpt(),
          "STBD_OUTPUT_DIR=" + (dir / "env2").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "flag" / "metrics.json"));
  EXPECT_FALSE(fs::exists(dir / "env2"));
}

TEST_F(Cli, CommandsDoNotTouchTheirInputs) {
  const auto before_cfg = slurp(config), before_ck = slurp(clean_ckpt()), before_bd = slurp(backdoor_ckpt());
  ASSERT_EQ(run("evaluate --config " + config.string() + " --out " + (dir / "i").string() + " --checkpoint " +
                clean_ckpt() + " --checkpoint " + backdoor_ckpt())
                .code,
            0);
  ASSERT_EQ(run("trace --config " + config.string() + " --out " + (dir / "i").string() + " --checkpoint " +
                backdoor_ckpt())
                .code,
            0);
  EXPECT_EQ(slurp(config), before_cfg);
  EXPECT_EQ(slurp(clean_ckpt()), before_ck);
  EXPECT_EQ(slurp(backdoor_ckpt()), before_bd);
}

TEST_F(Cli, RepeatedEvaluationIsByteIdentical) {
  const auto a = run("evaluate --config " + config.string() + " --out " + (dir / "r1").string() + " --checkpoint " +
                     backdoor_ckpt());
  const auto b = run("evaluate --config " + config.string() + " --out " + (dir / "r2").string() + " --checkpoint " +
                     backdoor_ckpt());
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(slurp(dir / "r1" / "metrics.json"), slurp(dir / "r2" / "metrics.json"));
}

TEST_F(Cli, DivergenceExitsWithCodeThree) {
  auto j = smoke_json();
  j["algorithm"]["learning_rate"] = 1e38;
  j["algorithm"]["grad_clip"] = 0;
  const auto out = dir / "div";
  const auto r = run("train-clean --config " + write_config("div.json", j).string() + " --out " + out.string());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_TRUE(fs::exists(out / "divergence.json"));
}

TEST(Config, ParsesSampleConfigsAndNamesBadFields) {
  for (const char* name : {"vdn.json", "qmix.json", "smoke.json"}) {
    const auto cfg = load_experiment(std::string(STBD_SOURCE_DIR) + "/configs/" + name);
    EXPECT_EQ(cfg.attack.trigger.window, 5);
    EXPECT_EQ(cfg.attack.duration, 20);
  }
  json j = json::parse(slurp(STBD_SOURCE_DIR "/configs/vdn.json"));
  j["attack"]["trigger_file"] = STBD_SOURCE_DIR "/configs/example1.trigger";
  j["attack"]["lambda"] = 2.0;
  EXPECT_THROW(parse_experiment(j), ValidationError);
  j["attack"]["lambda"] = 0.5;
  j["arena"]["n_allies"] = "three";
  try {
    parse_experiment(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("arena.n_allies"), std::string::npos);
  }
  j["arena"]["n_allies"] = 3;
  j["attack"]["final_action"] = "north";
  EXPECT_EQ(parse_experiment(j).attack.trigger.actions.back(), ArenaAction::move(Dir::north));
}
