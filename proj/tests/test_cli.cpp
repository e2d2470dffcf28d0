#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpg/io.hpp"
#include "mpg/solver.hpp"

namespace fs = std::filesystem;
using mpg::json;

namespace {

const std::string kConfigs = MPG_CONFIG_DIR;

int run(const std::string& args) {
  const std::string cmd = std::string(MPG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "mpg_cli_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// fish-war config with a short training run
fs::path short_fishwar_config(const fs::path& dir) {
  json c = read_json(kConfigs + "/fishwar.json");
  c["solver"]["iterations"] = 20;
  c["output_dir"] = (dir / "run").string();
  const fs::path p = dir / "short.json";
  write_file(p, c.dump());
  return p;
}

}  // namespace

TEST(Cli, CheckFishWarIsMpg) {
  const fs::path out = scratch("check_fishwar");
  EXPECT_EQ(run("check --config " + kConfigs + "/fishwar.json --out " + out.string()), 0);
  const json r = read_json(out / "mpg_report.json");
  EXPECT_EQ(r["schema"], "mpg_report/1");
  EXPECT_EQ(r["report"]["verdict"], "MPG");
  EXPECT_EQ(r["environment"], "fishwar");
  EXPECT_EQ(r["config_hash"].get<std::string>().size(), 16u);
}

TEST(Cli, CheckCounterexampleIsNonMpg) {
  const fs::path out = scratch("check_counter");
  EXPECT_EQ(run("check --config " + kConfigs + "/counterexample.json --out " + out.string()), 2);
  EXPECT_EQ(read_json(out / "mpg_report.json")["report"]["verdict"], "non-MPG");
}

TEST(Cli, ConfigErrorsExit64) {
  const fs::path out = scratch("config_errors");
  write_file(out / "bad.json", "{\"environment\": {");
  write_file(out / "unknown.json", R"({"environment": {"name": "fishwar"}, "learning_rate": 1})");
  EXPECT_EQ(run("check --config " + (out / "bad.json").string() + " --out " + out.string()), 64);
  EXPECT_EQ(run("check --config " + (out / "unknown.json").string() + " --out " + out.string()), 64);
  EXPECT_EQ(run("check --config " + (out / "absent.json").string() + " --out " + out.string()), 64);
  EXPECT_EQ(run("check"), 64);
  EXPECT_EQ(run("frobnicate --config x"), 64);
  EXPECT_EQ(run("bench-mac --config " + kConfigs + "/fishwar.json --out " + out.string()), 64);
}

TEST(Cli, SolveRefusesNonMpg) {
  const fs::path out = scratch("solve_refuse");
  EXPECT_EQ(run("solve --config " + kConfigs + "/counterexample.json --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out / "solve_result.json"));
  EXPECT_TRUE(fs::exists(out / "mpg_report.json"));
}

TEST(Cli, VerifyMissingParameterFile) {
  const fs::path out = scratch("verify_missing");
  EXPECT_EQ(run("verify --config " + kConfigs + "/fishwar.json --out " + out.string()), 66);
  EXPECT_EQ(run("verify --config " + kConfigs + "/fishwar.json --w " + (out / "nope.json").string() + " --out " +
                out.string()),
            66);
}

TEST(Cli, VerifyClosedFormAndPerturbed) {
  const fs::path out = scratch("verify_closed");
  const mpg::Vec star = mpg::fishwar_closed_form(2, 0.5, 0.9);
  write_file(out / "star.json", json(star).dump());
  write_file(out / "perturbed.json", json{{"w", {star[0] + 0.1, star[1]}}}.dump());
  const std::string base = "verify --config " + kConfigs + "/fishwar.json --out " + out.string() + " --w ";
  ASSERT_EQ(run(base + (out / "star.json").string()), 0);
  const json a = read_json(out / "nash_report.json");
  EXPECT_EQ(a["schema"], "nash_report/1");
  EXPECT_LT(a["report"]["epsilon_rel"].get<double>(), 1e-3);
  ASSERT_EQ(run(base + (out / "perturbed.json").string()), 0);
  const json b = read_json(out / "nash_report.json");
  EXPECT_GT(b["report"]["agents"][0]["gain"].get<double>(), 1e-3);
}

TEST(Cli, SolveThenVerifyFromDefaultLocation) {
  const fs::path dir = scratch("solve_verify");
  const fs::path cfg = short_fishwar_config(dir);
  ASSERT_EQ(run("solve --config " + cfg.string()), 0);
  const json s = read_json(dir / "run" / "solve_result.json");
  EXPECT_EQ(s["schema"], "solve_result/1");
  EXPECT_EQ(s["checker_verdict"], "MPG");
  EXPECT_EQ(s["result"]["iterations"], 20);
  const std::string curve = slurp(dir / "run" / "curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "iteration,value,stderr,kl");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 21);
  ASSERT_EQ(run("verify --config " + cfg.string()), 0);
  EXPECT_EQ(read_json(dir / "run" / "nash_report.json")["w"], s["result"]["w"]);
}

TEST(Cli, RerunsAreByteIdentical) {
  const fs::path dir = scratch("rerun");
  const fs::path cfg = short_fishwar_config(dir);
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run("solve --config " + cfg.string() + " --out " + (dir / sub).string()), 0);
  }
  for (const char* file : {"mpg_report.json", "solve_result.json", "curve.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / file), slurp(dir / "b" / file)) << file;
  }
}

TEST(Cli, SeedOverrideChangesHeader) {
  const fs::path out = scratch("seed");
  ASSERT_EQ(run("check --config " + kConfigs + "/fishwar.json --seed 9 --out " + out.string()), 0);
  const json r = read_json(out / "mpg_report.json");
  EXPECT_EQ(r["seed"], 9);
  mpg::ExperimentConfig c = mpg::load_config(kConfigs + "/fishwar.json");
  EXPECT_NE(r["config_hash"], mpg::config_hash(c));
  c.seed = 9;
  EXPECT_EQ(r["config_hash"], mpg::config_hash(c));
}
