// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "mpg/mpg.hpp"

namespace fs = std::filesystem;
using namespace mpg;

namespace {

const std::string kConfigs = MPG_CONFIG_DIR;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Loaded {
  ExperimentConfig cfg;
  GameSpec game;
  PolicyFamily policy;
};

Loaded load(const std::string& name) {
  ExperimentConfig cfg = load_config(kConfigs + "/" + name + ".json");
  cfg.solver.seed = cfg.seed;
  cfg.checker.base_seed = cfg.seed;
  GameSpec game = build_game(cfg.environment);
  PolicyFamily policy = build_policy(game, cfg.policy);
  return {std::move(cfg), std::move(game), std::move(policy)};
}

void c1(Outcome& o) {
  const Loaded l = load("fishwar");
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = pg_train(l.game, l.policy, declared_potential(l.game, l.policy), l.cfg.solver);
  const double t = seconds_since(t0);
  const double star = fishwar_closed_form(2, 0.5, 0.9)[0];
  o.detail << "w* = (" << r.w[0] << ", " << r.w[1] << "), closed form " << star << ", " << t << " s";
  for (double w : r.w) o.require(std::abs(w - star) <= 0.02, "component within 0.02");
  o.require(t < 120.0, "runtime under 2 minutes");
}

void c2(Outcome& o) {
  for (const char* name : {"fishwar", "mac", "fishwar_cooperative", "mac_cooperative", "counterexample"}) {
    const Loaded l = load(name);
    const auto t0 = std::chrono::steady_clock::now();
    const MpgReport r = check_mpg_conditions(l.game, l.policy, l.cfg.checker);
    const double t = seconds_since(t0);
    o.detail << name << ": " << to_string(r.verdict) << " (" << r.max_applicable_residual << ", " << t << " s); ";
    if (std::string(name) == "counterexample") {
      o.require(r.verdict == Verdict::non_mpg && r.max_applicable_residual > 0.1, "counterexample non-MPG");
    } else {
      o.require(r.verdict == Verdict::mpg && r.max_applicable_residual < 1e-3, std::string(name) + " MPG");
    }
    o.require(t < 30.0, std::string(name) + " under 30 s");
  }
}

void c3(Outcome& o) {
  const GameSpec g = make_fishwar({});
  const PolicyFamily pol = make_linear_policy(g, 0.0, 1.0, 0.5);
  const LineIntegralOptions opts;
  const PotentialEvaluator j = PotentialEvaluator::line_integral(g, pol, {1.0}, {1.0, 1.0}, opts);
  Vec diffs;
  for (double x : {0.5, 0.625, 0.75, 0.875, 1.0}) {
    for (double w : {0.4, 0.5, 0.6, 0.7, 0.8}) {
      diffs.push_back(j.closed_loop({x}, {w, w}, 0) - (std::log(x) + 2.0 * std::log(w)));
    }
  }
  const double c = mean(diffs);
  double grid_dev = 0.0;
  for (double d : diffs) grid_dev = std::max(grid_dev, std::abs(d - c));
  const std::vector<Vec> sig{Vec{}};
  const Vec a{1.0, 1.0, 1.0}, b{0.6, 0.5, 0.7};
  const double straight = potential_path_integral(g, pol, {a, b}, sig, opts);
  const double bent = potential_path_integral(g, pol, {a, {0.8, 0.95, 0.45}, b}, sig, opts);
  o.detail << "grid max deviation " << grid_dev << ", path difference " << std::abs(straight - bent);
  o.require(grid_dev < 1e-5, "grid deviation < 1e-5");
  o.require(std::abs(straight - bent) < 1e-5, "path independence < 1e-5");
}

void c4(Outcome& o) {
  const Loaded mac = load("mac");
  FdConfig cfg;
  cfg.noise_samples = 64;
  const ConsistencyReport rm = potential_consistency_check(mac.game, mac.policy, declared_potential(mac.game, mac.policy), cfg);
  const Loaded fw = load("fishwar");
  const ConsistencyReport rf = potential_consistency_check(fw.game, fw.policy, declared_potential(fw.game, fw.policy), cfg);
  o.detail << "MAC " << rm.max_residual() << ", fish-war " << rf.max_residual();
  o.require(rm.max_residual() < 1e-3, "MAC < 1e-3");
  o.require(rf.max_residual() < 1e-6, "fish-war < 1e-6");
}

void c5(Outcome& o) {
  const GameSpec g = make_fishwar({});
  const PolicyFamily pol = make_linear_policy(g, 0.0, 1.0, 0.5);
  const Vec star = fishwar_closed_form(2, 0.5, 0.9);
  NashOptions opts;
  opts.budget = 200;
  const NashReport at = nash_deviation_check(g, pol, star, opts);
  double worst = 0.0;
  for (const AgentDeviation& d : at.agents) worst = std::max(worst, d.eps_rel);
  const NashReport off = nash_deviation_check(g, pol, {star[0] + 0.1, star[1]}, opts);
  o.detail << "max relative gain at w* " << worst << ", agent 1 gain at perturbed w " << off.agents[0].gain;
  o.require(worst < 1e-3, "relative gain < 1e-3");
  o.require(off.agents[0].gain > 0.0, "positive gain off equilibrium");
}

void bench_profile(Outcome& o, const std::string& name, double threshold, double budget_s) {
  const Loaded l = load(name);
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = pg_train(l.game, l.policy, declared_potential(l.game, l.policy), l.cfg.solver);
  const MacBaseline b =
      deterministic_baseline_mac(l.cfg.environment.mac, l.cfg.bench.num_sequences, l.cfg.bench.horizon, l.cfg.seed);
  const double t = seconds_since(t0);
  const double ratio = r.value / b.averaged_sequence;
  const double ratio_avg = r.value / b.sequence_average;
  o.detail << name << ": trained " << r.value << " +- " << r.value_stderr << ", averaged-sequence "
           << b.averaged_sequence << ", sequence-average " << b.sequence_average << ", ratio " << ratio << ", "
           << t << " s; ";
  o.require(ratio >= threshold, name + " ratio >= " + std::to_string(threshold));
  o.require(b.sequence_average >= b.averaged_sequence, name + " Jensen order");
  o.require(ratio_avg <= 1.0 + 3.0 * r.value_stderr / std::abs(b.sequence_average), name + " sequence-average bound");
  o.require(t <= budget_s, name + " runtime");
}

void c6(Outcome& o) {
  bench_profile(o, "mac_ci", 0.90, 180.0);
  bench_profile(o, "mac", 0.95, 1800.0);
}

void c7(Outcome& o) {
  const Mlp net({1, 32, 32, 32, 1});
  Rng rng(2024);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Vec p = net.initial_params(rng, 1.0, Vec{0.5});
    for (double& v : p) v += 0.05 * standard_normal(rng);
    const Vec x{uniform(rng, 0.0, 10.0)};
    const Vec g = net.jacobian(x, p)[0];
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double fp = net.forward(x, p)[0];
      p[i] = keep - h;
      const double fm = net.forward(x, p)[0];
      p[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      diff = std::max(diff, std::abs(g[i] - fd));
      scale = std::max({scale, std::abs(g[i]), std::abs(fd)});
    }
    worst = std::max(worst, diff / scale);
  }
  o.detail << "max relative error " << worst;
  o.require(worst < 1e-4, "relative error < 1e-4");
}

int run_cli(const std::string& args) {
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

void c8(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "mpg_acceptance_determinism";
  fs::remove_all(root);
  struct Cmd {
    std::string sub;
    std::string config;
    std::string extra;
    int expected;
  };
  const std::vector<Cmd> cmds{{"check", "fishwar", "", 0},
                              {"check", "counterexample", "", 2},
                              {"solve", "fishwar", "", 0},
                              {"verify", "fishwar", "", 0},
                              {"bench-mac", "mac_ci", "", 0}};
  std::size_t files = 0;
  for (const char* rep : {"a", "b"}) {
    for (const Cmd& c : cmds) {
      const fs::path out = root / rep / c.config;
      const int code = run_cli(c.sub + " --config " + kConfigs + "/" + c.config + ".json --out " + out.string());
      o.require(code == c.expected, c.sub + " " + c.config + " exit code " + std::to_string(code));
    }
  }
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = root / "b" / fs::relative(entry.path(), root / "a");
    ++files;
    o.require(fs::exists(other) && slurp(entry.path()) == slurp(other), "identical " + other.string());
  }
  o.detail << files << " output files compared across two runs";
  o.require(files == 7, "all artifacts written");  // 4 fish-war, 1 counterexample, 2 bench
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"C1 fish-war equilibrium recovery", c1},
      {"C2 MPG classification", c2},
      {"C3 potential reconstruction", c3},
      {"C4 consistency conditions", c4},
      {"C5 Nash certification", c5},
      {"C6 MAC benchmark ratio", c6},
      {"C7 gradient correctness", c7},
      {"C8 determinism", c8},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    if (!o.pass) ++failures;
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
