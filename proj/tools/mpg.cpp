// mpg: check | solve | verify | bench-mac
//
// Exit codes: 0 ok (check: MPG), 2 non-MPG (check) or refusal (solve),
// 3 inconclusive (check), 64 configuration error, 66 missing input file,
// 70 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mpg/mpg.hpp"

namespace fs = std::filesystem;
using namespace mpg;

namespace {

constexpr int kExitNonMpg = 2;
constexpr int kExitInconclusive = 3;
constexpr int kExitConfig = 64;
constexpr int kExitNoInput = 66;
constexpr int kExitSoftware = 70;

struct Options {
  std::string config;
  std::string out;
  std::string w_file;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
};

struct Context {
  ExperimentConfig cfg;
  GameSpec game;
  PolicyFamily policy;
  fs::path out;
  std::string hash;
};

Context load(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  cfg.solver.seed = cfg.seed;
  cfg.checker.base_seed = cfg.seed;
  GameSpec game = build_game(cfg.environment);
  PolicyFamily policy = build_policy(game, cfg.policy);
  fs::path out = o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
  fs::create_directories(out);
  std::string hash = config_hash(cfg);
  return Context{std::move(cfg), std::move(game), std::move(policy), std::move(out), std::move(hash)};
}

json header(const Context& c, const char* schema) {
  return json{{"schema", schema},
              {"config_hash", c.hash},
              {"environment", c.game.name},
              {"policy", to_string(c.policy.kind())},
              {"seed", c.cfg.seed}};
}

void write_json(const fs::path& path, const json& j) {
  write_text(path.string(), j.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
}

int verdict_exit(Verdict v) {
  switch (v) {
    case Verdict::mpg: return 0;
    case Verdict::non_mpg: return kExitNonMpg;
    case Verdict::inconclusive: return kExitInconclusive;
  }
  return kExitInconclusive;
}

MpgReport run_check(const Context& c) {
  MpgReport rep = check_mpg_conditions(c.game, c.policy, c.cfg.checker);
  json j = header(c, "mpg_report/1");
  j["report"] = to_json(rep);
  write_json(c.out / "mpg_report.json", j);
  std::cout << c.game.name << ": " << to_string(rep.verdict) << " (max applicable residual "
            << rep.max_applicable_residual << ", tolerance " << rep.tolerance << ")\n";
  return rep;
}

int cmd_check(const Options& o) { return verdict_exit(run_check(load(o)).verdict); }

int cmd_solve(const Options& o) {
  Context c = load(o);
  const MpgReport rep = run_check(c);
  if (rep.verdict == Verdict::non_mpg && !o.force) {
    std::cerr << "refusing to solve: checker verdict is non-MPG (use --force to override)\n";
    return kExitNonMpg;
  }
  const PotentialEvaluator j = declared_potential(c.game, c.policy);
  const SolveResult res = pg_train(c.game, c.policy, j, c.cfg.solver);
  json out = header(c, "solve_result/1");
  out["checker_verdict"] = to_string(rep.verdict);
  out["result"] = to_json(res);
  write_json(c.out / "solve_result.json", out);
  std::ostringstream csv;
  write_curve_csv(csv, res.curve);
  write_text((c.out / "curve.csv").string(), csv.str());
  std::cout << "wrote " << (c.out / "curve.csv").string() << "\nvalue " << res.value << " +- " << res.value_stderr
            << "\n";
  return 0;
}

Vec read_params(const fs::path& path) {
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed parameter file '" + path.string() + "': " + e.what());
  }
  const json* arr = &j;
  if (j.is_object()) {
    if (j.contains("result") && j["result"].contains("w")) {
      arr = &j["result"]["w"];
    } else if (j.contains("w")) {
      arr = &j["w"];
    } else {
      throw ConfigError("parameter file '" + path.string() + "' has no 'w' array");
    }
  }
  if (!arr->is_array()) throw ConfigError("parameter file '" + path.string() + "': 'w' must be an array");
  Vec w;
  for (const auto& v : *arr) {
    if (!v.is_number()) throw ConfigError("parameter file '" + path.string() + "': non-numeric entry");
    w.push_back(v.get<double>());
  }
  return w;
}

int cmd_verify(const Options& o) {
  Context c = load(o);
  const fs::path wpath = o.w_file.empty() ? c.out / "solve_result.json" : fs::path(o.w_file);
  if (!fs::exists(wpath)) {
    std::cerr << "parameter file '" << wpath.string() << "' not found\n";
    return kExitNoInput;
  }
  const Vec w = read_params(wpath);
  NashOptions no;
  no.budget = c.cfg.verifier.budget;
  no.restarts = c.cfg.verifier.restarts;
  no.rollouts = c.cfg.verifier.rollouts;
  no.seed = c.cfg.seed;
  const NashReport rep = nash_deviation_check(c.game, c.policy, w, no);
  json out = header(c, "nash_report/1");
  out["w"] = w;
  out["report"] = to_json(rep);
  write_json(c.out / "nash_report.json", out);
  std::cout << "epsilon " << rep.epsilon << " (relative " << rep.epsilon_rel << "): " << rep.note << "\n";
  return 0;
}

int cmd_bench_mac(const Options& o) {
  Context c = load(o);
  if (c.cfg.environment.name != "mac" || c.cfg.environment.cooperative) {
    throw ConfigError("bench-mac needs the (non-cooperative) mac environment");
  }
  const PotentialEvaluator j = declared_potential(c.game, c.policy);
  const SolveResult res = pg_train(c.game, c.policy, j, c.cfg.solver);
  const MacBaseline base =
      deterministic_baseline_mac(c.cfg.environment.mac, c.cfg.bench.num_sequences, c.cfg.bench.horizon, c.cfg.seed);
  const double ratio = res.value / base.averaged_sequence;
  const double ratio_avg = res.value / base.sequence_average;
  const double avg_bound = 1.0 + 3.0 * res.value_stderr / std::abs(base.sequence_average);
  json out = header(c, "bench_mac/1");
  out["trained"] = {{"value", res.value}, {"stderr", res.value_stderr}, {"iterations", res.curve.size()},
                    {"best_iteration", res.best_iteration}};
  out["baseline"] = {{"averaged_sequence", base.averaged_sequence},
                     {"sequence_average", base.sequence_average},
                     {"sequence_average_stderr", base.sequence_stderr},
                     {"num_sequences", base.num_sequences},
                     {"horizon", base.horizon}};
  out["ratio_trained_over_averaged_sequence"] = ratio;
  out["ratio_trained_over_sequence_average"] = ratio_avg;
  out["ratio_threshold"] = 0.95;
  out["ratio_ok"] = ratio >= 0.95;
  out["sequence_average_bound_ok"] = ratio_avg <= avg_bound;
  out["jensen_order_ok"] = base.sequence_average >= base.averaged_sequence;
  write_json(c.out / "bench_mac.json", out);
  std::ostringstream csv;
  write_curve_csv(csv, res.curve);
  write_text((c.out / "bench_curve.csv").string(), csv.str());
  std::cout << "trained " << res.value << " +- " << res.value_stderr << ", averaged-sequence baseline "
            << base.averaged_sequence << ", sequence-average baseline " << base.sequence_average << ", ratio " << ratio
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov potential game toolkit"};
  app.require_subcommand(1);
  Options o;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--seed", o.seed, "global seed (overrides config)")->each([&](const std::string&) { o.seed_set = true; });
  };
  CLI::App* check = app.add_subcommand("check", "run the potential-game condition checker");
  CLI::App* solve = app.add_subcommand("solve", "train on the potential (refuses non-MPG games)");
  CLI::App* verify = app.add_subcommand("verify", "unilateral-deviation search at a parameter vector");
  CLI::App* bench = app.add_subcommand("bench-mac", "trained MAC policy against the deterministic baseline");
  for (CLI::App* sub : {check, solve, verify, bench}) add_common(sub);
  solve->add_flag("--force", o.force, "solve even when the checker reports non-MPG");
  verify->add_option("--w", o.w_file, "parameter file (solve_result.json or a JSON array)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*check) return cmd_check(o);
    if (*solve) return cmd_solve(o);
    if (*verify) return cmd_verify(o);
    if (*bench) return cmd_bench_mac(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalDomainError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitSoftware;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return kExitSoftware;
  } catch (const PathError& e) {
    std::cerr << "path error: " << e.what() << "\n";
    return kExitSoftware;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSoftware;
  }
  return kExitConfig;
}
