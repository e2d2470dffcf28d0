#pragma once

// Experiment configuration (JSON, unknown keys rejected) and the report
// writers used by the command-line runner.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpg/core.hpp"
#include "mpg/environments.hpp"
#include "mpg/numdiff.hpp"
#include "mpg/policy.hpp"
#include "mpg/potential.hpp"
#include "mpg/solver.hpp"
#include "mpg/verifier.hpp"

namespace mpg {

using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct EnvironmentConfig {
  std::string name = "fishwar";  // fishwar | mac | counterexample
  bool cooperative = false;
  FishWarParams fishwar;
  MacParams mac;
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::linear;
  double lower = 0.0;  // linear parameter box
  double upper = 1.0;
  double init = 0.5;
  MlpOptions mlp;
  Vec exploration_std;  // empty: 0.05 x action box width
};

struct VerifierConfig {
  std::size_t budget = 200;
  std::size_t restarts = 5;
  std::size_t rollouts = 0;
};

struct BenchConfig {
  std::size_t num_sequences = 100;
  std::size_t horizon = 100;
};

struct ExperimentConfig {
  EnvironmentConfig environment;
  PolicyConfig policy;
  TrainConfig solver;
  FdConfig checker;
  VerifierConfig verifier;
  BenchConfig bench;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

inline void read_number(const json& obj, const char* key, double& out, const std::string& where) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  out = obj.at(key).get<double>();
}

inline void read_vec(const json& obj, const char* key, Vec& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (v.is_number()) {
    out = {v.get<double>()};
    return;
  }
  if (!v.is_array()) throw ConfigError(where + "." + key + ": expected a number or an array of numbers");
  out.clear();
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
    out.push_back(e.get<double>());
  }
}

/// A single number applies to every entry.
inline Vec broadcast(const Vec& v, std::size_t n, const std::string& what) {
  if (v.empty() || v.size() == n) return v;
  if (v.size() == 1) return Vec(n, v[0]);
  throw ConfigError(what + ": expected 1 or " + std::to_string(n) + " entries");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
  using namespace detail;
  ExperimentConfig c;
  reject_unknown(root, "config", {"environment", "policy", "solver", "checker", "verifier", "bench", "output_dir", "seed"});
  if (root.contains("seed")) {
    const json& sv = root["seed"];
    if (!sv.is_number_unsigned() && !(sv.is_number_integer() && sv.get<long long>() >= 0)) {
      throw ConfigError("config.seed: expected a non-negative integer");
    }
    c.seed = sv.get<std::uint64_t>();
  }
  read(root, "output_dir", c.output_dir, "config");

  if (!root.contains("environment")) throw ConfigError("config: missing 'environment'");
  const json& env = root["environment"];
  reject_unknown(env, "environment", {"name", "cooperative", "params"});
  read(env, "name", c.environment.name, "environment");
  read(env, "cooperative", c.environment.cooperative, "environment");
  const json params = env.contains("params") ? env["params"] : json::object();
  const std::string& name = c.environment.name;
  if (name == "fishwar") {
    FishWarParams& p = c.environment.fishwar;
    reject_unknown(params, "environment.params", {"num_agents", "alpha", "gamma", "x0", "horizon"});
    read_size(params, "num_agents", p.num_agents, "fishwar");
    read_number(params, "alpha", p.alpha, "fishwar");
    read_number(params, "gamma", p.gamma, "fishwar");
    read_number(params, "x0", p.x0, "fishwar");
    read_size(params, "horizon", p.horizon, "fishwar");
    p.validate();
  } else if (name == "mac") {
    MacParams& p = c.environment.mac;
    reject_unknown(params, "environment.params",
                   {"num_agents", "gains", "fading", "discharge", "alpha", "b_max", "p_max", "gamma", "horizon"});
    read_size(params, "num_agents", p.num_agents, "mac");
    read_vec(params, "gains", p.gains, "mac");
    Vec fading{p.fading_lo, p.fading_hi}, discharge{p.discharge_lo, p.discharge_hi};
    read_vec(params, "fading", fading, "mac");
    read_vec(params, "discharge", discharge, "mac");
    if (fading.size() != 2 || discharge.size() != 2) throw ConfigError("mac: fading and discharge are [lo, hi] pairs");
    p.fading_lo = fading[0];
    p.fading_hi = fading[1];
    p.discharge_lo = discharge[0];
    p.discharge_hi = discharge[1];
    read_number(params, "alpha", p.alpha, "mac");
    read_number(params, "b_max", p.b_max, "mac");
    read_number(params, "p_max", p.p_max, "mac");
    read_number(params, "gamma", p.gamma, "mac");
    read_size(params, "horizon", p.horizon, "mac");
    p.validate();
  } else if (name == "counterexample") {
    reject_unknown(params, "environment.params", {});
    if (c.environment.cooperative) throw ConfigError("counterexample has no common term to make cooperative");
  } else {
    throw ConfigError("environment.name: unknown environment '" + name + "'");
  }

  if (root.contains("policy")) {
    const json& pj = root["policy"];
    reject_unknown(pj, "policy", {"kind", "lower", "upper", "init", "hidden", "output_scale", "output_bias",
                                  "exploration_std"});
    std::string kind = to_string(c.policy.kind);
    read(pj, "kind", kind, "policy");
    c.policy.kind = policy_kind_from_string(kind);
    read_number(pj, "lower", c.policy.lower, "policy");
    read_number(pj, "upper", c.policy.upper, "policy");
    read_number(pj, "init", c.policy.init, "policy");
    read(pj, "hidden", c.policy.mlp.hidden, "policy");
    read_number(pj, "output_scale", c.policy.mlp.output_scale, "policy");
    read_vec(pj, "output_bias", c.policy.mlp.output_bias, "policy");
    read_vec(pj, "exploration_std", c.policy.exploration_std, "policy");
    if (!(c.policy.lower <= c.policy.upper)) throw ConfigError("policy: lower must not exceed upper");
  }

  if (root.contains("solver")) {
    const json& sj = root["solver"];
    reject_unknown(sj, "solver", {"batch_size", "max_kl", "iterations", "baseline", "eval_every", "eval_rollouts",
                                  "final_eval_rollouts", "max_halvings"});
    TrainConfig& t = c.solver;
    read_size(sj, "batch_size", t.batch_size, "solver");
    read_number(sj, "max_kl", t.max_kl, "solver");
    read_size(sj, "iterations", t.iterations, "solver");
    std::string b = to_string(t.baseline);
    read(sj, "baseline", b, "solver");
    t.baseline = baseline_from_string(b);
    read_size(sj, "eval_every", t.eval_every, "solver");
    read_size(sj, "eval_rollouts", t.eval_rollouts, "solver");
    read_size(sj, "final_eval_rollouts", t.final_eval_rollouts, "solver");
    read_size(sj, "max_halvings", t.max_halvings, "solver");
  }

  if (root.contains("checker")) {
    const json& cj = root["checker"];
    reject_unknown(cj, "checker", {"h", "num_check_points", "noise_samples", "tolerance", "margin", "max_full_block",
                                   "num_directions"});
    FdConfig& f = c.checker;
    read_number(cj, "h", f.h, "checker");
    read_size(cj, "num_check_points", f.num_check_points, "checker");
    read_size(cj, "noise_samples", f.noise_samples, "checker");
    read_number(cj, "tolerance", f.tolerance, "checker");
    read_number(cj, "margin", f.margin, "checker");
    read_size(cj, "max_full_block", f.max_full_block, "checker");
    read_size(cj, "num_directions", f.num_directions, "checker");
    f.validate();
  }

  if (root.contains("verifier")) {
    const json& vj = root["verifier"];
    reject_unknown(vj, "verifier", {"budget", "restarts", "rollouts"});
    read_size(vj, "budget", c.verifier.budget, "verifier");
    read_size(vj, "restarts", c.verifier.restarts, "verifier");
    read_size(vj, "rollouts", c.verifier.rollouts, "verifier");
  }

  if (root.contains("bench")) {
    const json& bj = root["bench"];
    reject_unknown(bj, "bench", {"num_sequences", "horizon"});
    read_size(bj, "num_sequences", c.bench.num_sequences, "bench");
    read_size(bj, "horizon", c.bench.horizon, "bench");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path + "': " + e.what());
  }
  return parse_config(root);
}

/// Canonical JSON of the effective configuration (defaults filled in).
inline json to_json(const ExperimentConfig& c) {
  json env{{"name", c.environment.name}, {"cooperative", c.environment.cooperative}};
  if (c.environment.name == "fishwar") {
    const auto& p = c.environment.fishwar;
    env["params"] = {{"num_agents", p.num_agents}, {"alpha", p.alpha}, {"gamma", p.gamma}, {"x0", p.x0},
                     {"horizon", p.horizon}};
  } else if (c.environment.name == "mac") {
    const auto& p = c.environment.mac;
    env["params"] = {{"num_agents", p.num_agents}, {"gains", p.gains}, {"fading", {p.fading_lo, p.fading_hi}},
                     {"discharge", {p.discharge_lo, p.discharge_hi}}, {"alpha", p.alpha}, {"b_max", p.b_max},
                     {"p_max", p.p_max}, {"gamma", p.gamma}, {"horizon", p.horizon}};
  } else {
    env["params"] = json::object();
  }
  const auto& pc = c.policy;
  json pol{{"kind", to_string(pc.kind)}, {"lower", pc.lower}, {"upper", pc.upper}, {"init", pc.init},
           {"hidden", pc.mlp.hidden}, {"output_scale", pc.mlp.output_scale}, {"output_bias", pc.mlp.output_bias},
           {"exploration_std", pc.exploration_std}};
  const auto& t = c.solver;
  json sol{{"batch_size", t.batch_size}, {"max_kl", t.max_kl}, {"iterations", t.iterations},
           {"baseline", to_string(t.baseline)}, {"eval_every", t.eval_every}, {"eval_rollouts", t.eval_rollouts},
           {"final_eval_rollouts", t.final_eval_rollouts}, {"max_halvings", t.max_halvings}};
  const auto& f = c.checker;
  json chk{{"h", f.h}, {"num_check_points", f.num_check_points}, {"noise_samples", f.noise_samples},
           {"tolerance", f.tolerance}, {"margin", f.margin}, {"max_full_block", f.max_full_block},
           {"num_directions", f.num_directions}};
  return json{{"environment", env},
              {"policy", pol},
              {"solver", sol},
              {"checker", chk},
              {"verifier", {{"budget", c.verifier.budget}, {"restarts", c.verifier.restarts},
                            {"rollouts", c.verifier.rollouts}}},
              {"bench", {{"num_sequences", c.bench.num_sequences}, {"horizon", c.bench.horizon}}},
              {"seed", c.seed}};
}

/// Hash of the canonical configuration; output_dir is excluded so that
/// reruns into different directories carry the same hash.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

inline GameSpec build_game(const EnvironmentConfig& e) {
  GameSpec g;
  if (e.name == "fishwar") {
    g = make_fishwar(e.fishwar);
  } else if (e.name == "mac") {
    g = make_mac(e.mac);
  } else if (e.name == "counterexample") {
    g = make_non_mpg_counterexample();
  } else {
    throw ConfigError("unknown environment '" + e.name + "'");
  }
  return e.cooperative ? make_cooperative(g) : g;
}

inline PolicyFamily build_policy(const GameSpec& game, const PolicyConfig& pc) {
  PolicyFamily pol = [&] {
    switch (pc.kind) {
      case PolicyKind::linear: return make_linear_policy(game, pc.lower, pc.upper, pc.init);
      case PolicyKind::mlp: {
        MlpOptions mo = pc.mlp;
        mo.output_bias = detail::broadcast(mo.output_bias, game.total_action_dim(), "policy.output_bias");
        return make_mlp_policy(game, mo);
      }
      case PolicyKind::tabular_constant: return make_constant_policy(game);
    }
    throw ConfigError("unknown policy kind");
  }();
  if (!pc.exploration_std.empty()) {
    pol = pol.with_exploration_std(detail::broadcast(pc.exploration_std, pol.action_dim(), "policy.exploration_std"));
  }
  return pol;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const MpgReport& r) {
  return json{{"verdict", to_string(r.verdict)},
              {"residuals",
               {{"cond-ww", optional_number(r.cond_ww)},
                {"cond-wx", optional_number(r.cond_wx)},
                {"cond-xx", optional_number(r.cond_xx)},
                {"separability", optional_number(r.separability)},
                {"null-gradient", optional_number(r.null_gradient)}}},
              {"applicable", r.applicable},
              {"max_applicable_residual", r.max_applicable_residual},
              {"tolerance", r.tolerance},
              {"inconclusive_band", r.inconclusive_band},
              {"points_sampled", r.points_sampled},
              {"points_skipped", r.points_skipped},
              {"note", r.note}};
}

inline json to_json(const SolveResult& r) {
  json evals = json::array();
  for (const auto& e : r.evaluations) {
    evals.push_back({{"iteration", e.iteration}, {"value", e.value}, {"stderr", e.std_error}, {"best", e.best}});
  }
  return json{{"w", r.w},
              {"value_estimate", {{"mean", r.value}, {"stderr", r.value_stderr}}},
              {"iterations", r.curve.size()},
              {"best_iteration", r.best_iteration},
              {"terminated_reason", r.terminated_reason},
              {"evaluations", evals}};
}

inline json to_json(const NashReport& r) {
  json agents = json::array();
  for (std::size_t k = 0; k < r.agents.size(); ++k) {
    const auto& a = r.agents[k];
    agents.push_back({{"agent", k},
                      {"baseline_value", a.baseline},
                      {"best_deviation_value", a.best},
                      {"best_deviation_block", a.best_block},
                      {"gain", a.gain},
                      {"eps_abs", a.eps_abs},
                      {"eps_rel", a.eps_rel},
                      {"evaluations", a.evaluations}});
  }
  return json{{"agents", agents},
              {"epsilon", r.epsilon},
              {"epsilon_rel", r.epsilon_rel},
              {"budget_per_agent", r.options.budget},
              {"restarts", r.options.restarts},
              {"rollouts_per_evaluation", r.rollouts},
              {"note", r.note}};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "iteration,value,stderr,kl\n";
  for (const auto& c : curve) {
    out << c.iteration << ',' << format_double(c.value) << ',' << format_double(c.std_error) << ','
        << format_double(c.kl) << '\n';
  }
}

/// Rows x_0..x_{S-1}, w_0..w_{W-1}, J for each joint grid point.
inline void write_potential_grid_csv(std::ostream& out, const PotentialEvaluator& j, const GameSpec& game,
                                     const PolicyFamily& policy, const std::vector<Vec>& points, std::uint64_t seed) {
  for (std::size_t m = 0; m < game.state_dim; ++m) out << 'x' << m << ',';
  for (std::size_t i = 0; i < policy.total_params(); ++i) out << 'w' << i << ',';
  out << "J\n";
  for (const Vec& z : points) {
    const Vec x(z.begin(), z.begin() + static_cast<long>(game.state_dim));
    const Vec w(z.begin() + static_cast<long>(game.state_dim), z.end());
    for (double v : z) out << format_double(v) << ',';
    out << format_double(j.closed_loop(x, w, seed)) << '\n';
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace mpg
