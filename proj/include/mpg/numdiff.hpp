#pragma once

// Central finite differences and the sampled potential-game condition
// checker. All expectations over reward noise use a fixed set of draws per
// check point, shared by every perturbed evaluation (common random numbers).

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/policy.hpp"

namespace mpg {

struct FdConfig {
  double h = 1e-4;                    // relative step, scaled by max(1, |coordinate|)
  std::size_t num_check_points = 32;  // M
  std::size_t noise_samples = 64;     // K
  std::uint64_t base_seed = 0;
  double tolerance = 1e-3;            // on normalized residuals
  double margin = 0.1;                // fraction of each box width kept clear
  std::size_t max_full_block = 64;    // larger derivative blocks are probed along random directions
  std::size_t num_directions = 8;

  void validate() const {
    if (!(h > 0.0)) throw ConfigError("FdConfig: h must be positive");
    if (num_check_points < 1 || noise_samples < 1) throw ConfigError("FdConfig: M and K must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("FdConfig: tolerance must be positive");
    if (!(margin >= 0.0 && margin < 0.5)) throw ConfigError("FdConfig: margin must lie in [0, 0.5)");
    if (num_directions < 1) throw ConfigError("FdConfig: num_directions must be >= 1");
  }
};

using ScalarFn = std::function<double(const Vec&)>;

inline double fd_step(double h, double coordinate) { return h * std::max(1.0, std::abs(coordinate)); }

inline double checked_eval(const ScalarFn& fn, const Vec& p, std::size_t coordinate) {
  const double v = fn(p);
  if (!std::isfinite(v)) {
    throw NumericalDomainError("fd: non-finite evaluation perturbing coordinate " + std::to_string(coordinate),
                               static_cast<double>(coordinate));
  }
  return v;
}

/// Central-difference gradient.
inline Vec fd_grad(const ScalarFn& fn, const Vec& point, const FdConfig& cfg = {}) {
  Vec g(point.size());
  Vec p = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double step = fd_step(cfg.h, point[i]);
    p[i] = point[i] + step;
    const double fp = checked_eval(fn, p, i);
    p[i] = point[i] - step;
    const double fm = checked_eval(fn, p, i);
    p[i] = point[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Perturbation direction: sparse coordinates with weights.
struct Direction {
  std::vector<std::size_t> index;
  Vec weight;

  static Direction coordinate(std::size_t i) { return {{i}, {1.0}}; }

  double step(double h, const Vec& point) const {
    double scale = 1.0;
    for (std::size_t i : index) scale = std::max(scale, std::abs(point[i]));
    return h * scale;
  }

  void add_to(Vec& p, double t) const {
    for (std::size_t j = 0; j < index.size(); ++j) p[index[j]] += t * weight[j];
  }
};

/// Random unit direction supported on [offset, offset + size).
inline Direction random_direction(std::size_t offset, std::size_t size, Rng& rng) {
  Direction d;
  double norm = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    d.index.push_back(offset + i);
    d.weight.push_back(standard_normal(rng));
    norm += d.weight.back() * d.weight.back();
  }
  norm = std::sqrt(std::max(norm, 1e-300));
  for (double& v : d.weight) v /= norm;
  return d;
}

/// Vector-valued evaluator; FD formulas below apply componentwise.
using VectorFn = std::function<Vec(const Vec&)>;

inline Vec fd_directional(const VectorFn& fn, const Vec& point, const Direction& u, double h) {
  const double s = u.step(h, point);
  Vec p = point;
  u.add_to(p, s);
  Vec fp = fn(p);
  p = point;
  u.add_to(p, -s);
  const Vec fm = fn(p);
  for (std::size_t i = 0; i < fp.size(); ++i) fp[i] = (fp[i] - fm[i]) / (2.0 * s);
  return fp;
}

/// Mixed second derivative along u and v by the four-point central stencil.
inline Vec fd_mixed(const VectorFn& fn, const Vec& point, const Direction& u, const Direction& v, double h) {
  const double su = u.step(h, point);
  const double sv = v.step(h, point);
  std::array<Vec, 4> f;
  const std::array<std::array<double, 2>, 4> signs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
  for (std::size_t c = 0; c < 4; ++c) {
    Vec p = point;
    u.add_to(p, signs[c][0] * su);
    v.add_to(p, signs[c][1] * sv);
    f[c] = fn(p);
  }
  Vec out(f[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (f[0][i] - f[1][i] - f[2][i] + f[3][i]) / (4.0 * su * sv);
  }
  return out;
}

inline double fd_mixed(const ScalarFn& fn, const Vec& point, const Direction& u, const Direction& v, double h) {
  return fd_mixed([&](const Vec& p) { return Vec{fn(p)}; }, point, u, v, h)[0];
}

/// Draws K reward-noise vectors at (x, a). Deterministic games yield one
/// empty draw.
inline std::vector<Vec> draw_reward_noise(const GameSpec& game, const Vec& x, const Vec& a, std::size_t k,
                                          std::uint64_t seed) {
  if (!game.stochastic()) return {Vec{}};
  Rng rng(seed);
  std::vector<Vec> out;
  out.reserve(k);
  for (std::size_t s = 0; s < k; ++s) out.push_back(game.draw_noise(x, a, rng).reward);
  return out;
}

/// Closed-loop single-step rewards r_k(x, pi(x, w), sigma) averaged over a
/// frozen noise set, as functions of the joint point z = (x, w).
class FrozenNoiseRewards {
 public:
  FrozenNoiseRewards(const GameSpec& game, const PolicyFamily& policy, std::vector<Vec> sigmas)
      : game_(&game), policy_(&policy), sigmas_(std::move(sigmas)) {}

  std::size_t state_dim() const { return game_->state_dim; }
  const std::vector<Vec>& sigmas() const { return sigmas_; }

  Vec split_state(const Vec& z) const { return {z.begin(), z.begin() + static_cast<long>(game_->state_dim)}; }
  std::span<const double> split_params(const Vec& z) const {
    return std::span<const double>(z).subspan(game_->state_dim);
  }

  Vec action(const Vec& z) const { return policy_->forward(split_state(z), split_params(z)); }

  /// Expected reward of every agent.
  Vec rewards(const Vec& z) const {
    const Vec x = split_state(z);
    const Vec a = policy_->forward(x, split_params(z));
    Vec acc(game_->num_agents, 0.0);
    for (const Vec& s : sigmas_) {
      for (std::size_t k = 0; k < game_->num_agents; ++k) acc[k] += game_->reward(k, x, a, s);
    }
    for (double& v : acc) v /= static_cast<double>(sigmas_.size());
    return acc;
  }

  double common(const Vec& z) const {
    const Vec x = split_state(z);
    const Vec a = policy_->forward(x, split_params(z));
    double acc = 0.0;
    for (const Vec& s : sigmas_) acc += game_->decomposition->common(x, a, s);
    return acc / static_cast<double>(sigmas_.size());
  }

  /// Expected Theta_k for every agent.
  Vec non_common(const Vec& z) const {
    const Vec x = split_state(z);
    const Vec a = policy_->forward(x, split_params(z));
    Vec acc(game_->num_agents, 0.0);
    for (const Vec& s : sigmas_) {
      for (std::size_t k = 0; k < game_->num_agents; ++k) acc[k] += game_->decomposition->non_common(k, x, a, s);
    }
    for (double& v : acc) v /= static_cast<double>(sigmas_.size());
    return acc;
  }

 private:
  const GameSpec* game_;
  const PolicyFamily* policy_;
  std::vector<Vec> sigmas_;
};

inline Vec join_point(const Vec& x, std::span<const double> w) {
  Vec z = x;
  z.insert(z.end(), w.begin(), w.end());
  return z;
}

/// Kronecker (generalised golden ratio) low-discrepancy sequence in [0,1)^d.
inline std::vector<Vec> low_discrepancy_points(std::size_t count, std::size_t dim) {
  // phi_d: positive root of t^(d+1) = t + 1
  double phi = 2.0;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / static_cast<double>(dim + 1));
  Vec alpha(dim);
  for (std::size_t j = 0; j < dim; ++j) alpha[j] = std::fmod(std::pow(1.0 / phi, static_cast<double>(j + 1)), 1.0);
  std::vector<Vec> pts(count, Vec(dim));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.5 + alpha[j] * static_cast<double>(i + 1);
      pts[i][j] = v - std::floor(v);
    }
  }
  return pts;
}

struct CheckPoint {
  Vec x;
  Vec w;
};

/// Check points inside state_box x param_box, kept `margin` of the width
/// away from every finite bound. Unbounded parameters come from the
/// policy's initializer distribution.
inline std::vector<CheckPoint> sample_check_points(const GameSpec& game, const PolicyFamily& policy,
                                                   const FdConfig& cfg) {
  const Box joint = game.state_box.joined(policy.param_box());
  std::vector<std::size_t> bounded;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (joint.bounded(i)) bounded.push_back(i);
  }
  const auto unit = low_discrepancy_points(cfg.num_check_points, std::max<std::size_t>(1, bounded.size()));
  std::vector<CheckPoint> out;
  for (std::size_t p = 0; p < cfg.num_check_points; ++p) {
    Rng rng(derive_seed(cfg.base_seed, 0xc4ec, p));
    Vec start = game.start_state(rng);
    Vec z = join_point(start, policy.sample_params(rng));
    for (std::size_t b = 0; b < bounded.size(); ++b) {
      const std::size_t i = bounded[b];
      const double lo = joint.lower[i], hi = joint.upper[i];
      const double m = cfg.margin * (hi - lo);
      z[i] = lo + m + unit[p][b] * (hi - lo - 2.0 * m);
    }
    CheckPoint cp;
    cp.x.assign(z.begin(), z.begin() + static_cast<long>(game.state_dim));
    cp.w.assign(z.begin() + static_cast<long>(game.state_dim), z.end());
    out.push_back(std::move(cp));
  }
  return out;
}

enum class Verdict { mpg, non_mpg, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::mpg: return "MPG";
    case Verdict::non_mpg: return "non-MPG";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// Normalized residual |a - b| / max(1, |a|, |b|).
inline double normalized_residual(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Residuals of one check point. Raw values are absolute differences;
/// normalized values divide by max(1, magnitudes compared).
struct PointResiduals {
  double cond_ww = 0.0, cond_wx = 0.0, cond_xx = 0.0, separability = 0.0, null_gradient = 0.0;
  double raw_ww = 0.0, raw_wx = 0.0, raw_xx = 0.0, raw_separability = 0.0, raw_null_gradient = 0.0;
  bool wx_applicable = false;
};

struct MpgReport {
  Verdict verdict = Verdict::inconclusive;
  std::optional<double> cond_ww, cond_wx, cond_xx, separability, null_gradient;
  std::vector<std::string> applicable;
  double tolerance = 0.0;
  double inconclusive_band = 0.0;
  double max_applicable_residual = 0.0;
  std::size_t points_sampled = 0;
  std::size_t points_skipped = 0;
  FdConfig config;
  std::string note;
};

namespace detail {

inline void update(double& norm_slot, double& raw_slot, double a, double b) {
  norm_slot = std::max(norm_slot, normalized_residual(a, b));
  raw_slot = std::max(raw_slot, std::abs(a - b));
}

/// Directions probing one parameter block: every coordinate when small,
/// random unit directions otherwise.
inline std::vector<Direction> block_directions(std::size_t offset, std::size_t size, bool full, std::size_t count,
                                               Rng& rng) {
  std::vector<Direction> dirs;
  if (full) {
    for (std::size_t i = 0; i < size; ++i) dirs.push_back(Direction::coordinate(offset + i));
  } else {
    for (std::size_t i = 0; i < count; ++i) dirs.push_back(random_direction(offset, size, rng));
  }
  return dirs;
}

/// Same direction weights moved to another block of equal size.
inline Direction shifted(const Direction& d, std::size_t from, std::size_t to) {
  Direction out = d;
  for (auto& i : out.index) i = i - from + to;
  return out;
}

}  // namespace detail

/// Residuals of the potential-game conditions at one (x, w).
inline PointResiduals mpg_point_residuals(const GameSpec& game, const PolicyFamily& policy, const Vec& x,
                                          const Vec& w, const FdConfig& cfg, std::uint64_t noise_seed) {
  const std::size_t n = game.num_agents;
  const std::size_t s_dim = game.state_dim;
  const Vec a0 = policy.forward(x, w);
  FrozenNoiseRewards er(game, policy, draw_reward_noise(game, x, a0, cfg.noise_samples, noise_seed));
  const Vec z = join_point(x, w);
  const VectorFn rewards = [&](const Vec& p) { return er.rewards(p); };
  Rng dir_rng(derive_seed(noise_seed, 0xd1));
  const auto woff = [&](std::size_t k) { return s_dim + policy.param_offset(k); };

  PointResiduals out;
  // state directions
  std::vector<Direction> xdirs;
  for (std::size_t m = 0; m < s_dim; ++m) xdirs.push_back(Direction::coordinate(m));

  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = k + 1; j < n; ++j) {
      const std::size_t wk = policy.param_dim(k), wj = policy.param_dim(j);
      // d/dw_j d/dw_k of r_k against d/dw_k d/dw_j of r_j
      {
        const bool full = wk * wj <= cfg.max_full_block;
        if (full) {
          for (std::size_t b = 0; b < wk; ++b) {
            for (std::size_t c = 0; c < wj; ++c) {
              const Vec h2 = fd_mixed(rewards, z, Direction::coordinate(woff(j) + c),
                                      Direction::coordinate(woff(k) + b), cfg.h);
              detail::update(out.cond_ww, out.raw_ww, h2[k], h2[j]);
            }
          }
        } else {
          for (std::size_t r = 0; r < cfg.num_directions; ++r) {
            const Direction u = random_direction(woff(j), wj, dir_rng);
            const Direction v = random_direction(woff(k), wk, dir_rng);
            const Vec h2 = fd_mixed(rewards, z, u, v, cfg.h);
            detail::update(out.cond_ww, out.raw_ww, h2[k], h2[j]);
          }
        }
      }
      // d/dw_j grad_x r_k against d/dw_k grad_x r_j (needs equal block sizes)
      if (wk == wj) {
        out.wx_applicable = true;
        const bool full = s_dim * wk <= cfg.max_full_block;
        const auto pdirs = detail::block_directions(woff(j), wj, full, cfg.num_directions, dir_rng);
        for (const Direction& e : xdirs) {
          for (const Direction& u : pdirs) {
            const double lhs = fd_mixed(rewards, z, e, u, cfg.h)[k];
            const double rhs = fd_mixed(rewards, z, e, detail::shifted(u, woff(j), woff(k)), cfg.h)[j];
            detail::update(out.cond_wx, out.raw_wx, lhs, rhs);
          }
        }
      }
      // Hessians in x
      for (std::size_t m = 0; m < s_dim; ++m) {
        for (std::size_t q = m; q < s_dim; ++q) {
          const Vec h2 = fd_mixed(rewards, z, xdirs[m], xdirs[q], cfg.h);
          detail::update(out.cond_xx, out.raw_xx, h2[k], h2[j]);
        }
      }
    }
  }

  if (game.decomposition) {
    const auto& dec = *game.decomposition;
    for (const Vec& s : er.sigmas()) {
      for (std::size_t k = 0; k < n; ++k) {
        const double r = game.reward(k, x, a0, s);
        const double split = dec.common(x, a0, s) + dec.non_common(k, x, a0, s);
        detail::update(out.separability, out.raw_separability, r, split);
      }
    }
    const VectorFn theta = [&](const Vec& p) { return er.non_common(p); };
    for (std::size_t k = 0; k < n; ++k) {
      // Theta_k must not move with agent k's own parameters
      const bool full = policy.param_dim(k) <= cfg.max_full_block;
      for (const Direction& u :
           detail::block_directions(woff(k), policy.param_dim(k), full, cfg.num_directions, dir_rng)) {
        detail::update(out.separability, out.raw_separability, fd_directional(theta, z, u, cfg.h)[k], 0.0);
      }
      // expected gradient along agent k's own state components vanishes
      for (std::size_t m : game.own_state(k)) {
        const double gth = fd_directional(theta, z, Direction::coordinate(m), cfg.h)[k];
        detail::update(out.null_gradient, out.raw_null_gradient, gth, 0.0);
      }
    }
  }
  return out;
}

/// Samples check points and evaluates every condition. Verdict MPG means no
/// violation was found at the sampled points.
inline MpgReport check_mpg_conditions(const GameSpec& game, const PolicyFamily& policy, const FdConfig& cfg = {}) {
  cfg.validate();
  game.validate();
  policy.check_compatible(game);
  const auto points = sample_check_points(game, policy, cfg);
  std::vector<std::optional<PointResiduals>> per(points.size());
  parallel_for(points.size(), [&](std::size_t p) {
    const Vec a = policy.forward(points[p].x, points[p].w);
    if (!game.action_bounds(points[p].x).contains(a, 1e-9)) return;  // skipped
    per[p] = mpg_point_residuals(game, policy, points[p].x, points[p].w, cfg, derive_seed(cfg.base_seed, 0x5eed, p));
  });

  MpgReport rep;
  rep.config = cfg;
  rep.tolerance = cfg.tolerance;
  rep.inconclusive_band = 3.0 * cfg.tolerance;
  rep.points_sampled = points.size();
  PointResiduals agg;
  bool any = false;
  for (const auto& r : per) {
    if (!r) {
      ++rep.points_skipped;
      continue;
    }
    any = true;
    agg.cond_ww = std::max(agg.cond_ww, r->cond_ww);
    agg.cond_wx = std::max(agg.cond_wx, r->cond_wx);
    agg.cond_xx = std::max(agg.cond_xx, r->cond_xx);
    agg.separability = std::max(agg.separability, r->separability);
    agg.null_gradient = std::max(agg.null_gradient, r->null_gradient);
    agg.wx_applicable = agg.wx_applicable || r->wx_applicable;
  }
  if (!any) {
    rep.verdict = Verdict::inconclusive;
    rep.note = "every check point was skipped (policy action outside the feasible box)";
    return rep;
  }
  rep.cond_ww = agg.cond_ww;
  rep.cond_xx = agg.cond_xx;
  if (agg.wx_applicable) rep.cond_wx = agg.cond_wx;
  if (game.decomposition) {
    rep.separability = agg.separability;
    rep.null_gradient = agg.null_gradient;
    rep.applicable = {"cond-ww", "separability", "null-gradient"};
    rep.max_applicable_residual = std::max({agg.cond_ww, agg.separability, agg.null_gradient});
  } else {
    rep.applicable = {"cond-ww", "cond-xx"};
    rep.max_applicable_residual = std::max(agg.cond_ww, agg.cond_xx);
    if (agg.wx_applicable) {
      rep.applicable.insert(rep.applicable.begin() + 1, "cond-wx");
      rep.max_applicable_residual = std::max(rep.max_applicable_residual, agg.cond_wx);
    }
  }
  if (rep.max_applicable_residual <= rep.tolerance) {
    rep.verdict = Verdict::mpg;
    rep.note = "no violation found at the sampled points";
  } else if (rep.max_applicable_residual <= rep.inconclusive_band) {
    rep.verdict = Verdict::inconclusive;
    rep.note = "largest residual lies within the finite-difference noise band";
  } else {
    rep.verdict = Verdict::non_mpg;
    rep.note = "condition violated at a sampled point";
  }
  return rep;
}

}  // namespace mpg
