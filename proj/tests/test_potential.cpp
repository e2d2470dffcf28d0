#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "mpg/environments.hpp"
#include "mpg/io.hpp"
#include "mpg/potential.hpp"

using namespace mpg;

namespace {

double fishwar_j_oracle(double x, const Vec& w) {
  double s = std::log(x);
  for (double v : w) s += std::log(v);
  return s;
}

struct FishWarFixture : ::testing::Test {
  GameSpec game = make_fishwar({});
  PolicyFamily policy = make_linear_policy(game, 0.0, 1.0, 0.5);
  LineIntegralOptions opts;
  Vec base_x{1.0};
  Vec base_w{1.0, 1.0};
  std::vector<Vec> sigmas{Vec{}};

  double path(const std::vector<Vec>& pts) const { return potential_path_integral(game, policy, pts, sigmas, opts); }
};

}  // namespace

TEST_F(FishWarFixture, LineIntegralMatchesClosedFormOnGrid) {
  const PotentialEvaluator j = PotentialEvaluator::line_integral(game, policy, base_x, base_w, opts);
  Vec diffs;
  for (double x : {0.5, 0.625, 0.75, 0.875, 1.0}) {
    for (double w : {0.4, 0.5, 0.6, 0.7, 0.8}) diffs.push_back(j.closed_loop({x}, {w, w}, 0) - fishwar_j_oracle(x, {w, w}));
  }
  const double c = mean(diffs);
  double worst = 0.0;
  for (double d : diffs) worst = std::max(worst, std::abs(d - c));
  EXPECT_LT(worst, 1e-5);
  EXPECT_LT(std::abs(c), 1e-5);  // base point has J = 0 on both sides
}

TEST_F(FishWarFixture, AsymmetricParametersFollowClosedForm) {
  const PotentialEvaluator j = PotentialEvaluator::line_integral(game, policy, base_x, base_w, opts);
  for (const Vec& w : {Vec{0.45, 0.8}, Vec{0.9, 0.55}}) {
    EXPECT_NEAR(j.closed_loop({0.7}, w, 0), fishwar_j_oracle(0.7, w), 1e-5);
  }
}

TEST_F(FishWarFixture, DegeneratePathIsExactlyZero) {
  EXPECT_EQ(potential_line_integral(game, policy, base_x, base_w, base_x, base_w, opts), 0.0);
  const PotentialEvaluator j = PotentialEvaluator::line_integral(game, policy, base_x, base_w, opts);
  EXPECT_EQ(j.closed_loop(base_x, base_w, 0), 0.0);
}

TEST_F(FishWarFixture, PathIndependence) {
  const Vec start = join_point(base_x, base_w);
  const Vec end{0.6, 0.5, 0.7};
  const double straight = path({start, end});
  const double bent = path({start, {0.8, 0.95, 0.45}, end});
  const double box_corner = path({start, {0.6, 1.0, 1.0}, {0.6, 0.5, 1.0}, end});
  EXPECT_LT(std::abs(straight - bent), 1e-5);
  EXPECT_LT(std::abs(straight - box_corner), 1e-5);
}

TEST_F(FishWarFixture, Additivity) {
  const Vec a{0.9, 0.9, 0.6}, b{0.55, 0.5, 0.8}, c{0.7, 0.45, 0.45};
  EXPECT_LT(std::abs(path({a, b}) + path({b, c}) - path({a, c})), 2e-5);
}

TEST_F(FishWarFixture, PathOutsideBoxRejected) {
  EXPECT_THROW(path({join_point(base_x, base_w), {0.5, 1.2, 0.5}}), PathError);
  EXPECT_THROW(potential_line_integral(game, policy, {1.5}, base_w, base_x, base_w, opts), PathError);
}

TEST_F(FishWarFixture, DeclaredValueAtHalfShares) {
  const PotentialEvaluator j = declared_potential(game, policy);
  EXPECT_NEAR(j.closed_loop({1.0}, {0.5, 0.5}, 0), 2.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(j.closed_loop({1.0}, {0.5, 0.5}, 0), -1.38629, 1e-5);
}

TEST_F(FishWarFixture, ConsistencyWithDeclaredPotential) {
  const ConsistencyReport r = potential_consistency_check(game, policy, declared_potential(game, policy));
  EXPECT_LT(r.max_residual(), 1e-6);
  EXPECT_EQ(r.points_skipped, 0u);
}

TEST_F(FishWarFixture, ConsistencyWithLineIntegralPotential) {
  FdConfig cfg;
  cfg.num_check_points = 4;
  LineIntegralOptions fine = opts;
  fine.panels = 2048;  // trapezoid error near w = 0.1 dominates at the default
  const PotentialEvaluator j = PotentialEvaluator::line_integral(game, policy, base_x, base_w, fine);
  EXPECT_LT(potential_consistency_check(game, policy, j, cfg).max_residual(), 1e-4);
}

TEST_F(FishWarFixture, GaugeShiftAddsConstant) {
  const PotentialEvaluator j = declared_potential(game, policy);
  const PotentialEvaluator j10 = j.shifted(10.0);
  EXPECT_DOUBLE_EQ(j10.closed_loop({0.4}, {0.3, 0.2}, 0) - j.closed_loop({0.4}, {0.3, 0.2}, 0), 10.0);
  EXPECT_DOUBLE_EQ(j10({0.4}, {0.1, 0.1}, {}) - j({0.4}, {0.1, 0.1}, {}), 10.0);
  // consistency only sees gradients
  EXPECT_LT(potential_consistency_check(game, policy, j10).max_residual(), 1e-6);
}

TEST_F(FishWarFixture, LineIntegralHasNoInstantaneousForm) {
  const PotentialEvaluator j = PotentialEvaluator::line_integral(game, policy, base_x, base_w, opts);
  EXPECT_FALSE(j.has_instantaneous());
  EXPECT_THROW(j({1.0}, {0.5, 0.5}, {}), ConfigError);
}

TEST_F(FishWarFixture, GridCsvExport) {
  std::ostringstream os;
  write_potential_grid_csv(os, declared_potential(game, policy), game, policy, {{1.0, 0.5, 0.5}, {0.5, 0.2, 0.3}}, 0);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x0,w0,w1,J");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Potential, CooperativePathIndependence) {
  const GameSpec g = make_cooperative(make_fishwar({}));
  const PolicyFamily pol = make_linear_policy(g, 0.0, 1.0, 0.5);
  const std::vector<Vec> sig{Vec{}};
  const LineIntegralOptions opts;
  const Vec a{1.0, 1.0, 1.0}, b{0.6, 0.5, 0.7};
  const double straight = potential_path_integral(g, pol, {a, b}, sig, opts);
  const double bent = potential_path_integral(g, pol, {a, {0.9, 0.5, 0.95}, b}, sig, opts);
  EXPECT_LT(std::abs(straight - bent), 1e-5);
  EXPECT_NEAR(straight, fishwar_j_oracle(0.6, {0.5, 0.7}), 1e-5);
}

TEST(Potential, CounterexampleIntegralIsPathDependent) {
  const GameSpec g = make_non_mpg_counterexample();
  const PolicyFamily pol = make_linear_policy(g, -2.0, 2.0, 1.0);
  const std::vector<Vec> sig{Vec{}};
  const LineIntegralOptions opts;
  const Vec a{1.0, 0.0, 0.0}, b{1.0, 1.0, 1.0};
  // field (w2^2, w1): corner path gives 1, the diagonal 1/3 + 1/2
  const double corner = potential_path_integral(g, pol, {a, {1.0, 1.0, 0.0}, b}, sig, opts);
  const double diagonal = potential_path_integral(g, pol, {a, b}, sig, opts);
  EXPECT_NEAR(corner, 1.0, 1e-6);
  EXPECT_NEAR(diagonal, 5.0 / 6.0, 1e-4);
}

TEST(Potential, NonFiniteFieldReportsLocation) {
  GameSpec g = make_non_mpg_counterexample();
  g.state_box = Box::uniform(1, -1.0, 1.0);
  g.reward = [](std::size_t, const Vec& x, const Vec&, const Vec&) { return std::log(x[0]); };
  const PolicyFamily pol = make_linear_policy(g, -2.0, 2.0, 1.0);
  try {
    potential_path_integral(g, pol, {{1.0, 1.0, 1.0}, {-1.0, 1.0, 1.0}}, {Vec{}}, LineIntegralOptions{});
    FAIL() << "expected NumericalDomainError";
  } catch (const NumericalDomainError& e) {
    EXPECT_GE(e.where(), 0.5);
    EXPECT_LE(e.where(), 1.0);
  }
}

TEST(Potential, MacDeclaredValues) {
  const MacParams p;
  const GameSpec mac = make_mac(p);
  const PolicyFamily lin = make_linear_policy(mac, 0.0, 1.0, 0.1);
  const PotentialEvaluator j = declared_potential(mac, lin);
  const Vec x{1.0, 2.0, 3.0, 4.0};
  const Vec v{0.5, 0.6, 0.7, 0.8};
  EXPECT_NEAR(j(x, Vec(4, 0.0), v), p.alpha * 10.0, 1e-14);
  const Vec a{0.3, 0.2, 0.1, 0.4};
  double s = 1.0;
  for (std::size_t k = 0; k < 4; ++k) s += p.gains[k] * v[k] * a[k];
  EXPECT_NEAR(j(x, a, v), std::log(s) + p.alpha * 10.0, 1e-12);
  // closed loop with zero gains reduces to the battery term
  EXPECT_NEAR(j.closed_loop(x, Vec(4, 0.0), 3), p.alpha * 10.0, 1e-14);
}

TEST(Potential, MacConsistency) {
  const GameSpec mac = make_mac({});
  const PolicyFamily pol = make_mlp_policy(mac, {{32, 32, 32}, 0.01, Vec(4, 0.5)});
  FdConfig cfg;
  cfg.noise_samples = 64;
  const ConsistencyReport r = potential_consistency_check(mac, pol, declared_potential(mac, pol), cfg);
  EXPECT_LT(r.max_residual(), 1e-3);
}

TEST(Potential, CooperativeConsistency) {
  const GameSpec g = make_cooperative(make_mac({}));
  const PolicyFamily pol = make_linear_policy(g, 0.0, 0.2, 0.1);
  EXPECT_LT(potential_consistency_check(g, pol, declared_potential(g, pol)).max_residual(), 1e-8);
}

TEST(Potential, DeclaredNeedsDecomposition) {
  const GameSpec g = make_non_mpg_counterexample();
  EXPECT_THROW(declared_potential(g, make_linear_policy(g, -2.0, 2.0, 1.0)), ConfigError);
}
