#pragma once

// Shared vocabulary: vectors, boxes, error types, seeded RNG and a small
// deterministic parallel-for.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mpg {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

/// Invalid dimensions, parameters or configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced or hit a non-finite value. `where` locates it
/// (rollout step, coordinate index, quadrature node, ...).
class NumericalDomainError : public std::domain_error {
 public:
  NumericalDomainError(const std::string& what, double where)
      : std::domain_error(what), where_(where) {}
  double where() const noexcept { return where_; }

 private:
  double where_;
};

/// An integration path left the feasible state x parameter box.
class PathError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Axis-aligned box. Infinite bounds are allowed.
struct Box {
  Vec lower;
  Vec upper;

  static Box uniform(std::size_t n, double lo, double hi) {
    return Box{Vec(n, lo), Vec(n, hi)};
  }
  static Box unbounded(std::size_t n) {
    const double inf = std::numeric_limits<double>::infinity();
    return uniform(n, -inf, inf);
  }

  std::size_t size() const { return lower.size(); }

  bool contains(std::span<const double> x, double tol = 0.0) const {
    if (x.size() != lower.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
    }
    return true;
  }

  bool bounded(std::size_t i) const {
    return std::isfinite(lower[i]) && std::isfinite(upper[i]);
  }

  void validate(const char* what) const {
    if (lower.size() != upper.size()) {
      throw ConfigError(std::string(what) + ": bound vectors differ in length");
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] <= upper[i])) {
        throw ConfigError(std::string(what) + ": lower bound exceeds upper bound at component " +
                          std::to_string(i));
      }
    }
  }

  /// Concatenation of two boxes (e.g. state box x parameter box).
  Box joined(const Box& other) const {
    Box out = *this;
    out.lower.insert(out.lower.end(), other.lower.begin(), other.lower.end());
    out.upper.insert(out.upper.end(), other.upper.begin(), other.upper.end());
    return out;
  }
};

/// Componentwise clamp of a joint action into its feasible box.
inline Vec project_action(std::span<const double> a, const Box& box) {
  if (a.size() != box.size()) throw ConfigError("project_action: dimension mismatch");
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], box.lower[i], box.upper[i]);
  }
  return out;
}

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return mix_seed(mix_seed(base ^ mix_seed(stream)) + index);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Pairwise summation; fixed reduction tree so results are bit-stable.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

/// Standard error of the mean (0 for fewer than two samples).
inline double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  const double m = mean(v);
  Vec sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  const double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Worker count: MPG_THREADS if set, otherwise hardware concurrency.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("MPG_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Each index must write only its own output
/// slot; callers reduce afterwards in index order, so results do not depend
/// on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mpg
