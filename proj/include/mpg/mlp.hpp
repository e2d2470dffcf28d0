#pragma once

// Small fully connected network with ReLU hidden layers and a linear output,
// evaluated on a flat parameter span. Parameter layout per layer: row-major
// weights [out x in] followed by the bias [out].

#include <span>
#include <vector>

#include "mpg/core.hpp"

namespace mpg {

class Mlp {
 public:
  Mlp() = default;

  /// sizes = {input, hidden..., output}
  explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ConfigError("Mlp: need at least input and output sizes");
    for (std::size_t s : sizes_) {
      if (s == 0) throw ConfigError("Mlp: layer sizes must be positive");
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) n += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    return n;
  }

  Vec forward(std::span<const double> input, std::span<const double> params) const {
    std::vector<Vec> acts;
    run(input, params, acts);
    return acts.back();
  }

  /// Reverse mode: grad += cotangent^T * d output / d params.
  /// ReLU uses derivative 0 at exactly 0.
  void vjp(std::span<const double> input, std::span<const double> params,
           std::span<const double> cotangent, std::span<double> grad) const {
    check_params(params);
    if (cotangent.size() != output_dim() || grad.size() != params.size()) {
      throw ConfigError("Mlp::vjp: dimension mismatch");
    }
    std::vector<Vec> acts;
    run(input, params, acts);
    Vec delta(cotangent.begin(), cotangent.end());
    std::size_t offset = params.size();
    for (std::size_t l = num_layers(); l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      offset -= out * in + out;
      const double* weights = params.data() + offset;
      double* gw = grad.data() + offset;
      double* gb = gw + out * in;
      const Vec& a_in = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        if (delta[o] == 0.0) continue;
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * a_in[i];
      }
      if (l == 0) break;
      Vec prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        if (delta[o] == 0.0) continue;
        for (std::size_t i = 0; i < in; ++i) prev[i] += weights[o * in + i] * delta[o];
      }
      // acts[l] is a hidden ReLU output
      for (std::size_t i = 0; i < in; ++i) {
        if (!(a_in[i] > 0.0)) prev[i] = 0.0;
      }
      delta = std::move(prev);
    }
  }

  /// Jacobian of the outputs w.r.t. the parameters, [output_dim][param_count].
  std::vector<Vec> jacobian(std::span<const double> input, std::span<const double> params) const {
    std::vector<Vec> jac(output_dim(), Vec(params.size(), 0.0));
    Vec cot(output_dim(), 0.0);
    for (std::size_t o = 0; o < output_dim(); ++o) {
      std::fill(cot.begin(), cot.end(), 0.0);
      cot[o] = 1.0;
      vjp(input, params, cot, jac[o]);
    }
    return jac;
  }

  /// He-style uniform init for hidden layers; output weights scaled by
  /// out_scale and output biases set to out_bias.
  Vec initial_params(Rng& rng, double out_scale, std::span<const double> out_bias) const {
    Vec p(param_count(), 0.0);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const bool last = l + 1 == num_layers();
      const double limit = std::sqrt(6.0 / static_cast<double>(in)) * (last ? out_scale : 1.0);
      for (std::size_t i = 0; i < out * in; ++i) p[offset + i] = uniform(rng, -limit, limit);
      offset += out * in;
      for (std::size_t o = 0; o < out; ++o) {
        p[offset + o] = last && o < out_bias.size() ? out_bias[o] : 0.0;
      }
      offset += out;
    }
    return p;
  }

 private:
  void check_params(std::span<const double> params) const {
    if (params.size() != param_count()) throw ConfigError("Mlp: parameter vector has wrong length");
  }

  void run(std::span<const double> input, std::span<const double> params, std::vector<Vec>& acts) const {
    check_params(params);
    if (input.size() != input_dim()) throw ConfigError("Mlp: input has wrong length");
    acts.clear();
    acts.emplace_back(input.begin(), input.end());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* weights = params.data() + offset;
      const double* bias = weights + out * in;
      const Vec& a_in = acts.back();
      Vec z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double s = bias[o];
        for (std::size_t i = 0; i < in; ++i) s += weights[o * in + i] * a_in[i];
        z[o] = (l + 1 < num_layers()) ? std::max(0.0, s) : s;
      }
      offset += out * in + out;
      acts.push_back(std::move(z));
    }
  }

  std::vector<std::size_t> sizes_;
};

}  // namespace mpg
