#pragma once

// Parametric closed-loop policies pi(x, w). Each agent owns a contiguous
// parameter block w_k and maps its own state components to its actions.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/mlp.hpp"

namespace mpg {

enum class PolicyKind { linear, mlp, tabular_constant };

inline std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::linear: return "linear";
    case PolicyKind::mlp: return "mlp";
    case PolicyKind::tabular_constant: return "tabular-constant";
  }
  return "unknown";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "linear") return PolicyKind::linear;
  if (s == "mlp") return PolicyKind::mlp;
  if (s == "tabular-constant") return PolicyKind::tabular_constant;
  throw ConfigError("unknown policy kind '" + s + "'");
}

/// One agent's map from its selected state inputs to its action mean.
class AgentMap {
 public:
  virtual ~AgentMap() = default;
  virtual std::size_t param_count() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual Vec forward(std::span<const double> input, std::span<const double> wk) const = 0;
  /// grad += cot^T d forward / d wk
  virtual void vjp(std::span<const double> input, std::span<const double> wk,
                   std::span<const double> cot, std::span<double> grad) const = 0;
};

/// a_k = W_k * x_in, W_k stored row-major [A_k x |inputs|].
class LinearMap final : public AgentMap {
 public:
  LinearMap(std::size_t inputs, std::size_t outputs) : in_(inputs), out_(outputs) {}
  std::size_t param_count() const override { return in_ * out_; }
  std::size_t output_dim() const override { return out_; }
  Vec forward(std::span<const double> input, std::span<const double> wk) const override {
    Vec a(out_, 0.0);
    for (std::size_t o = 0; o < out_; ++o) {
      for (std::size_t i = 0; i < in_; ++i) a[o] += wk[o * in_ + i] * input[i];
    }
    return a;
  }
  void vjp(std::span<const double> input, std::span<const double>, std::span<const double> cot,
           std::span<double> grad) const override {
    for (std::size_t o = 0; o < out_; ++o) {
      for (std::size_t i = 0; i < in_; ++i) grad[o * in_ + i] += cot[o] * input[i];
    }
  }

 private:
  std::size_t in_;
  std::size_t out_;
};

/// a_k = w_k, ignoring the state.
class ConstantMap final : public AgentMap {
 public:
  explicit ConstantMap(std::size_t outputs) : out_(outputs) {}
  std::size_t param_count() const override { return out_; }
  std::size_t output_dim() const override { return out_; }
  Vec forward(std::span<const double>, std::span<const double> wk) const override {
    return {wk.begin(), wk.end()};
  }
  void vjp(std::span<const double>, std::span<const double>, std::span<const double> cot,
           std::span<double> grad) const override {
    for (std::size_t o = 0; o < out_; ++o) grad[o] += cot[o];
  }

 private:
  std::size_t out_;
};

/// Network on inputs rescaled to [0, 1] by (x - offset) / scale.
class MlpMap final : public AgentMap {
 public:
  MlpMap(Mlp net, Vec offset, Vec scale)
      : net_(std::move(net)), offset_(std::move(offset)), scale_(std::move(scale)) {}
  std::size_t param_count() const override { return net_.param_count(); }
  std::size_t output_dim() const override { return net_.output_dim(); }
  Vec forward(std::span<const double> input, std::span<const double> wk) const override {
    return net_.forward(normalize(input), wk);
  }
  void vjp(std::span<const double> input, std::span<const double> wk, std::span<const double> cot,
           std::span<double> grad) const override {
    net_.vjp(normalize(input), wk, cot, grad);
  }
  const Mlp& net() const { return net_; }

 private:
  Vec normalize(std::span<const double> input) const {
    Vec z(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) z[i] = (input[i] - offset_[i]) / scale_[i];
    return z;
  }
  Mlp net_;
  Vec offset_;
  Vec scale_;
};

class PolicyFamily {
 public:
  PolicyFamily(PolicyKind kind, std::vector<std::shared_ptr<const AgentMap>> maps,
               std::vector<std::vector<std::size_t>> inputs, Box param_box, Vec exploration_std,
               std::function<Vec(Rng&)> initializer)
      : kind_(kind),
        maps_(std::move(maps)),
        inputs_(std::move(inputs)),
        param_box_(std::move(param_box)),
        exploration_std_(std::move(exploration_std)),
        initializer_(std::move(initializer)) {
    if (maps_.size() != inputs_.size() || maps_.empty()) {
      throw ConfigError("PolicyFamily: need one map and one input set per agent");
    }
    std::size_t off = 0;
    for (const auto& m : maps_) {
      offsets_.push_back(off);
      param_dims_.push_back(m->param_count());
      off += m->param_count();
      action_dim_ += m->output_dim();
    }
    total_params_ = off;
    if (param_box_.size() != total_params_) throw ConfigError("PolicyFamily: param_box has wrong size");
    param_box_.validate("param_box");
    if (exploration_std_.size() != action_dim_) {
      throw ConfigError("PolicyFamily: exploration_std needs one entry per action dimension");
    }
  }

  PolicyKind kind() const { return kind_; }
  std::size_t num_agents() const { return maps_.size(); }
  const std::vector<std::size_t>& param_dims() const { return param_dims_; }
  std::size_t param_dim(std::size_t k) const { return param_dims_.at(k); }
  std::size_t param_offset(std::size_t k) const { return offsets_.at(k); }
  std::size_t total_params() const { return total_params_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t agent_action_dim(std::size_t k) const { return maps_.at(k)->output_dim(); }
  const std::vector<std::size_t>& inputs(std::size_t k) const { return inputs_.at(k); }
  const AgentMap& map(std::size_t k) const { return *maps_.at(k); }
  const Box& param_box() const { return param_box_; }
  const Vec& exploration_std() const { return exploration_std_; }

  PolicyFamily with_exploration_std(Vec stddev) const {
    PolicyFamily copy = *this;
    if (stddev.size() != action_dim_) throw ConfigError("exploration_std has wrong size");
    copy.exploration_std_ = std::move(stddev);
    return copy;
  }

  std::span<const double> block(std::span<const double> w, std::size_t k) const {
    return w.subspan(offsets_.at(k), param_dims_.at(k));
  }
  std::span<double> block(std::span<double> w, std::size_t k) const {
    return w.subspan(offsets_.at(k), param_dims_.at(k));
  }

  Vec agent_input(std::size_t k, std::span<const double> x) const {
    const auto& idx = inputs_.at(k);
    Vec in(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) in[i] = x[idx[i]];
    return in;
  }

  /// a_k = pi_k(x, w_k)
  Vec agent_forward(std::size_t k, std::span<const double> x, std::span<const double> wk) const {
    if (wk.size() != param_dims_.at(k)) throw ConfigError("agent_forward: parameter block has wrong length");
    return maps_[k]->forward(agent_input(k, x), wk);
  }

  /// Joint action mean: agent_forward concatenated in agent order.
  Vec forward(std::span<const double> x, std::span<const double> w) const {
    if (w.size() != total_params_) throw ConfigError("forward: parameter vector has wrong length");
    Vec a;
    a.reserve(action_dim_);
    for (std::size_t k = 0; k < maps_.size(); ++k) {
      Vec ak = agent_forward(k, x, block(w, k));
      a.insert(a.end(), ak.begin(), ak.end());
    }
    return a;
  }

  void agent_vjp(std::size_t k, std::span<const double> x, std::span<const double> wk,
                 std::span<const double> cot, std::span<double> grad_k) const {
    maps_.at(k)->vjp(agent_input(k, x), wk, cot, grad_k);
  }

  Vec initial_params(std::uint64_t seed) const {
    Rng rng(seed);
    Vec w = initializer_(rng);
    if (w.size() != total_params_) throw ConfigError("policy initializer returned wrong length");
    return w;
  }

  /// Random parameter vector for check points: uniform on bounded
  /// components, the initializer's distribution elsewhere.
  Vec sample_params(Rng& rng) const {
    Vec w = initializer_(rng);
    for (std::size_t i = 0; i < total_params_; ++i) {
      if (param_box_.bounded(i)) w[i] = uniform(rng, param_box_.lower[i], param_box_.upper[i]);
    }
    return w;
  }

  void check_compatible(const GameSpec& game) const {
    if (num_agents() != game.num_agents) throw ConfigError("policy and game disagree on num_agents");
    for (std::size_t k = 0; k < num_agents(); ++k) {
      if (agent_action_dim(k) != game.action_dims[k]) {
        throw ConfigError("policy and game disagree on action dimension of agent " + std::to_string(k));
      }
      for (std::size_t m : inputs_[k]) {
        if (m >= game.state_dim) throw ConfigError("policy input index out of range");
      }
    }
  }

 private:
  PolicyKind kind_;
  std::vector<std::shared_ptr<const AgentMap>> maps_;
  std::vector<std::vector<std::size_t>> inputs_;
  Box param_box_;
  Vec exploration_std_;
  std::function<Vec(Rng&)> initializer_;
  std::vector<std::size_t> param_dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_params_ = 0;
  std::size_t action_dim_ = 0;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> policy_inputs(const GameSpec& game) {
  std::vector<std::vector<std::size_t>> inputs;
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    if (game.decomposition) {
      inputs.push_back(game.decomposition->policy_state[k]);
    } else {
      std::vector<std::size_t> all(game.state_dim);
      std::iota(all.begin(), all.end(), std::size_t{0});
      inputs.push_back(all);
    }
  }
  return inputs;
}

/// 0.05 x the width of the action box at the initial state.
inline Vec default_exploration(const GameSpec& game) {
  Rng rng(0);
  const Box box = game.action_bounds(game.start_state(rng));
  Vec s(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    s[i] = box.bounded(i) && box.upper[i] > box.lower[i] ? 0.05 * (box.upper[i] - box.lower[i]) : 0.05;
  }
  return s;
}

}  // namespace detail

/// a_k = w_k . x^pi_k with every parameter in [lo, hi]; initialised to `init`.
inline PolicyFamily make_linear_policy(const GameSpec& game, double lo, double hi, double init) {
  auto inputs = detail::policy_inputs(game);
  std::vector<std::shared_ptr<const AgentMap>> maps;
  std::size_t total = 0;
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    maps.push_back(std::make_shared<LinearMap>(inputs[k].size(), game.action_dims[k]));
    total += inputs[k].size() * game.action_dims[k];
  }
  auto policy = PolicyFamily(PolicyKind::linear, std::move(maps), std::move(inputs), Box::uniform(total, lo, hi),
                             detail::default_exploration(game), [total, init](Rng&) { return Vec(total, init); });
  policy.check_compatible(game);
  return policy;
}

/// a_k = w_k, parameters constrained to the action box at the initial state.
inline PolicyFamily make_constant_policy(const GameSpec& game) {
  std::vector<std::shared_ptr<const AgentMap>> maps;
  std::vector<std::vector<std::size_t>> inputs(game.num_agents);
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    maps.push_back(std::make_shared<ConstantMap>(game.action_dims[k]));
  }
  Rng rng(0);
  Box box = game.action_bounds(game.start_state(rng));
  Vec mid(box.size());
  for (std::size_t i = 0; i < mid.size(); ++i) {
    mid[i] = box.bounded(i) ? 0.5 * (box.lower[i] + box.upper[i]) : 0.0;
  }
  auto policy = PolicyFamily(PolicyKind::tabular_constant, std::move(maps), std::move(inputs), box,
                             detail::default_exploration(game), [mid](Rng&) { return mid; });
  policy.check_compatible(game);
  return policy;
}

struct MlpOptions {
  std::vector<std::size_t> hidden{32, 32, 32};
  double output_scale = 0.01;
  /// Output bias per action dimension (joint); empty means zero.
  Vec output_bias;
};

/// Per-agent feedforward network on the agent's own state inputs, rescaled
/// by the state box. Parameters are unbounded.
inline PolicyFamily make_mlp_policy(const GameSpec& game, const MlpOptions& options = {}) {
  auto inputs = detail::policy_inputs(game);
  std::vector<std::shared_ptr<const AgentMap>> maps;
  std::vector<std::shared_ptr<const MlpMap>> nets;
  std::size_t total = 0;
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    std::vector<std::size_t> sizes{inputs[k].size()};
    sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
    sizes.push_back(game.action_dims[k]);
    Vec offset, scale;
    for (std::size_t m : inputs[k]) {
      const bool finite = game.state_box.bounded(m) && game.state_box.upper[m] > game.state_box.lower[m];
      offset.push_back(finite ? game.state_box.lower[m] : 0.0);
      scale.push_back(finite ? game.state_box.upper[m] - game.state_box.lower[m] : 1.0);
    }
    auto net = std::make_shared<MlpMap>(Mlp(sizes), offset, scale);
    total += net->param_count();
    nets.push_back(net);
    maps.push_back(net);
  }
  Vec bias = options.output_bias;
  if (!bias.empty() && bias.size() != game.total_action_dim()) {
    throw ConfigError("MlpOptions.output_bias needs one entry per action dimension");
  }
  auto initializer = [nets, bias, scale = options.output_scale, dims = game.action_dims](Rng& rng) {
    Vec w;
    std::size_t a_off = 0;
    for (std::size_t k = 0; k < nets.size(); ++k) {
      Vec b = bias.empty() ? Vec(dims[k], 0.0)
                           : Vec(bias.begin() + static_cast<long>(a_off),
                                 bias.begin() + static_cast<long>(a_off + dims[k]));
      Vec wk = nets[k]->net().initial_params(rng, scale, b);
      w.insert(w.end(), wk.begin(), wk.end());
      a_off += dims[k];
    }
    return w;
  };
  auto policy = PolicyFamily(PolicyKind::mlp, std::move(maps), std::move(inputs), Box::unbounded(total),
                             detail::default_exploration(game), std::move(initializer));
  policy.check_compatible(game);
  return policy;
}

/// Jacobian of every action-mean component w.r.t. the full parameter vector,
/// [action_dim][total_params], by reverse mode.
inline std::vector<Vec> backprop_grad(const PolicyFamily& policy, std::span<const double> x,
                                      std::span<const double> w) {
  std::vector<Vec> jac(policy.action_dim(), Vec(policy.total_params(), 0.0));
  std::size_t row = 0;
  for (std::size_t k = 0; k < policy.num_agents(); ++k) {
    const std::size_t ak = policy.agent_action_dim(k);
    Vec cot(ak, 0.0);
    for (std::size_t o = 0; o < ak; ++o, ++row) {
      std::fill(cot.begin(), cot.end(), 0.0);
      cot[o] = 1.0;
      policy.agent_vjp(k, x, policy.block(w, k), cot, policy.block(std::span<double>(jac[row]), k));
    }
  }
  return jac;
}

}  // namespace mpg
