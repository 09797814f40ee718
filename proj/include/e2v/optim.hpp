#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "e2v/nn.hpp"

namespace e2v {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const {
    if (!(lr > 0.0) || !(eps > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
        !(weight_decay >= 0.0)) {
      throw Error(Errc::ConfigError, "AdamW needs lr > 0, eps > 0, betas in [0, 1) and decay >= 0");
    }
  }

  static AdamWConfig full() { return AdamWConfig{1e-5}; }
  static AdamWConfig toy() { return AdamWConfig{1e-3}; }

  bool operator==(const AdamWConfig&) const = default;
};

/// First/second moments per parameter, in registry order, plus the step count
/// used for bias correction.
template <typename Scalar>
struct OptState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<std::string> names;
  std::vector<Vector> m;
  std::vector<Vector> v;
  std::int64_t step = 0;

  static OptState init(const nn::ParamList<Scalar>& params) {
    OptState s;
    for (const auto* p : params) {
      s.names.push_back(p->name);
      s.m.push_back(Vector::Zero(p->value.size()));
      s.v.push_back(Vector::Zero(p->value.size()));
    }
    return s;
  }

  /// StateShapeMismatch unless names and sizes track the registry exactly.
  void check(const nn::ParamList<Scalar>& params) const {
    if (params.size() != names.size() || m.size() != names.size() || v.size() != names.size()) {
      throw Error(Errc::StateShapeMismatch, "optimizer state holds " + std::to_string(names.size()) +
                                                " entries for " + std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto n = params[i]->value.size();
      if (names[i] != params[i]->name || m[i].size() != n || v[i].size() != n) {
        throw Error(Errc::StateShapeMismatch, "optimizer state entry " + names[i] + " does not match parameter " +
                                                  params[i]->name);
      }
    }
  }

  bool operator==(const OptState&) const = default;
};

/// One decoupled-decay Adam update, then gradients are zeroed:
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
/// Parameters flagged decay = false (biases, norm gains/shifts) skip the last term.
template <typename Scalar>
void adamw_step(const nn::ParamList<Scalar>& params, OptState<Scalar>& state, const AdamWConfig& cfg) {
  state.check(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const auto b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const auto inv_c1 = static_cast<Scalar>(1.0 / c1), inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto lr = static_cast<Scalar>(cfg.lr), eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto theta = p.value.data().array();
    const auto g = p.grad.data().array();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    const Scalar decay = p.decay ? static_cast<Scalar>(cfg.lr * cfg.weight_decay) : Scalar(0);
    theta = theta - lr * (m * inv_c1) / ((v * inv_c2).sqrt() + eps) - decay * theta;
    p.zero_grad();
  }
}

}  // namespace e2v
