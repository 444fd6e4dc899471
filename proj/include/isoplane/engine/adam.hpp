#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "isoplane/engine/tensor.hpp"
#include "isoplane/error.hpp"

namespace isoplane::engine {

template <class T>
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One bias-corrected Adam update of every parameter from its gradient.
template <class T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel())
      throw ShapeError("adam_step: gradient/moment shape mismatch for parameter " + std::to_string(i) + " of shape " +
                       to_string(params[i].shape()));
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      w[j] = static_cast<T>(w[j] - state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

// Adam over a fixed parameter list, reading the tensors' accumulated grads.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<Tensor<T>> params, double lr = 2e-4, double beta1 = 0.5, double beta2 = 0.999)
      : params_(std::move(params)) {
    state_.lr = lr;
    state_.beta1 = beta1;
    state_.beta2 = beta2;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    std::vector<std::span<const T>> grads;
    for (auto& p : params_) {
      if (!p.has_grad()) p.zero_grad();
      grads.emplace_back(p.grad());
    }
    adam_step<T>(params_, grads, state_);
  }

  void set_lr(double lr) { state_.lr = lr; }
  AdamState<T>& state() { return state_; }
  const AdamState<T>& state() const { return state_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamState<T> state_;
};

// lr = base * gamma^floor(epoch / step_epochs).
struct StepScheduler {
  double base_lr = 2e-4;
  long step_epochs = 40;
  double gamma = 0.5;

  double lr(long epoch) const {
    if (epoch < 0) throw InvalidArgument("step_scheduler: negative epoch " + std::to_string(epoch));
    if (step_epochs <= 0 || !(gamma > 0)) throw InvalidArgument("step_scheduler: step and gamma must be positive");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_epochs));
  }
};

}  // namespace isoplane::engine
