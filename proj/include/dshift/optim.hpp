#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dshift {

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : m(size, 0.0f), v(size, 0.0f) {}
};

// Bias-corrected Adam update of `params` in place; increments state.t.
void adam_step(std::span<float> params, std::span<const float> grads,
               AdamState& state, double lr);

// Plain SGD: params -= lr * grads.
void sgd_step(std::span<float> params, std::span<const float> grads, double lr);

// Heavy-ball SGD: v = momentum * v + grads; params -= lr * v. With momentum 0
// this is identical to sgd_step.
void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
              double lr, double momentum);

enum class ScheduleKind { step_decay, cyclical_exp };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::step_decay;
  double base_lr = 0.01;
  double decay_factor = 0.5;
  std::size_t decay_every = 30;
  double lr_min = 1e-5;
  double lr_max = 1e-3;
  std::size_t ramp_steps = 20;

  void validate() const;
  // Learning rate at `step` (epoch for step decay, iteration for the cycle).
  double rate(std::size_t step) const;

  static ScheduleSpec step_decay(double base_lr = 0.01, double factor = 0.5,
                                 std::size_t every = 30);
  static ScheduleSpec cyclical(double lr_min = 1e-5, double lr_max = 1e-3,
                               std::size_t ramp_steps = 20);
};

// base_lr * decay_factor^floor(epoch / decay_every)
double step_decay_lr(const ScheduleSpec& spec, std::size_t epoch);

// Sawtooth exponential ramp: lr_min * (lr_max/lr_min)^(i/ramp_steps) with
// i = iteration mod ramp_steps.
double cyclical_exp_lr(const ScheduleSpec& spec, std::size_t iteration);

}  // namespace dshift
