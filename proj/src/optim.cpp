#include "dshift/optim.hpp"

#include <cmath>

#include "dshift/error.hpp"

namespace dshift {

void adam_step(std::span<float> params, std::span<const float> grads,
               AdamState& state, double lr) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step", "gradient size", params.size(), grads.size());
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step", "first-moment size", params.size(), state.m.size());
  }
  if (state.v.size() != params.size()) {
    throw ShapeError("adam_step", "second-moment size", params.size(), state.v.size());
  }
  if (!(lr > 0.0)) throw usage_error("adam_step: learning rate must be positive");

  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const float fb1 = static_cast<float>(b1);
  const float fb2 = static_cast<float>(b2);
  const float inv_c1 = static_cast<float>(1.0 / correction1);
  const float inv_c2 = static_cast<float>(1.0 / correction2);
  const float flr = static_cast<float>(lr);
  const float eps = static_cast<float>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    float& m = state.m[i];
    float& v = state.v[i];
    m = fb1 * m + (1.0f - fb1) * g;
    v = fb2 * v + (1.0f - fb2) * g * g;
    const float m_hat = m * inv_c1;
    const float v_hat = v * inv_c2;
    params[i] -= flr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

void sgd_step(std::span<float> params, std::span<const float> grads, double lr) {
  if (grads.size() != params.size()) {
    throw ShapeError("sgd_step", "gradient size", params.size(), grads.size());
  }
  if (!(lr > 0.0)) throw usage_error("sgd_step: learning rate must be positive");
  const float flr = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= flr * grads[i];
}

void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
              double lr, double momentum) {
  if (velocity.size() != params.size()) {
    throw ShapeError("sgd_step", "velocity size", params.size(), velocity.size());
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw usage_error("sgd_step: momentum must be in [0, 1)");
  }
  if (momentum == 0.0) {
    sgd_step(params, grads, lr);
    return;
  }
  if (grads.size() != params.size()) {
    throw ShapeError("sgd_step", "gradient size", params.size(), grads.size());
  }
  if (!(lr > 0.0)) throw usage_error("sgd_step: learning rate must be positive");
  const float flr = static_cast<float>(lr);
  const float mu = static_cast<float>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] + grads[i];
    params[i] -= flr * velocity[i];
  }
}

void ScheduleSpec::validate() const {
  if (kind == ScheduleKind::step_decay) {
    if (!(base_lr > 0.0)) throw usage_error("schedule: base_lr must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
      throw usage_error("schedule: decay_factor must be in (0, 1]");
    }
    if (decay_every < 1) throw usage_error("schedule: decay_every must be >= 1");
  } else {
    if (!(lr_min > 0.0) || !(lr_max > 0.0)) {
      throw usage_error("schedule: lr_min and lr_max must be positive");
    }
    if (ramp_steps < 1) throw usage_error("schedule: ramp_steps must be >= 1");
  }
}

double ScheduleSpec::rate(std::size_t step) const {
  return kind == ScheduleKind::step_decay ? step_decay_lr(*this, step)
                                          : cyclical_exp_lr(*this, step);
}

ScheduleSpec ScheduleSpec::step_decay(double base_lr, double factor, std::size_t every) {
  ScheduleSpec s;
  s.kind = ScheduleKind::step_decay;
  s.base_lr = base_lr;
  s.decay_factor = factor;
  s.decay_every = every;
  return s;
}

ScheduleSpec ScheduleSpec::cyclical(double lr_min, double lr_max, std::size_t ramp_steps) {
  ScheduleSpec s;
  s.kind = ScheduleKind::cyclical_exp;
  s.lr_min = lr_min;
  s.lr_max = lr_max;
  s.ramp_steps = ramp_steps;
  return s;
}

double step_decay_lr(const ScheduleSpec& spec, std::size_t epoch) {
  const std::size_t drops = epoch / spec.decay_every;
  return spec.base_lr * std::pow(spec.decay_factor, static_cast<double>(drops));
}

double cyclical_exp_lr(const ScheduleSpec& spec, std::size_t iteration) {
  const std::size_t i = iteration % spec.ramp_steps;
  if (i == 0) return spec.lr_min;
  const double fraction = static_cast<double>(i) / static_cast<double>(spec.ramp_steps);
  return spec.lr_min * std::pow(spec.lr_max / spec.lr_min, fraction);
}

}  // namespace dshift
