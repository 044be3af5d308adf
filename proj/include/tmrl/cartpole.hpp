#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "tmrl/error.hpp"

namespace tmrl {

inline constexpr double kFailureAngleDeg = 12.0;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct PhysicsParams {
  double track_length = 4.4;     // m
  double pole_length = 1.0;      // m, full length
  double pole_mass = 0.1;        // kg
  double cart_mass = 1.0;        // kg
  double dt = 0.02;              // s
  double force_magnitude = 10.0; // N
  double gravity = 9.8;          // m/s^2

  bool valid() const {
    return track_length > 0 && pole_length > 0 && pole_mass > 0 && cart_mass > 0 && dt > 0 &&
           force_magnitude > 0 && gravity > 0;
  }
  double half_track() const { return track_length / 2.0; }

  friend bool operator==(const PhysicsParams&, const PhysicsParams&) = default;
};

// theta is measured from upright in radians, positive = clockwise.
struct ContinuousState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
  std::int64_t time_index = 0;

  friend bool operator==(const ContinuousState&, const ContinuousState&) = default;
};

enum class Action : std::uint8_t { PushLeft = 0, PushRight = 1 };

inline constexpr std::size_t kNumActions = 2;

constexpr std::size_t to_index(Action a) { return static_cast<std::size_t>(a); }
constexpr Action action_from_index(std::size_t i) { return i == 0 ? Action::PushLeft : Action::PushRight; }
constexpr const char* to_string(Action a) { return a == Action::PushLeft ? "left" : "right"; }

struct StepOutcome {
  ContinuousState next_state;
  double reward = 0.0;
  bool failed = false;
};

inline ContinuousState initial_state() { return ContinuousState{}; }

inline bool is_failure(const ContinuousState& s, const PhysicsParams& params = {}) {
  return std::abs(s.theta) > deg_to_rad(kFailureAngleDeg) || std::abs(s.x) > params.half_track();
}

inline ContinuousState mirror(const ContinuousState& s) {
  return {-s.x, -s.x_dot, -s.theta, -s.theta_dot, s.time_index};
}

namespace detail {

// Frictionless cart-pole, explicit Euler with pre-step velocities. The
// expression is sign-symmetric so mirrored inputs give exactly mirrored
// outputs.
inline ContinuousState integrate(const ContinuousState& s, double force, const PhysicsParams& p) {
  const double total_mass = p.cart_mass + p.pole_mass;
  const double half_length = p.pole_length / 2.0;
  const double pole_mass_length = p.pole_mass * half_length;
  const double sin_theta = std::sin(s.theta);
  const double cos_theta = std::cos(s.theta);

  const double temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin_theta) / total_mass;
  const double theta_acc = (p.gravity * sin_theta - cos_theta * temp) /
                           (half_length * (4.0 / 3.0 - p.pole_mass * cos_theta * cos_theta / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass;

  ContinuousState next;
  next.x = s.x + p.dt * s.x_dot;
  next.x_dot = s.x_dot + p.dt * x_acc;
  next.theta = s.theta + p.dt * s.theta_dot;
  next.theta_dot = s.theta_dot + p.dt * theta_acc;
  next.time_index = s.time_index + 1;
  return next;
}

}  // namespace detail

inline StepOutcome step(const ContinuousState& state, Action action, const PhysicsParams& params = {}) {
  if (is_failure(state, params)) throw Error("cartpole::step: input state is already failing");
  const double force = action == Action::PushRight ? params.force_magnitude : -params.force_magnitude;
  StepOutcome out;
  out.next_state = detail::integrate(state, force, params);
  out.failed = is_failure(out.next_state, params);
  out.reward = out.failed ? -1.0 : 0.0;
  return out;
}

// Test hook: integrate with an arbitrary force (including zero), no failure check.
inline ContinuousState step_with_force(const ContinuousState& state, double force, const PhysicsParams& params = {}) {
  return detail::integrate(state, force, params);
}

// Kinetic plus potential energy of cart and uniform rod, pivot height as zero.
inline double mechanical_energy(const ContinuousState& s, const PhysicsParams& p = {}) {
  const double l = p.pole_length / 2.0;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double kinetic = 0.5 * total_mass * s.x_dot * s.x_dot +
                         p.pole_mass * l * std::cos(s.theta) * s.x_dot * s.theta_dot +
                         0.5 * (4.0 / 3.0) * p.pole_mass * l * l * s.theta_dot * s.theta_dot;
  const double potential = p.pole_mass * p.gravity * l * std::cos(s.theta);
  return kinetic + potential;
}

}  // namespace tmrl
