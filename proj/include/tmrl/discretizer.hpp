#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "tmrl/cartpole.hpp"

namespace tmrl {

inline constexpr std::size_t kXBins = 3;
inline constexpr std::size_t kThetaBins = 6;
inline constexpr std::size_t kXDotBins = 3;
inline constexpr std::size_t kThetaDotBins = 3;
inline constexpr std::size_t kNumStates = kXBins * kThetaBins * kXDotBins * kThetaDotBins;  // 162

// Index into the 3 x 6 x 3 x 3 box partition.
class DiscreteStateId {
 public:
  constexpr DiscreteStateId() = default;
  constexpr explicit DiscreteStateId(std::size_t index) : index_(index) {
    if (index >= kNumStates) throw Error("DiscreteStateId out of range: " + std::to_string(index));
  }
  constexpr std::size_t value() const { return index_; }
  friend constexpr auto operator<=>(DiscreteStateId, DiscreteStateId) = default;

 private:
  std::size_t index_ = 0;
};

// Successor of a transition: a box, or nullopt for the absorbing failure outcome.
using NextState = std::optional<DiscreteStateId>;
inline constexpr NextState kFailure = std::nullopt;

struct BinTuple {
  std::size_t x = 0;
  std::size_t theta = 0;
  std::size_t x_dot = 0;
  std::size_t theta_dot = 0;

  friend bool operator==(const BinTuple&, const BinTuple&) = default;
};

constexpr DiscreteStateId encode(const BinTuple& b) {
  if (b.x >= kXBins || b.theta >= kThetaBins || b.x_dot >= kXDotBins || b.theta_dot >= kThetaDotBins)
    throw Error("bin tuple out of range");
  return DiscreteStateId(b.x * 54 + b.theta * 9 + b.x_dot * 3 + b.theta_dot);
}

constexpr BinTuple decode(DiscreteStateId id) {
  const std::size_t i = id.value();
  return {i / 54, (i / 9) % 6, (i / 3) % 3, i % 3};
}

// Interior edges only; the outer limits come from the failure condition.
// Angles are stored in degrees, everything else in SI units.
struct BinBoundaries {
  std::array<double, kXBins - 1> x_edges{-0.8, 0.8};
  std::array<double, kThetaBins - 1> theta_edges_deg{-6.0, -1.0, 0.0, 1.0, 6.0};
  std::array<double, kXDotBins - 1> x_dot_edges{-0.5, 0.5};
  std::array<double, kThetaDotBins - 1> theta_dot_edges_deg{-50.0, 50.0};

  bool valid() const {
    auto increasing = [](const auto& e) { return std::adjacent_find(e.begin(), e.end(), std::greater_equal<>{}) == e.end(); };
    return increasing(x_edges) && increasing(theta_edges_deg) && increasing(x_dot_edges) &&
           increasing(theta_dot_edges_deg);
  }

  friend bool operator==(const BinBoundaries&, const BinBoundaries&) = default;
};

inline BinBoundaries default_bounds() { return BinBoundaries{}; }

namespace detail {

// Half-open bins [e_i, e_{i+1}): the bin is the number of edges <= value.
template <std::size_t N, typename Convert = std::identity>
std::size_t bin_of(double value, const std::array<double, N>& edges, Convert convert = {}) {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [&](double e) { return convert(e) <= value; }));
}

}  // namespace detail

inline BinTuple bin_tuple(const ContinuousState& s, const BinBoundaries& bounds, const PhysicsParams& params = {}) {
  if (is_failure(s, params)) throw Error("discretize: failing states have no box");
  const auto rad = [](double deg) { return deg_to_rad(deg); };
  return {detail::bin_of(s.x, bounds.x_edges), detail::bin_of(s.theta, bounds.theta_edges_deg, rad),
          detail::bin_of(s.x_dot, bounds.x_dot_edges), detail::bin_of(s.theta_dot, bounds.theta_dot_edges_deg, rad)};
}

inline DiscreteStateId discretize(const ContinuousState& s, const BinBoundaries& bounds = {},
                                  const PhysicsParams& params = {}) {
  return encode(bin_tuple(s, bounds, params));
}

}  // namespace tmrl
