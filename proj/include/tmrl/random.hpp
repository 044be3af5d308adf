#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace tmrl {

// Engine output is fully specified by the standard; the helpers below avoid
// std:: distributions so draws are identical across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Number of Bernoulli(p) trials up to and including the first success (>= 1).
inline std::int64_t geometric_trials(Rng& rng, double p) {
  if (p >= 1.0) return 1;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  return 1 + static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

inline std::string serialize(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  return rng;
}

}  // namespace tmrl
