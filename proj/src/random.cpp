#include "jointlink/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

namespace jointlink {

double Rng::uniform_open() {
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return u;
}

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  double g = dist(engine_);
  // Tiny shapes can underflow to 0; keep strictly positive draws.
  if (g <= 0.0) g = std::numeric_limits<double>::min();
  return g;
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  double v = x / (x + y);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return std::clamp(v, eps, 1.0 - eps);
}

double Rng::truncated_beta(double a, double b, double lower, double upper) {
  lower = std::max(lower, 0.0);
  upper = std::min(upper, 1.0);
  if (lower >= upper) return lower;
  // Plain rejection is exact and cheap whenever the window holds most of the mass.
  for (int attempt = 0; attempt < 32; ++attempt) {
    const double v = beta(a, b);
    if (v >= lower && v <= upper) return v;
  }
  // Inverse-CDF on the window.
  const double f_lo = lower > 0.0 ? boost::math::ibeta(a, b, lower) : 0.0;
  const double f_hi = upper < 1.0 ? boost::math::ibeta(a, b, upper) : 1.0;
  if (!(f_hi > f_lo)) {
    // Window lies in a numerically flat tail; its mass is concentrated at the nearer edge.
    const double mode = (a > 1.0 && b > 1.0) ? (a - 1.0) / (a + b - 2.0) : (a < b ? 0.0 : 1.0);
    return mode < lower ? lower : upper;
  }
  const double u = f_lo + uniform_open() * (f_hi - f_lo);
  const double v = boost::math::ibeta_inv(a, b, std::min(u, f_hi));
  return std::clamp(v, lower, upper);
}

double Rng::inverse_gaussian(double mean, double shape) {
  const double nu = normal();
  const double y = nu * nu;
  double x = mean;
  if (y > 0.0) {
    const double my = mean * y;
    const double s = std::sqrt(4.0 * mean * shape * y + my * my);
    // Cancellation-free form of mean + mean^2 y/(2 shape) - mean/(2 shape) s.
    x = 4.0 * mean * mean * shape * y / ((s + my) * (s + my));
  }
  if (uniform() * (mean + x) <= mean) return x;
  return mean * mean / x;
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> cum(log_weights.size());
  double total = 0.0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    total += std::exp(log_weights[k] - top);
    cum[k] = total;
  }
  const double u = uniform() * total;
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

}  // namespace jointlink
