#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace jointlink {

// SplitMix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = mix64(base);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632BE59BD9B4E019ULL));
  return s;
}

// Chain-local random source. Not thread-safe; one instance per chain.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  engine_type& engine() noexcept { return engine_; }

  // Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  // Uniform on (0, 1); never returns 0.
  double uniform_open();
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  // Shape/rate parameterisation: density proportional to x^(shape-1) exp(-rate x).
  double gamma(double shape, double rate);
  // Inverse-gamma with density proportional to x^(-shape-1) exp(-scale / x).
  double inverse_gamma(double shape, double scale) { return scale / gamma(shape, 1.0); }
  double beta(double a, double b);
  // Beta(a, b) restricted to [lower, upper].
  double truncated_beta(double a, double b, double lower, double upper);
  // Inverse-Gaussian (Wald) with the given mean and shape; Michael-Schucany-Haas.
  double inverse_gaussian(double mean, double shape);

  // Index drawn proportionally to exp(log_weights[k]); at least one entry must be finite.
  std::size_t categorical_log(std::span<const double> log_weights);

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace jointlink
