#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "jointlink/records_io.hpp"

namespace jointlink {

inline constexpr std::int32_t kNoLink = -1;

// Scalar summary of one MCMC iteration.
struct IterationRecord {
  int iteration = 0;
  int n_links = 0;
  double atel = std::numeric_limits<double>::quiet_NaN();  // NaN when nothing is linked
  double theta_m_mean = 0.0;
  double theta_u_mean = 0.0;
  double sigma2 = 0.0;
  double mu1 = 0.0;
  double sigma1_sq = 0.0;
  // Leading outcome coefficients: (beta0, beta1, alpha) or (beta0, beta1, gamma1).
  std::array<double, 3> coef{};
  bool outcome_skipped = false;
  bool operator==(const IterationRecord&) const = default;
};

struct McmcTrace {
  Mode mode = Mode::joint;
  OutcomeModel outcome_model = OutcomeModel::parametric;
  std::uint64_t seed = 0;
  int iterations = 0;
  int burn_in = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  int skipped_iterations = 0;
  int nonconverged_fits = 0;  // propensity fits that hit the iteration cap
  std::vector<IterationRecord> records;
  // Post burn-in z snapshots, row-major L x n_b.
  std::vector<std::int32_t> z_post;

  std::size_t post_burn_in_length() const noexcept { return static_cast<std::size_t>(iterations - burn_in); }
  std::span<const std::int32_t> z_snapshot(std::size_t l) const noexcept {
    return {z_post.data() + l * n_b, n_b};
  }
  std::size_t stored_snapshots() const noexcept { return n_b ? z_post.size() / n_b : 0; }
  // Finite ATEL draws from the post burn-in segment.
  std::vector<double> post_burn_in_atel() const;
};

// One line per iteration with '#' metadata lines first; numbers at full precision.
void write_trace_csv(std::ostream& out, const McmcTrace& trace);
// Reads what write_trace_csv wrote (z snapshots are not part of the file).
McmcTrace read_trace_csv(std::istream& in);
// iteration, j, z_j for every k-th stored post burn-in snapshot; z_j is NA for no link.
void write_z_snapshots_csv(std::ostream& out, const McmcTrace& trace, int every);

}  // namespace jointlink
