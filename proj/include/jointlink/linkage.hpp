#pragma once

// Bipartite linkage state, its marginal prior, and Gibbs updates for z and (theta_m, theta_u).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "jointlink/comparators.hpp"
#include "jointlink/random.hpp"
#include "jointlink/trace.hpp"

namespace jointlink {

// z_j in {0..n_a-1} or kNoLink, with no File A record used twice.
class LinkageState {
 public:
  LinkageState() = default;
  LinkageState(std::size_t n_a, std::size_t n_b);
  // Throws DomainError if z breaks the one-to-one rule or indexes out of range.
  static LinkageState from_assignments(std::size_t n_a, std::span<const std::int32_t> z);

  std::size_t n_a() const noexcept { return owner_.size(); }
  std::size_t n_b() const noexcept { return z_.size(); }
  std::size_t n_links() const noexcept { return n_links_; }

  std::int32_t z(std::size_t j) const noexcept { return z_[j]; }
  // File B record linked to File A record i, or kNoLink.
  std::int32_t owner(std::size_t i) const noexcept { return owner_[i]; }
  std::span<const std::int32_t> assignments() const noexcept { return z_; }

  // Requires that i is free.
  void link(std::size_t j, std::size_t i);
  void unlink(std::size_t j);

  // Full consistency check of z against the inverse index.
  bool satisfies_invariants() const;

  bool operator==(const LinkageState&) const = default;

 private:
  std::vector<std::int32_t> z_;
  std::vector<std::int32_t> owner_;
  std::size_t n_links_ = 0;
};

struct MixtureParams {
  std::vector<double> theta_m;
  std::vector<double> theta_u;
};

// Agreement counts split by the current link set.
struct MixtureCounts {
  std::vector<std::uint64_t> agree_linked;
  std::vector<std::uint64_t> agree_unlinked;
  std::uint64_t linked_pairs = 0;
  std::uint64_t unlinked_pairs = 0;
};

// log P(z | alpha_pi, beta_pi) with pi integrated out.
double log_prior_z(const LinkageState& state, double alpha_pi, double beta_pi);

MixtureCounts mixture_counts(const ComparisonStore& comparisons, const LinkageState& state);

// Independent conjugate Beta draws for every theta_{f,m}, theta_{f,u}.
MixtureParams sample_mixture_params(const ComparisonStore& comparisons, const LinkageState& state, double a, double b,
                                    Rng& rng);

// Conjugate draws under the identifiability restriction theta_{f,m} >= theta_{f,u}:
// theta_m | theta_u then theta_u | theta_m, each from its truncated Beta conditional.
MixtureParams sample_mixture_params_ordered(const ComparisonStore& comparisons, const LinkageState& state, double a,
                                            double b, const MixtureParams& current, Rng& rng);

// log [f_1(y_i | x_j, w_j) / f_2(y_i)] for every candidate pair.
class PairEvidence {
 public:
  virtual ~PairEvidence() = default;
  virtual double log_ratio(std::size_t i, std::size_t j) const = 0;
  // Upper bound of log_ratio over all pairs; +inf when none is known.
  virtual double upper_bound() const = 0;
  // True when log_ratio is identically zero.
  virtual bool is_null() const { return false; }
};

class NoEvidence final : public PairEvidence {
 public:
  double log_ratio(std::size_t, std::size_t) const override { return 0.0; }
  double upper_bound() const override { return 0.0; }
  bool is_null() const override { return true; }
};

// Arbitrary callable evidence; used for small instances and tests.
class FunctionEvidence final : public PairEvidence {
 public:
  explicit FunctionEvidence(std::function<double(std::size_t, std::size_t)> fn,
                            double bound = std::numeric_limits<double>::infinity())
      : fn_(std::move(fn)), bound_(bound) {}
  double log_ratio(std::size_t i, std::size_t j) const override { return fn_(i, j); }
  double upper_bound() const override { return bound_; }

 private:
  std::function<double(std::size_t, std::size_t)> fn_;
  double bound_;
};

// log Ratio_2Stage for a comparison pattern.
double log_pattern_ratio(const MixtureParams& mix, ComparisonStore::Pattern pattern);

// One systematic-scan sweep j = 0..n_b-1 drawing each z_j from its full conditional.
void gibbs_update_z(LinkageState& state, const ComparisonStore& comparisons, const MixtureParams& mix,
                    const PairEvidence& evidence, double alpha_pi, double beta_pi, Rng& rng);

struct ModalLink {
  std::int32_t i = kNoLink;
  double probability = 0.0;
  bool operator==(const ModalLink&) const = default;
};

// Most frequent post burn-in state of each z_j; ties go to the smallest index, no-link last.
std::vector<ModalLink> posterior_mode_links(const McmcTrace& trace);

// Diagnostics export: j, modal i (NA for no link), posterior probability.
void write_modal_links_csv(std::ostream& out, std::span<const ModalLink> links);

}  // namespace jointlink
