#include "jointlink/linkage.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <ostream>

#include "jointlink/errors.hpp"

namespace jointlink {
namespace {

// log Ratio_2Stage by pattern; tabulated when the pattern space is small.
class PatternScorer {
 public:
  explicit PatternScorer(const MixtureParams& mix) {
    const std::size_t F = mix.theta_m.size();
    delta_.resize(F);
    for (std::size_t f = 0; f < F; ++f) {
      const double m = mix.theta_m[f], u = mix.theta_u[f];
      const double agree = std::log(m) - std::log(u);
      const double disagree = std::log1p(-m) - std::log1p(-u);
      base_ += disagree;
      delta_[f] = agree - disagree;
    }
    if (F <= 12) {
      table_.assign(std::size_t{1} << F, 0.0);
      for (std::size_t p = 0; p < table_.size(); ++p) table_[p] = compute(static_cast<ComparisonStore::Pattern>(p));
    }
  }

  double operator()(ComparisonStore::Pattern p) const { return table_.empty() ? compute(p) : table_[p]; }

 private:
  double compute(ComparisonStore::Pattern p) const {
    double s = base_;
    for (std::size_t f = 0; p; ++f, p >>= 1) {
      if (p & 1U) s += delta_[f];
    }
    return s;
  }

  double base_ = 0.0;
  std::vector<double> delta_;
  std::vector<double> table_;
};

constexpr std::uint32_t kFree = static_cast<std::uint32_t>(-1);

}  // namespace

LinkageState::LinkageState(std::size_t n_a, std::size_t n_b) : z_(n_b, kNoLink), owner_(n_a, kNoLink) {}

LinkageState LinkageState::from_assignments(std::size_t n_a, std::span<const std::int32_t> z) {
  LinkageState s(n_a, z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const std::int32_t i = z[j];
    if (i == kNoLink) continue;
    if (i < 0 || static_cast<std::size_t>(i) >= n_a) throw DomainError("link target out of range");
    if (s.owner_[i] != kNoLink) throw DomainError("File A record " + std::to_string(i) + " linked twice");
    s.link(j, static_cast<std::size_t>(i));
  }
  return s;
}

void LinkageState::link(std::size_t j, std::size_t i) {
  assert(owner_[i] == kNoLink);
  if (z_[j] != kNoLink) unlink(j);
  z_[j] = static_cast<std::int32_t>(i);
  owner_[i] = static_cast<std::int32_t>(j);
  ++n_links_;
}

void LinkageState::unlink(std::size_t j) {
  const std::int32_t i = z_[j];
  if (i == kNoLink) return;
  owner_[i] = kNoLink;
  z_[j] = kNoLink;
  --n_links_;
}

bool LinkageState::satisfies_invariants() const {
  std::size_t links = 0;
  for (std::size_t j = 0; j < z_.size(); ++j) {
    const std::int32_t i = z_[j];
    if (i == kNoLink) continue;
    if (i < 0 || static_cast<std::size_t>(i) >= owner_.size()) return false;
    if (owner_[i] != static_cast<std::int32_t>(j)) return false;
    ++links;
  }
  std::size_t owned = 0;
  for (std::size_t i = 0; i < owner_.size(); ++i) {
    const std::int32_t j = owner_[i];
    if (j == kNoLink) continue;
    if (j < 0 || static_cast<std::size_t>(j) >= z_.size() || z_[j] != static_cast<std::int32_t>(i)) return false;
    ++owned;
  }
  return links == n_links_ && owned == n_links_ && n_links_ <= std::min(owner_.size(), z_.size());
}

double log_prior_z(const LinkageState& state, double alpha_pi, double beta_pi) {
  const double n_a = static_cast<double>(state.n_a());
  const double n_b = static_cast<double>(state.n_b());
  const double k = static_cast<double>(state.n_links());
  auto lbeta = [](double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); };
  return std::lgamma(n_a - k + 1.0) - std::lgamma(n_a + 1.0) + lbeta(k + alpha_pi, n_b - k + beta_pi) -
         lbeta(alpha_pi, beta_pi);
}

MixtureCounts mixture_counts(const ComparisonStore& comparisons, const LinkageState& state) {
  const std::size_t F = comparisons.f_count();
  MixtureCounts c;
  c.agree_linked.assign(F, 0);
  c.agree_unlinked.assign(F, 0);
  for (std::size_t j = 0; j < state.n_b(); ++j) {
    const std::int32_t i = state.z(j);
    if (i == kNoLink) continue;
    const auto p = comparisons.pattern(static_cast<std::size_t>(i), j);
    for (std::size_t f = 0; f < F; ++f) c.agree_linked[f] += (p >> f) & 1U;
  }
  c.linked_pairs = state.n_links();
  c.unlinked_pairs = static_cast<std::uint64_t>(comparisons.n_a()) * comparisons.n_b() - c.linked_pairs;
  for (std::size_t f = 0; f < F; ++f) c.agree_unlinked[f] = comparisons.total_agreements(f) - c.agree_linked[f];
  return c;
}

MixtureParams sample_mixture_params(const ComparisonStore& comparisons, const LinkageState& state, double a, double b,
                                    Rng& rng) {
  const MixtureCounts c = mixture_counts(comparisons, state);
  const std::size_t F = comparisons.f_count();
  MixtureParams out{std::vector<double>(F), std::vector<double>(F)};
  for (std::size_t f = 0; f < F; ++f) {
    const double am = static_cast<double>(c.agree_linked[f]);
    const double au = static_cast<double>(c.agree_unlinked[f]);
    out.theta_m[f] = rng.beta(a + am, b + static_cast<double>(c.linked_pairs) - am);
    out.theta_u[f] = rng.beta(a + au, b + static_cast<double>(c.unlinked_pairs) - au);
  }
  return out;
}

MixtureParams sample_mixture_params_ordered(const ComparisonStore& comparisons, const LinkageState& state, double a,
                                            double b, const MixtureParams& current, Rng& rng) {
  const MixtureCounts c = mixture_counts(comparisons, state);
  const std::size_t F = comparisons.f_count();
  MixtureParams out = current;
  for (std::size_t f = 0; f < F; ++f) {
    const double am = static_cast<double>(c.agree_linked[f]);
    const double au = static_cast<double>(c.agree_unlinked[f]);
    out.theta_m[f] = rng.truncated_beta(a + am, b + static_cast<double>(c.linked_pairs) - am, out.theta_u[f], 1.0);
    out.theta_u[f] = rng.truncated_beta(a + au, b + static_cast<double>(c.unlinked_pairs) - au, 0.0, out.theta_m[f]);
  }
  return out;
}

double log_pattern_ratio(const MixtureParams& mix, ComparisonStore::Pattern pattern) {
  double s = 0.0;
  for (std::size_t f = 0; f < mix.theta_m.size(); ++f) {
    const double m = mix.theta_m[f], u = mix.theta_u[f];
    s += ((pattern >> f) & 1U) ? std::log(m) - std::log(u) : std::log1p(-m) - std::log1p(-u);
  }
  return s;
}

// Candidates sharing the all-disagree pattern are handled as one block: its exact mass
// is known when evidence is null, otherwise it is sampled by rejection under the
// envelope exp(lr0 + prior + max(0, bound)). An envelope that dwarfs the rest of the
// mass falls back to explicit enumeration.
void gibbs_update_z(LinkageState& state, const ComparisonStore& comparisons, const MixtureParams& mix,
                    const PairEvidence& evidence, double alpha_pi, double beta_pi, Rng& rng) {
  const std::size_t n_a = state.n_a();
  const std::size_t n_b = state.n_b();
  const PatternScorer score(mix);
  const double lr_zero = score(0);
  const bool null_evidence = evidence.is_null();
  const double bound = evidence.upper_bound();
  const double envelope_lift = std::isfinite(bound) ? std::max(0.0, bound) : 0.0;

  std::vector<std::uint32_t> cand_i;
  std::vector<double> cand_lw;
  std::vector<double> cum;
  std::vector<std::uint32_t> zero_free;

  auto random_free_zero = [&](std::size_t j, std::size_t n_zero_free) -> std::uint32_t {
    const std::size_t limit = 8 * n_a + 64;
    for (std::size_t t = 0; t < limit; ++t) {
      const std::size_t i = rng.uniform_index(n_a);
      if (state.owner(i) == kNoLink && comparisons.pattern(i, j) == 0) return static_cast<std::uint32_t>(i);
    }
    zero_free.clear();
    for (std::size_t i = 0; i < n_a; ++i) {
      if (state.owner(i) == kNoLink && comparisons.pattern(i, j) == 0) zero_free.push_back(static_cast<std::uint32_t>(i));
    }
    assert(zero_free.size() == n_zero_free);
    (void)n_zero_free;
    return zero_free[rng.uniform_index(zero_free.size())];
  };

  for (std::size_t j = 0; j < n_b; ++j) {
    state.unlink(j);
    const std::size_t k = state.n_links();
    if (k >= n_a) continue;  // every File A record is taken
    const double kd = static_cast<double>(k);
    const double log_prior_link = std::log(kd + alpha_pi) - std::log(static_cast<double>(n_a - k)) -
                                  std::log(static_cast<double>(n_b) - kd + beta_pi - 1.0);

    cand_i.clear();
    cand_lw.clear();
    const auto agreeing = comparisons.agreeing(j);
    std::size_t taken_agreeing = 0;
    for (const auto& e : agreeing) {
      if (state.owner(e.i) != kNoLink) {
        ++taken_agreeing;
        continue;
      }
      cand_i.push_back(e.i);
      cand_lw.push_back(score(e.pattern) + evidence.log_ratio(e.i, j) + log_prior_link);
    }
    const std::size_t n_zero_free = (n_a - agreeing.size()) - (k - taken_agreeing);
    const double lw_zero_base = lr_zero + log_prior_link;

    // Block handling for all-disagree candidates.
    bool use_block = false;
    bool block_exact = false;
    double block_log_mass = -std::numeric_limits<double>::infinity();
    const double envelope = lw_zero_base + envelope_lift;
    if (n_zero_free > 0) {
      if (null_evidence) {
        use_block = block_exact = true;
        block_log_mass = lw_zero_base + std::log(static_cast<double>(n_zero_free));
      } else if (std::isfinite(bound)) {
        block_log_mass = envelope + std::log(static_cast<double>(n_zero_free));
        double rest_top = 0.0;
        for (double lw : cand_lw) rest_top = std::max(rest_top, lw);
        double rest = std::exp(-rest_top);
        for (double lw : cand_lw) rest += std::exp(lw - rest_top);
        use_block = block_log_mass - (rest_top + std::log(rest)) < std::log(64.0);
      }
      if (!use_block) {
        for (std::size_t i = 0; i < n_a; ++i) {
          if (state.owner(i) != kNoLink || comparisons.pattern(i, j) != 0) continue;
          cand_i.push_back(static_cast<std::uint32_t>(i));
          cand_lw.push_back(lw_zero_base + evidence.log_ratio(i, j));
        }
      }
    }

    // Slot 0 is no-link with log weight 0; the block, when used, is the last slot.
    double top = 0.0;
    for (double lw : cand_lw) top = std::max(top, lw);
    if (use_block) top = std::max(top, block_log_mass);
    cum.resize(cand_lw.size() + 1 + (use_block ? 1 : 0));
    double total = std::exp(-top);
    cum[0] = total;
    for (std::size_t c = 0; c < cand_lw.size(); ++c) {
      total += std::exp(cand_lw[c] - top);
      cum[c + 1] = total;
    }
    if (use_block) {
      total += std::exp(block_log_mass - top);
      cum.back() = total;
    }

    std::uint32_t chosen = kFree;
    for (;;) {
      const double u = rng.uniform() * total;
      std::size_t slot = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      slot = std::min(slot, cum.size() - 1);
      if (slot == 0) break;
      if (!use_block || slot <= cand_lw.size()) {
        chosen = cand_i[slot - 1];
        break;
      }
      const std::uint32_t i = random_free_zero(j, n_zero_free);
      if (block_exact) {
        chosen = i;
        break;
      }
      const double accept = std::exp(lw_zero_base + evidence.log_ratio(i, j) - envelope);
      if (rng.uniform() < accept) {
        chosen = i;
        break;
      }
    }
    if (chosen != kFree) state.link(j, chosen);
  }
  assert(state.satisfies_invariants());
}

std::vector<ModalLink> posterior_mode_links(const McmcTrace& trace) {
  const std::size_t L = trace.stored_snapshots();
  if (L == 0) throw Error("trace holds no post burn-in iterations");
  std::vector<ModalLink> out(trace.n_b);
  std::vector<std::int32_t> column(L);
  for (std::size_t j = 0; j < trace.n_b; ++j) {
    for (std::size_t l = 0; l < L; ++l) column[l] = trace.z_post[l * trace.n_b + j];
    std::sort(column.begin(), column.end());
    ModalLink best{kNoLink, -1.0};
    std::size_t best_count = 0;
    // Ascending order visits kNoLink first, so it only wins with a strictly larger count.
    std::size_t run_start = 0;
    for (std::size_t l = 1; l <= L; ++l) {
      if (l < L && column[l] == column[run_start]) continue;
      const std::size_t count = l - run_start;
      const std::int32_t value = column[run_start];
      const bool better = count > best_count || (count == best_count && best.i == kNoLink && value != kNoLink);
      if (better) {
        best_count = count;
        best.i = value;
      }
      run_start = l;
    }
    best.probability = static_cast<double>(best_count) / static_cast<double>(L);
    out[j] = best;
  }
  return out;
}

void write_modal_links_csv(std::ostream& out, std::span<const ModalLink> links) {
  out << "j,modal_i,probability\n";
  for (std::size_t j = 0; j < links.size(); ++j) {
    out << j << ',';
    if (links[j].i == kNoLink) {
      out << "NA";
    } else {
      out << links[j].i;
    }
    out << ',' << format_exact(links[j].probability) << '\n';
  }
}

}  // namespace jointlink
