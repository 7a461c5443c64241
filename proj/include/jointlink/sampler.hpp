#pragma once

// MCMC orchestration for the joint, two-stage and known-link analyses.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "jointlink/causal.hpp"
#include "jointlink/comparators.hpp"
#include "jointlink/linkage.hpp"
#include "jointlink/outcomes.hpp"
#include "jointlink/records_io.hpp"
#include "jointlink/trace.hpp"

namespace jointlink {

struct ChainInputs {
  std::span<const OutcomeRecord> file_a;
  std::span<const CovariateRecord> file_b;
  const ComparisonStore* comparisons = nullptr;
};

struct ChainOptions {
  // z for known_link mode, one entry per File B record.
  std::vector<std::int32_t> known_links;
  // Fixed propensity scores per File B record; skips the logistic fit (used by tests).
  std::optional<std::vector<double>> propensity_override;
  // Check the one-to-one invariant after every z sweep and throw on violation.
  bool verify_invariants = false;
  bool store_z = true;
  std::function<void(int iteration, const LinkageState&)> observer;
};

// Skipped-iteration share above which a chain is declared failed.
inline constexpr double kMaxSkippedFraction = 0.2;

McmcTrace run_chain(const ChainInputs& inputs, const RunConfig& config, const ChainOptions& options = {});

struct TwoStageResult {
  std::vector<ModalLink> stage1_links;
  McmcTrace stage1;
  McmcTrace trace;  // stage-2 known-link chain on the modal links
};

// Stage 1 links with the outcome ratio held at zero, stage 2 infers the ATEL on the modal links.
// Throws Error when no record has a modal link.
TwoStageResult run_two_stage_pipeline(const ChainInputs& inputs, const RunConfig& config,
                                      const ChainOptions& options = {});

// Modal links as a valid z: when two File B records share a modal File A record, the one with
// the larger posterior probability keeps it (ties to the smaller j) and the other becomes no-link.
std::vector<std::int32_t> one_to_one_modal_links(std::span<const ModalLink> links, std::size_t n_a);

// z-only chain with every other parameter held fixed. Stores all post burn-in z.
McmcTrace run_linkage_chain(const ComparisonStore& comparisons, const MixtureParams& mix, const PairEvidence& evidence,
                            double alpha_pi, double beta_pi, int iterations, int burn_in, std::uint64_t seed);

}  // namespace jointlink
