#pragma once

// Counterfactual imputation, ATEL draws, posterior summaries and accuracy metrics.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "jointlink/linkage.hpp"
#include "jointlink/outcomes.hpp"
#include "jointlink/random.hpp"

namespace jointlink {

struct Counterfactual {
  std::size_t i = 0;
  std::size_t j = 0;
  double y_miss = 0.0;
};

// For every linked (i, j) in order of j: y_miss ~ N(m(e_hat_j, 1 - w_j), sigma^2).
std::vector<Counterfactual> impute_counterfactuals(const LinkageState& links, const OutcomeParams& params,
                                                   std::span<const double> e_hat, std::span<const int> w, Rng& rng);

// Mean of T_i = y_i(1) - y_i(0) over the linked pairs. Throws DomainError on an empty set.
double atel_draw(std::span<const double> y_observed, std::span<const double> y_missing, std::span<const int> w);

// Type-7 (linear interpolation) sample quantile of sorted data.
double sorted_quantile(std::span<const double> sorted, double p);

struct AtelPosterior {
  std::vector<double> draws;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0, q50 = 0.0, q975 = 0.0;
};

// Throws DomainError when there are no draws.
AtelPosterior summarize_atel(std::vector<double> draws);

struct LinkageAccuracy {
  std::optional<double> ppv;  // undefined when there are no true matches
  std::optional<double> npv;  // undefined when there are no true non-matches
};

// modal[j] and truth[j] are File A indices or kNoLink.
LinkageAccuracy compute_ppv_npv(std::span<const std::int32_t> modal, std::span<const std::int32_t> truth,
                                std::size_t n_a, std::size_t n_b);
LinkageAccuracy compute_ppv_npv(std::span<const ModalLink> modal, std::span<const std::int32_t> truth,
                                std::size_t n_a, std::size_t n_b);

// Mean squared deviation of the draws from atel0. Throws DomainError when there are no draws.
double compute_mse(std::span<const double> draws, double atel0);

struct AccuracyReport {
  std::optional<double> ppv;
  std::optional<double> npv;
  double mse = 0.0;
  double atel0 = 0.0;
};

}  // namespace jointlink
