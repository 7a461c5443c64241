#include "jointlink/causal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jointlink/errors.hpp"

namespace jointlink {

std::vector<Counterfactual> impute_counterfactuals(const LinkageState& links, const OutcomeParams& params,
                                                   std::span<const double> e_hat, std::span<const int> w, Rng& rng) {
  const double sd = std::sqrt(outcome_sigma2(params));
  std::vector<Counterfactual> out;
  out.reserve(links.n_links());
  for (std::size_t j = 0; j < links.n_b(); ++j) {
    const auto i = links.z(j);
    if (i == kNoLink) continue;
    const double mean = outcome_mean(params, e_hat[j], 1 - w[j]);
    out.push_back({static_cast<std::size_t>(i), j, rng.normal(mean, sd)});
  }
  return out;
}

double atel_draw(std::span<const double> y_observed, std::span<const double> y_missing, std::span<const int> w) {
  if (y_observed.empty()) throw DomainError("ATEL is undefined without linked records");
  if (y_missing.size() != y_observed.size() || w.size() != y_observed.size()) {
    throw DomainError("ATEL inputs differ in length");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < y_observed.size(); ++k) {
    sum += w[k] ? y_observed[k] - y_missing[k] : y_missing[k] - y_observed[k];
  }
  return sum / static_cast<double>(y_observed.size());
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

AtelPosterior summarize_atel(std::vector<double> draws) {
  if (draws.empty()) throw DomainError("no ATEL draws to summarise");
  AtelPosterior post;
  const double n = static_cast<double>(draws.size());
  post.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : draws) ss += (d - post.mean) * (d - post.mean);
  post.sd = draws.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  post.q025 = sorted_quantile(sorted, 0.025);
  post.q50 = sorted_quantile(sorted, 0.5);
  post.q975 = sorted_quantile(sorted, 0.975);
  post.draws = std::move(draws);
  return post;
}

LinkageAccuracy compute_ppv_npv(std::span<const std::int32_t> modal, std::span<const std::int32_t> truth,
                                std::size_t n_a, std::size_t n_b) {
  if (modal.size() != n_b || truth.size() != n_b) throw DomainError("link vectors must have one entry per File B record");
  std::size_t matches = 0, correct = 0, non_matches = 0, correct_none = 0;
  for (std::size_t j = 0; j < n_b; ++j) {
    if (truth[j] != kNoLink && static_cast<std::size_t>(truth[j]) >= n_a) throw DomainError("true link out of range");
    if (truth[j] != kNoLink) {
      ++matches;
      correct += modal[j] == truth[j] ? 1 : 0;
    } else {
      ++non_matches;
      correct_none += modal[j] == kNoLink ? 1 : 0;
    }
  }
  LinkageAccuracy acc;
  if (matches) acc.ppv = static_cast<double>(correct) / static_cast<double>(matches);
  if (non_matches) acc.npv = static_cast<double>(correct_none) / static_cast<double>(non_matches);
  return acc;
}

LinkageAccuracy compute_ppv_npv(std::span<const ModalLink> modal, std::span<const std::int32_t> truth,
                                std::size_t n_a, std::size_t n_b) {
  std::vector<std::int32_t> z(modal.size());
  std::transform(modal.begin(), modal.end(), z.begin(), [](const ModalLink& m) { return m.i; });
  return compute_ppv_npv(z, truth, n_a, n_b);
}

double compute_mse(std::span<const double> draws, double atel0) {
  if (draws.empty()) throw DomainError("MSE needs at least one draw");
  double ss = 0.0;
  for (double d : draws) ss += (d - atel0) * (d - atel0);
  return ss / static_cast<double>(draws.size());
}

}  // namespace jointlink
