#pragma once

// Outcome models: f_1 (linked, regression on the estimated propensity score) and
// f_2 (unlinked, normal), propensity estimation, and the conjugate parameter samplers.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "jointlink/linkage.hpp"
#include "jointlink/random.hpp"
#include "jointlink/records_io.hpp"

namespace jointlink {

inline constexpr double kPropensityClamp = 1e-8;

double logistic(double t) noexcept;

struct PropensityFit {
  Eigen::VectorXd eta;  // intercept first
  bool converged = false;
  int iterations = 0;
  std::vector<double> e_hat;  // fitted scores of the rows that were fit, clamped into (0, 1)

  // Clamped logistic(x' eta) for any covariate vector.
  double score(std::span<const double> x) const;
};

// Logistic MLE of w on [1, x] by IRLS. Rows of x are records. Throws PositivityError when
// a treatment arm is empty or there are fewer than p + 2 rows.
PropensityFit fit_propensity(const Eigen::MatrixXd& x, std::span<const int> w, int max_iterations = 50,
                             double tolerance = 1e-8);

double propensity_log_likelihood(const Eigen::VectorXd& eta, const Eigen::MatrixXd& x, std::span<const int> w);
Eigen::VectorXd propensity_gradient(const Eigen::VectorXd& eta, const Eigen::MatrixXd& x, std::span<const int> w);

// Truncated power basis of degree s.
struct SplineRows {
  Eigen::VectorXd m1;  // (1, e, ..., e^s, (e - k_1)_+^s, ..., (e - k_m)_+^s)
  Eigen::VectorXd m2;  // m1 without the leading 1
};
SplineRows spline_design_row(double e_hat, int s, std::span<const double> knots);

// m knots at the k/(m+1) sample quantiles; nudged apart if ties would make them non-increasing.
std::vector<double> quantile_knots(std::span<const double> values, int m);

struct ParametricOutcomeParams {
  double beta0 = 0.0, beta1 = 0.0, alpha = 0.0;
  double sigma2 = 1.0;
};

struct SplineOutcomeParams {
  Eigen::VectorXd beta;   // beta_0 .. beta_{s+m}
  Eigen::VectorXd gamma;  // gamma_1 .. gamma_{s+m}
  double sigma2 = 1.0;
  Eigen::VectorXd tau1_sq, tau2_sq;  // length m
  double lambda1_sq = 1.0, lambda2_sq = 1.0;
  std::vector<double> knots;

  int degree() const noexcept { return static_cast<int>(beta.size()) - 1 - static_cast<int>(knots.size()); }
  int coefficient_count() const noexcept { return static_cast<int>(beta.size() + gamma.size()); }
  // Zero coefficients, unit variances; knots must be strictly increasing inside (0, 1).
  static SplineOutcomeParams initial(int s, std::vector<double> knots);
};

struct NoLinkParams {
  double mu1 = 0.0;
  double sigma1_sq = 1.0;
};

using OutcomeParams = std::variant<ParametricOutcomeParams, SplineOutcomeParams>;

double outcome_mean(const ParametricOutcomeParams& p, double e_hat, int w) noexcept;
double outcome_mean(const SplineOutcomeParams& p, double e_hat, int w);
double outcome_mean(const OutcomeParams& p, double e_hat, int w);
double outcome_sigma2(const OutcomeParams& p) noexcept;

// Linked records as seen by the outcome regression.
struct LinkedData {
  std::vector<double> y;
  std::vector<double> e_hat;
  std::vector<int> w;
  std::size_t size() const noexcept { return y.size(); }
};

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct InverseGammaParams {
  double shape = 1.0;
  double scale = 1.0;
};

// (beta0, beta1, alpha) | sigma^2 under the N(0, I) prior.
GaussianConditional parametric_coefficient_conditional(const LinkedData& data, double sigma2);
InverseGammaParams parametric_sigma2_conditional(const LinkedData& data, const ParametricOutcomeParams& p,
                                                 const Hyperparameters& h);
// Coefficients given the current sigma^2, then sigma^2 given the new coefficients.
ParametricOutcomeParams sample_parametric_params(const LinkedData& data, double sigma2, const Hyperparameters& h,
                                                 Rng& rng);

// Coefficient vector (beta, gamma) | sigma^2, tau^2.
GaussianConditional spline_coefficient_conditional(const LinkedData& data, const SplineOutcomeParams& p);
InverseGammaParams spline_sigma2_conditional(const LinkedData& data, const SplineOutcomeParams& p,
                                             const Hyperparameters& h);
// One Bayesian-Lasso Gibbs cycle: coefficients, sigma^2, 1/tau^2, lambda^2.
SplineOutcomeParams sample_spline_params(const LinkedData& data, const SplineOutcomeParams& current,
                                         const Hyperparameters& h, Rng& rng);

struct NormalConditional {
  double mean = 0.0;
  double variance = 1.0;
};
NormalConditional nolink_mean_conditional(std::span<const double> y, double sigma1_sq);
InverseGammaParams nolink_variance_conditional(std::span<const double> y, double mu1, const Hyperparameters& h);
NoLinkParams sample_nolink_params(std::span<const double> y, const NoLinkParams& current, const Hyperparameters& h,
                                  Rng& rng);

double log_normal_density(double y, double mean, double variance) noexcept;

// log f_1(y | mean, sigma^2) - log f_2(y | mu_1, sigma_1^2); a missing y carries no evidence.
double outcome_log_likelihood_ratio(std::optional<double> y, double linked_mean, double sigma2,
                                    const NoLinkParams& nolink) noexcept;

// Pair evidence for the z update under normal f_1 and f_2.
class NormalEvidence final : public PairEvidence {
 public:
  // y holds NaN for missing outcomes; linked_mean[j] = m(e_hat_j, w_j).
  NormalEvidence(std::span<const double> y, std::vector<double> linked_mean, double sigma2, const NoLinkParams& nolink);
  double log_ratio(std::size_t i, std::size_t j) const override;
  double upper_bound() const override { return bound_; }

 private:
  std::vector<double> y_;
  std::vector<double> nolink_term_;
  std::vector<double> linked_mean_;
  double half_inv_sigma2_;
  double log_scale_;
  double bound_;
};

}  // namespace jointlink
