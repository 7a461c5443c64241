#include "jointlink/outcomes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "jointlink/errors.hpp"

namespace jointlink {
namespace {

double clamp_score(double p) noexcept { return std::clamp(p, kPropensityClamp, 1.0 - kPropensityClamp); }

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

// Draw from N(Q^{-1} b, Q^{-1}) using the Cholesky factor of Q.
Eigen::VectorXd draw_gaussian_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& rhs, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw DomainError("coefficient precision matrix is not positive definite");
  Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(rhs.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  // Q = L L', so L'^{-1} z has covariance Q^{-1}.
  return mean + llt.matrixU().solve(z);
}

GaussianConditional moments_from_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw DomainError("coefficient precision matrix is not positive definite");
  GaussianConditional g;
  g.mean = llt.solve(rhs);
  g.covariance = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  return g;
}

Eigen::MatrixXd parametric_design(const LinkedData& d) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d.size()), 3);
  for (std::size_t n = 0; n < d.size(); ++n) {
    x(static_cast<Eigen::Index>(n), 0) = 1.0;
    x(static_cast<Eigen::Index>(n), 1) = d.e_hat[n];
    x(static_cast<Eigen::Index>(n), 2) = d.w[n];
  }
  return x;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd spline_design(const LinkedData& d, int s, std::span<const double> knots) {
  const Eigen::Index p1 = 1 + s + static_cast<Eigen::Index>(knots.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d.size()), 2 * p1 - 1);
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto rows = spline_design_row(d.e_hat[n], s, knots);
    const auto r = static_cast<Eigen::Index>(n);
    x.row(r).head(p1) = rows.m1.transpose();
    x.row(r).tail(p1 - 1) = static_cast<double>(d.w[n]) * rows.m2.transpose();
  }
  return x;
}

// Prior precision of (beta, gamma); penalised entries scale with 1/(sigma^2 tau^2).
Eigen::VectorXd spline_prior_precision(const SplineOutcomeParams& p) {
  const int s = p.degree();
  const auto m = static_cast<Eigen::Index>(p.knots.size());
  const Eigen::Index p1 = p.beta.size();
  Eigen::VectorXd prec = Eigen::VectorXd::Ones(p.coefficient_count());
  for (Eigen::Index k = 0; k < m; ++k) {
    prec[1 + s + k] = 1.0 / (p.sigma2 * p.tau1_sq[k]);
    prec[p1 + s + k] = 1.0 / (p.sigma2 * p.tau2_sq[k]);
  }
  return prec;
}

double spline_rss(const LinkedData& d, const SplineOutcomeParams& p) {
  double rss = 0.0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const double r = d.y[n] - outcome_mean(p, d.e_hat[n], d.w[n]);
    rss += r * r;
  }
  return rss;
}

}  // namespace

double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double PropensityFit::score(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) + 1 != eta.size()) throw DomainError("covariate length mismatch");
  double t = eta[0];
  for (std::size_t k = 0; k < x.size(); ++k) t += eta[static_cast<Eigen::Index>(k) + 1] * x[k];
  return clamp_score(logistic(t));
}

double propensity_log_likelihood(const Eigen::VectorXd& eta, const Eigen::MatrixXd& x, std::span<const int> w) {
  const Eigen::VectorXd t = with_intercept(x) * eta;
  double ll = 0.0;
  for (Eigen::Index n = 0; n < t.size(); ++n) {
    // log p = -log(1 + e^{-t}), log(1 - p) = -log(1 + e^{t})
    const double v = t[n];
    const double log1pexp_neg = v > 0 ? std::log1p(std::exp(-v)) : -v + std::log1p(std::exp(v));
    ll += w[static_cast<std::size_t>(n)] ? -log1pexp_neg : -(v + log1pexp_neg);
  }
  return ll;
}

Eigen::VectorXd propensity_gradient(const Eigen::VectorXd& eta, const Eigen::MatrixXd& x, std::span<const int> w) {
  const Eigen::MatrixXd d = with_intercept(x);
  const Eigen::VectorXd t = d * eta;
  Eigen::VectorXd resid(t.size());
  for (Eigen::Index n = 0; n < t.size(); ++n) resid[n] = w[static_cast<std::size_t>(n)] - logistic(t[n]);
  return d.transpose() * resid;
}

PropensityFit fit_propensity(const Eigen::MatrixXd& x, std::span<const int> w, int max_iterations, double tolerance) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (static_cast<std::size_t>(n) != w.size()) throw DomainError("treatment vector length mismatch");
  if (n < p + 2) {
    throw PositivityError("propensity model needs at least " + std::to_string(p + 2) + " linked records, have " +
                          std::to_string(n));
  }
  std::size_t treated = 0;
  for (int v : w) treated += v ? 1 : 0;
  if (treated == 0 || treated == w.size()) throw PositivityError("linked records contain a single treatment arm");

  const Eigen::MatrixXd d = with_intercept(x);
  PropensityFit fit;
  fit.eta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd prob(n), weight(n), resid(n);
  for (int it = 1; it <= max_iterations; ++it) {
    fit.iterations = it;
    const Eigen::VectorXd t = d * fit.eta;
    for (Eigen::Index r = 0; r < n; ++r) {
      prob[r] = logistic(t[r]);
      weight[r] = prob[r] * (1.0 - prob[r]);
      resid[r] = w[static_cast<std::size_t>(r)] - prob[r];
    }
    const Eigen::MatrixXd info = d.transpose() * weight.asDiagonal() * d;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = ldlt.solve(d.transpose() * resid);
    if (!step.allFinite()) break;
    fit.eta += step;
    if (step.lpNorm<Eigen::Infinity>() < tolerance) {
      fit.converged = true;
      break;
    }
  }
  const Eigen::VectorXd t = d * fit.eta;
  fit.e_hat.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) fit.e_hat[static_cast<std::size_t>(r)] = clamp_score(logistic(t[r]));
  return fit;
}

SplineRows spline_design_row(double e, int s, std::span<const double> knots) {
  const auto m = static_cast<Eigen::Index>(knots.size());
  SplineRows rows;
  rows.m1.resize(1 + s + m);
  double pw = 1.0;
  for (int k = 0; k <= s; ++k) {
    rows.m1[k] = pw;
    pw *= e;
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    const double t = e - knots[static_cast<std::size_t>(k)];
    rows.m1[1 + s + k] = t > 0.0 ? std::pow(t, s) : 0.0;
  }
  rows.m2 = rows.m1.tail(s + m);
  return rows;
}

std::vector<double> quantile_knots(std::span<const double> values, int m) {
  if (values.empty()) throw DomainError("cannot place knots on an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::vector<double> knots(static_cast<std::size_t>(m));
  const double n = static_cast<double>(v.size());
  for (int k = 1; k <= m; ++k) {
    // type-7 quantile
    const double h = (n - 1.0) * k / (m + 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    knots[static_cast<std::size_t>(k - 1)] = v[lo] + (h - lo) * (v[hi] - v[lo]);
  }
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (knots[k] <= knots[k - 1]) knots[k] = std::nextafter(knots[k - 1], 2.0) + 1e-9;
  }
  return knots;
}

SplineOutcomeParams SplineOutcomeParams::initial(int s, std::vector<double> knots) {
  if (s < 1) throw ConfigError("spline degree must be at least 1");
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (!(knots[k] > knots[k - 1])) throw DomainError("spline knots must be strictly increasing");
  }
  const auto m = static_cast<Eigen::Index>(knots.size());
  SplineOutcomeParams p;
  p.beta = Eigen::VectorXd::Zero(1 + s + m);
  p.gamma = Eigen::VectorXd::Zero(s + m);
  p.tau1_sq = Eigen::VectorXd::Ones(m);
  p.tau2_sq = Eigen::VectorXd::Ones(m);
  p.knots = std::move(knots);
  return p;
}

double outcome_mean(const ParametricOutcomeParams& p, double e_hat, int w) noexcept {
  return p.beta0 + p.beta1 * e_hat + p.alpha * w;
}

double outcome_mean(const SplineOutcomeParams& p, double e, int w) {
  // Horner on the polynomial part, then the truncated terms.
  const int s = p.degree();
  double poly_b = 0.0, poly_g = 0.0;
  for (int k = s; k >= 1; --k) {
    poly_b = poly_b * e + p.beta[k];
    poly_g = poly_g * e + p.gamma[k - 1];
  }
  double mean = p.beta[0] + poly_b * e;
  double treat = poly_g * e;
  for (std::size_t k = 0; k < p.knots.size(); ++k) {
    const double t = e - p.knots[k];
    if (t <= 0.0) continue;
    const double b = s == 2 ? t * t : std::pow(t, s);
    mean += p.beta[1 + s + static_cast<Eigen::Index>(k)] * b;
    treat += p.gamma[s + static_cast<Eigen::Index>(k)] * b;
  }
  return w ? mean + treat : mean;
}

double outcome_mean(const OutcomeParams& p, double e_hat, int w) {
  return std::visit([&](const auto& q) { return outcome_mean(q, e_hat, w); }, p);
}

double outcome_sigma2(const OutcomeParams& p) noexcept {
  return std::visit([](const auto& q) { return q.sigma2; }, p);
}

GaussianConditional parametric_coefficient_conditional(const LinkedData& data, double sigma2) {
  const Eigen::MatrixXd x = parametric_design(data);
  const Eigen::MatrixXd q = x.transpose() * x / sigma2 + Eigen::MatrixXd::Identity(3, 3);
  return moments_from_canonical(q, x.transpose() * as_vector(data.y) / sigma2);
}

InverseGammaParams parametric_sigma2_conditional(const LinkedData& data, const ParametricOutcomeParams& p,
                                                 const Hyperparameters& h) {
  double rss = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double r = data.y[n] - outcome_mean(p, data.e_hat[n], data.w[n]);
    rss += r * r;
  }
  return {h.a_sigma + 0.5 * static_cast<double>(data.size()), h.b_sigma + 0.5 * rss};
}

ParametricOutcomeParams sample_parametric_params(const LinkedData& data, double sigma2, const Hyperparameters& h,
                                                 Rng& rng) {
  const Eigen::MatrixXd x = parametric_design(data);
  const Eigen::MatrixXd q = x.transpose() * x / sigma2 + Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd c = draw_gaussian_canonical(q, x.transpose() * as_vector(data.y) / sigma2, rng);
  ParametricOutcomeParams p{c[0], c[1], c[2], sigma2};
  const auto ig = parametric_sigma2_conditional(data, p, h);
  p.sigma2 = rng.inverse_gamma(ig.shape, ig.scale);
  return p;
}

GaussianConditional spline_coefficient_conditional(const LinkedData& data, const SplineOutcomeParams& p) {
  const Eigen::MatrixXd x = spline_design(data, p.degree(), p.knots);
  Eigen::MatrixXd q = x.transpose() * x / p.sigma2;
  q.diagonal() += spline_prior_precision(p);
  return moments_from_canonical(q, x.transpose() * as_vector(data.y) / p.sigma2);
}

InverseGammaParams spline_sigma2_conditional(const LinkedData& data, const SplineOutcomeParams& p,
                                             const Hyperparameters& h) {
  const int s = p.degree();
  const auto m = static_cast<Eigen::Index>(p.knots.size());
  double pen = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double b = p.beta[1 + s + k], g = p.gamma[s + k];
    pen += b * b / p.tau1_sq[k] + g * g / p.tau2_sq[k];
  }
  return {h.a_sigma + 0.5 * static_cast<double>(data.size()) + static_cast<double>(m),
          h.b_sigma + 0.5 * spline_rss(data, p) + 0.5 * pen};
}

SplineOutcomeParams sample_spline_params(const LinkedData& data, const SplineOutcomeParams& current,
                                         const Hyperparameters& h, Rng& rng) {
  SplineOutcomeParams p = current;
  const int s = p.degree();
  const auto m = static_cast<Eigen::Index>(p.knots.size());
  const Eigen::Index p1 = p.beta.size();

  const Eigen::MatrixXd x = spline_design(data, s, p.knots);
  Eigen::MatrixXd q = x.transpose() * x / p.sigma2;
  q.diagonal() += spline_prior_precision(p);
  const Eigen::VectorXd c = draw_gaussian_canonical(q, x.transpose() * as_vector(data.y) / p.sigma2, rng);
  p.beta = c.head(p1);
  p.gamma = c.tail(p1 - 1);

  const auto ig = spline_sigma2_conditional(data, p, h);
  p.sigma2 = rng.inverse_gamma(ig.shape, ig.scale);

  const double sd = std::sqrt(p.sigma2);
  double sum1 = 0.0, sum2 = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double b = std::max(std::abs(p.beta[1 + s + k]), 1e-12);
    const double g = std::max(std::abs(p.gamma[s + k]), 1e-12);
    p.tau1_sq[k] = 1.0 / rng.inverse_gaussian(std::sqrt(p.lambda1_sq) * sd / b, p.lambda1_sq);
    p.tau2_sq[k] = 1.0 / rng.inverse_gaussian(std::sqrt(p.lambda2_sq) * sd / g, p.lambda2_sq);
    sum1 += p.tau1_sq[k];
    sum2 += p.tau2_sq[k];
  }
  p.lambda1_sq = rng.gamma(h.r1 + static_cast<double>(m), h.delta1 + 0.5 * sum1);
  p.lambda2_sq = rng.gamma(h.r2 + static_cast<double>(m), h.delta2 + 0.5 * sum2);
  return p;
}

NormalConditional nolink_mean_conditional(std::span<const double> y, double sigma1_sq) {
  double sum = 0.0;
  for (double v : y) sum += v;
  const double prec = 1.0 + static_cast<double>(y.size()) / sigma1_sq;
  return {sum / sigma1_sq / prec, 1.0 / prec};
}

InverseGammaParams nolink_variance_conditional(std::span<const double> y, double mu1, const Hyperparameters& h) {
  double ss = 0.0;
  for (double v : y) ss += (v - mu1) * (v - mu1);
  return {h.a_sigma1 + 0.5 * static_cast<double>(y.size()), h.b_sigma1 + 0.5 * ss};
}

NoLinkParams sample_nolink_params(std::span<const double> y, const NoLinkParams& current, const Hyperparameters& h,
                                  Rng& rng) {
  NoLinkParams p = current;
  const auto mc = nolink_mean_conditional(y, p.sigma1_sq);
  p.mu1 = rng.normal(mc.mean, std::sqrt(mc.variance));
  const auto ig = nolink_variance_conditional(y, p.mu1, h);
  p.sigma1_sq = rng.inverse_gamma(ig.shape, ig.scale);
  return p;
}

double log_normal_density(double y, double mean, double variance) noexcept {
  const double r = y - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + r * r / variance);
}

double outcome_log_likelihood_ratio(std::optional<double> y, double linked_mean, double sigma2,
                                    const NoLinkParams& nolink) noexcept {
  if (!y) return 0.0;
  return log_normal_density(*y, linked_mean, sigma2) - log_normal_density(*y, nolink.mu1, nolink.sigma1_sq);
}

NormalEvidence::NormalEvidence(std::span<const double> y, std::vector<double> linked_mean, double sigma2,
                               const NoLinkParams& nolink)
    : y_(y.begin(), y.end()),
      nolink_term_(y.size(), 0.0),
      linked_mean_(std::move(linked_mean)),
      half_inv_sigma2_(0.5 / sigma2),
      log_scale_(0.5 * std::log(nolink.sigma1_sq / sigma2)) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y_.size(); ++i) {
    if (std::isnan(y_[i])) {
      best = std::max(best, 0.0);
      continue;
    }
    const double r = y_[i] - nolink.mu1;
    nolink_term_[i] = r * r / (2.0 * nolink.sigma1_sq);
    best = std::max(best, log_scale_ + nolink_term_[i]);
  }
  bound_ = best;
}

double NormalEvidence::log_ratio(std::size_t i, std::size_t j) const {
  const double y = y_[i];
  if (std::isnan(y)) return 0.0;
  const double r = y - linked_mean_[j];
  return log_scale_ - r * r * half_inv_sigma2_ + nolink_term_[i];
}

}  // namespace jointlink
