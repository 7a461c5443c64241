#include "jointlink/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jointlink/errors.hpp"

namespace jointlink {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(const ChainInputs& in, const RunConfig& config, const ChainOptions& opt) {
  config.validate();
  if (!in.comparisons) throw DomainError("chain needs a comparison store");
  if (in.comparisons->n_a() != in.file_a.size() || in.comparisons->n_b() != in.file_b.size()) {
    throw DomainError("comparison store does not match the files");
  }
  if (in.file_a.empty() || in.file_b.empty()) throw DomainError("both files must be nonempty");
  const std::size_t p = in.file_b.front().x.size();
  for (const auto& r : in.file_b) {
    if (r.x.size() != p) throw DomainError("File B records differ in covariate count");
  }
  if (config.mode == Mode::known_link && opt.known_links.size() != in.file_b.size()) {
    throw DomainError("known_link mode needs one link entry per File B record");
  }
  if (opt.propensity_override) {
    if (opt.propensity_override->size() != in.file_b.size()) throw DomainError("propensity override length mismatch");
    for (double e : *opt.propensity_override) {
      if (!(e > 0.0 && e < 1.0)) throw DomainError("propensity override must lie in (0, 1)");
    }
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

// Everything that changes over a chain.
class Chain {
 public:
  Chain(const ChainInputs& in, const RunConfig& config, const ChainOptions& opt)
      : in_(in), cfg_(config), opt_(opt), rng_(config.seed), n_a_(in.file_a.size()), n_b_(in.file_b.size()) {
    y_obs_.resize(n_a_);
    y_.assign(n_a_, 0.0);
    for (std::size_t i = 0; i < n_a_; ++i) {
      y_obs_[i] = in.file_a[i].y ? *in.file_a[i].y : kNaN;
      if (in.file_a[i].y) y_[i] = *in.file_a[i].y;
      else missing_.push_back(i);
    }
    w_.resize(n_b_);
    for (std::size_t j = 0; j < n_b_; ++j) w_[j] = in.file_b[j].w;
    const std::size_t f = in.comparisons->f_count();
    mix_.theta_m.assign(f, 0.9);
    mix_.theta_u.assign(f, 0.1);
    if (cfg_.outcome_model == OutcomeModel::parametric) params_ = ParametricOutcomeParams{};
    z_ = cfg_.mode == Mode::known_link ? LinkageState::from_assignments(n_a_, opt.known_links)
                                       : LinkageState(n_a_, n_b_);
    if (opt.propensity_override) e_hat_ = *opt.propensity_override;
  }

  McmcTrace run() {
    McmcTrace trace;
    trace.mode = cfg_.mode;
    trace.outcome_model = cfg_.outcome_model;
    trace.seed = cfg_.seed;
    trace.iterations = cfg_.iterations;
    trace.burn_in = cfg_.burn_in;
    trace.n_a = n_a_;
    trace.n_b = n_b_;
    trace.records.reserve(static_cast<std::size_t>(cfg_.iterations));
    if (opt_.store_z) trace.z_post.reserve(trace.post_burn_in_length() * n_b_);

    for (int t = 0; t < cfg_.iterations; ++t) {
      impute_missing();
      const Step step = update_propensity(t, trace);
      if (step == Step::updated) update_outcome_params();
      update_nolink_params();
      mix_ = sample_mixture_params_ordered(*in_.comparisons, z_, cfg_.hyper.a, cfg_.hyper.b, mix_, rng_);
      update_links();
      if (opt_.verify_invariants && !z_.satisfies_invariants()) {
        throw Error("one-to-one linkage invariant violated at iteration " + std::to_string(t));
      }
      if (opt_.observer) opt_.observer(t, z_);

      IterationRecord rec;
      rec.iteration = t;
      rec.n_links = static_cast<int>(z_.n_links());
      rec.atel = draw_atel();
      rec.theta_m_mean = mean_of(mix_.theta_m);
      rec.theta_u_mean = mean_of(mix_.theta_u);
      rec.mu1 = nolink_.mu1;
      rec.sigma1_sq = nolink_.sigma1_sq;
      fill_outcome_summary(rec);
      rec.outcome_skipped = step != Step::updated;
      trace.records.push_back(rec);
      if (step == Step::failed) ++trace.skipped_iterations;
      if (opt_.store_z && t >= cfg_.burn_in) {
        const auto z = z_.assignments();
        trace.z_post.insert(trace.z_post.end(), z.begin(), z.end());
      }
    }
    if (trace.skipped_iterations > kMaxSkippedFraction * cfg_.iterations) {
      throw Error("outcome update skipped in " + std::to_string(trace.skipped_iterations) + " of " +
                  std::to_string(cfg_.iterations) + " iterations (propensity positivity failures)");
    }
    return trace;
  }

 private:
  bool fitted() const { return params_.has_value() && outcome_fitted_; }

  double linked_mean(std::size_t j, int w) const { return outcome_mean(*params_, e_hat_[j], w); }

  // Step 1: posterior predictive draws for missing outcomes.
  void impute_missing() {
    for (std::size_t i : missing_) {
      const auto j = z_.owner(i);
      if (j != kNoLink && fitted()) {
        const auto jj = static_cast<std::size_t>(j);
        y_[i] = rng_.normal(linked_mean(jj, w_[jj]), std::sqrt(outcome_sigma2(*params_)));
      } else {
        y_[i] = rng_.normal(nolink_.mu1, std::sqrt(nolink_.sigma1_sq));
      }
    }
  }

  enum class Step { updated, held, failed };

  // Step 2: propensity scores for the current links, deciding whether theta_c moves.
  Step update_propensity(int t, McmcTrace& trace) {
    if (opt_.propensity_override) {
      init_spline_if_needed();
      // Nothing to regress on; theta_c is held without counting a failure.
      return z_.n_links() > 0 ? Step::updated : Step::held;
    }
    const auto z = z_.assignments();
    if (have_fit_ && std::equal(z.begin(), z.end(), fit_z_.begin(), fit_z_.end())) return Step::updated;
    const std::size_t p = in_.file_b.front().x.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(z_.n_links()), static_cast<Eigen::Index>(p));
    std::vector<int> w;
    w.reserve(z_.n_links());
    for (std::size_t j = 0; j < n_b_; ++j) {
      if (z[j] == kNoLink) continue;
      const auto r = static_cast<Eigen::Index>(w.size());
      for (std::size_t k = 0; k < p; ++k) x(r, static_cast<Eigen::Index>(k)) = in_.file_b[j].x[k];
      w.push_back(w_[j]);
    }
    try {
      const PropensityFit fit = fit_propensity(x, w);
      if (!fit.converged) ++trace.nonconverged_fits;
      e_hat_.resize(n_b_);
      for (std::size_t j = 0; j < n_b_; ++j) e_hat_[j] = fit.score(in_.file_b[j].x);
      fit_z_.assign(z.begin(), z.end());
      have_fit_ = true;
      init_spline_if_needed();
      return Step::updated;
    } catch (const PositivityError&) {
      // The starting state has no links at all, which says nothing about positivity.
      return t == 0 && cfg_.mode != Mode::known_link ? Step::held : Step::failed;
    }
  }

  void init_spline_if_needed() {
    if (cfg_.outcome_model != OutcomeModel::spline || params_) return;
    params_ = SplineOutcomeParams::initial(cfg_.spline.s, quantile_knots(e_hat_, cfg_.spline.m_knots));
  }

  // Step 3a: theta_c from the linked records.
  void update_outcome_params() {
    LinkedData d;
    d.y.reserve(z_.n_links());
    d.e_hat.reserve(z_.n_links());
    d.w.reserve(z_.n_links());
    for (std::size_t j = 0; j < n_b_; ++j) {
      const auto i = z_.z(j);
      if (i == kNoLink) continue;
      d.y.push_back(y_[static_cast<std::size_t>(i)]);
      d.e_hat.push_back(e_hat_[j]);
      d.w.push_back(w_[j]);
    }
    if (auto* par = std::get_if<ParametricOutcomeParams>(&*params_)) {
      *par = sample_parametric_params(d, par->sigma2, cfg_.hyper, rng_);
    } else {
      auto& sp = std::get<SplineOutcomeParams>(*params_);
      sp = sample_spline_params(d, sp, cfg_.hyper, rng_);
    }
    outcome_fitted_ = true;
  }

  // Step 3b: theta_d from the File A records without a link.
  void update_nolink_params() {
    unlinked_y_.clear();
    for (std::size_t i = 0; i < n_a_; ++i) {
      if (z_.owner(i) == kNoLink) unlinked_y_.push_back(y_[i]);
    }
    nolink_ = sample_nolink_params(unlinked_y_, nolink_, cfg_.hyper, rng_);
  }

  // Step 5.
  void update_links() {
    if (cfg_.mode == Mode::known_link) return;
    if (cfg_.mode == Mode::joint && fitted()) {
      std::vector<double> means(n_b_);
      for (std::size_t j = 0; j < n_b_; ++j) means[j] = linked_mean(j, w_[j]);
      const NormalEvidence evidence(y_obs_, std::move(means), outcome_sigma2(*params_), nolink_);
      gibbs_update_z(z_, *in_.comparisons, mix_, evidence, cfg_.hyper.alpha_pi, cfg_.hyper.beta_pi, rng_);
    } else {
      gibbs_update_z(z_, *in_.comparisons, mix_, NoEvidence{}, cfg_.hyper.alpha_pi, cfg_.hyper.beta_pi, rng_);
    }
  }

  // Step 6: counterfactuals for the current links and the resulting ATEL draw.
  double draw_atel() {
    if (z_.n_links() == 0 || !fitted()) return kNaN;
    const double sd = std::sqrt(outcome_sigma2(*params_));
    const auto cf = impute_counterfactuals(z_, *params_, e_hat_, w_, rng_);
    std::vector<double> y_o, y_m;
    std::vector<int> w;
    y_o.reserve(cf.size());
    y_m.reserve(cf.size());
    w.reserve(cf.size());
    for (const auto& c : cf) {
      double y = y_obs_[c.i];
      // A blanked outcome on a fresh link is predicted from its new partner.
      if (std::isnan(y)) y = rng_.normal(linked_mean(c.j, w_[c.j]), sd);
      y_o.push_back(y);
      y_m.push_back(c.y_miss);
      w.push_back(w_[c.j]);
    }
    return atel_draw(y_o, y_m, w);
  }

  void fill_outcome_summary(IterationRecord& rec) const {
    if (!params_) {
      rec.sigma2 = kNaN;
      rec.coef = {kNaN, kNaN, kNaN};
      return;
    }
    if (const auto* par = std::get_if<ParametricOutcomeParams>(&*params_)) {
      rec.sigma2 = par->sigma2;
      rec.coef = {par->beta0, par->beta1, par->alpha};
    } else {
      const auto& sp = std::get<SplineOutcomeParams>(*params_);
      rec.sigma2 = sp.sigma2;
      rec.coef = {sp.beta[0], sp.beta[1], sp.gamma[0]};
    }
  }

  const ChainInputs& in_;
  const RunConfig& cfg_;
  const ChainOptions& opt_;
  Rng rng_;
  std::size_t n_a_, n_b_;

  std::vector<double> y_obs_;  // NaN where missing
  std::vector<double> y_;      // observed or currently imputed
  std::vector<std::size_t> missing_;
  std::vector<int> w_;
  std::vector<double> e_hat_;
  std::vector<double> unlinked_y_;

  LinkageState z_;
  MixtureParams mix_;
  std::optional<OutcomeParams> params_;
  bool outcome_fitted_ = false;
  NoLinkParams nolink_;

  bool have_fit_ = false;
  std::vector<std::int32_t> fit_z_;
};

}  // namespace

McmcTrace run_chain(const ChainInputs& inputs, const RunConfig& config, const ChainOptions& options) {
  check_inputs(inputs, config, options);
  Chain chain(inputs, config, options);
  return chain.run();
}

std::vector<std::int32_t> one_to_one_modal_links(std::span<const ModalLink> links, std::size_t n_a) {
  std::vector<std::int32_t> z(links.size(), kNoLink);
  std::vector<std::int32_t> owner(n_a, kNoLink);
  for (std::size_t j = 0; j < links.size(); ++j) {
    const auto i = links[j].i;
    if (i == kNoLink) continue;
    if (static_cast<std::size_t>(i) >= n_a) throw DomainError("modal link out of range");
    auto& o = owner[static_cast<std::size_t>(i)];
    if (o == kNoLink || links[j].probability > links[static_cast<std::size_t>(o)].probability) {
      if (o != kNoLink) z[static_cast<std::size_t>(o)] = kNoLink;
      o = static_cast<std::int32_t>(j);
      z[j] = i;
    }
  }
  return z;
}

TwoStageResult run_two_stage_pipeline(const ChainInputs& inputs, const RunConfig& config,
                                      const ChainOptions& options) {
  if (config.mode != Mode::two_stage) throw ConfigError("two-stage pipeline requires mode = two_stage");
  TwoStageResult result;
  result.stage1 = run_chain(inputs, config, options);
  result.stage1_links = posterior_mode_links(result.stage1);
  const auto z = one_to_one_modal_links(result.stage1_links, inputs.file_a.size());
  if (std::all_of(z.begin(), z.end(), [](std::int32_t v) { return v == kNoLink; })) {
    throw Error("two-stage stage 1 produced no modal links; nothing to analyse");
  }
  RunConfig stage2 = config;
  stage2.mode = Mode::known_link;
  stage2.seed = derive_seed(config.seed, {2});
  ChainOptions opt2 = options;
  opt2.known_links = z;
  result.trace = run_chain(inputs, stage2, opt2);
  result.trace.mode = Mode::two_stage;
  return result;
}

McmcTrace run_linkage_chain(const ComparisonStore& comparisons, const MixtureParams& mix, const PairEvidence& evidence,
                            double alpha_pi, double beta_pi, int iterations, int burn_in, std::uint64_t seed) {
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations) throw ConfigError("need 0 <= burn_in < iterations");
  McmcTrace trace;
  trace.mode = Mode::joint;
  trace.seed = seed;
  trace.iterations = iterations;
  trace.burn_in = burn_in;
  trace.n_a = comparisons.n_a();
  trace.n_b = comparisons.n_b();
  trace.z_post.reserve(trace.post_burn_in_length() * trace.n_b);
  LinkageState z(comparisons.n_a(), comparisons.n_b());
  Rng rng(seed);
  for (int t = 0; t < iterations; ++t) {
    gibbs_update_z(z, comparisons, mix, evidence, alpha_pi, beta_pi, rng);
    if (t >= burn_in) {
      const auto a = z.assignments();
      trace.z_post.insert(trace.z_post.end(), a.begin(), a.end());
    }
  }
  return trace;
}

}  // namespace jointlink
