#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "jointlink/comparators.hpp"
#include "jointlink/errors.hpp"
#include "jointlink/sampler.hpp"
#include "jointlink/simgen.hpp"

namespace jointlink {
namespace {

std::uint64_t millis(double v) { return static_cast<std::uint64_t>(std::llround(v * 1000.0)); }

ModeResult summarize_mode(Mode mode, const McmcTrace& trace, const std::vector<std::int32_t>* links,
                          const TruthBundle& truth, double atel0) {
  ModeResult r;
  r.mode = mode;
  if (links) {
    const auto acc = compute_ppv_npv(*links, truth.true_links, truth.file_a.size(), truth.file_b.size());
    r.ppv = acc.ppv;
    r.npv = acc.npv;
  }
  const auto draws = trace.post_burn_in_atel();
  r.mse = compute_mse(draws, atel0);
  r.atel = summarize_atel(draws);
  r.atel.draws.clear();
  r.atel.draws.shrink_to_fit();
  return r;
}

std::string opt_num(const std::optional<MeanSe>& v, bool se) {
  if (!v) return "NA";
  return format_sig(se ? v->se : v->mean);
}

std::optional<MeanSe> summarize_optional(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return mean_se(v);
}

}  // namespace

OutcomeModel correct_outcome_model(Scheme s) noexcept {
  return s == Scheme::L ? OutcomeModel::parametric : OutcomeModel::spline;
}

MeanSe mean_se(std::span<const double> values) {
  MeanSe m;
  m.n = static_cast<int>(values.size());
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / m.n;
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.se = std::sqrt(ss / (m.n - 1) / m.n);
  }
  return m;
}

const CellSummary* ExperimentReport::find(Scheme s, double overlap, double missing, Mode m) const {
  for (const auto& c : cells) {
    if (c.scheme == s && c.mode == m && std::abs(c.overlap - overlap) < 1e-9 &&
        std::abs(c.missing_frac - missing) < 1e-9) {
      return &c;
    }
  }
  return nullptr;
}

SimConfig replication_config(const ExperimentMatrix& matrix, Scheme scheme, double overlap, int replication) {
  SimConfig sc = matrix.base;
  sc.scheme = scheme;
  sc.overlap = overlap_count(overlap, sc.n_a, sc.n_b);
  // The population seed ignores the missing fraction so missing-data cells reuse the complete populations.
  sc.seed = derive_seed(matrix.master_seed,
                        {static_cast<std::uint64_t>(scheme), millis(overlap), static_cast<std::uint64_t>(replication)});
  sc.missing_frac = 0.0;
  return sc;
}

ReplicationResult run_replication(const ExperimentMatrix& matrix, Scheme scheme, double overlap, double missing,
                                  int replication) {
  ReplicationResult res;
  res.scheme = scheme;
  res.overlap = overlap;
  res.missing_frac = missing;
  res.replication = replication;
  try {
    const SimConfig sc = replication_config(matrix, scheme, overlap, replication);
    res.seed = sc.seed;
    const TruthBundle complete = generate_population(sc);
    const auto schema = sim_schema();
    const ComparisonStore comps = build_comparisons(complete.file_a, complete.file_b, schema);

    RunConfig rc = matrix.run;
    rc.outcome_model = matrix.outcome_model.value_or(correct_outcome_model(scheme));
    const std::uint64_t tag = millis(missing);

    // ATEL_0: posterior mean of the known-link chain on the complete data.
    ChainOptions known;
    known.known_links = complete.true_links;
    known.store_z = false;
    RunConfig kc = rc;
    kc.mode = Mode::known_link;
    kc.seed = derive_seed(res.seed, {3});
    const McmcTrace reference = run_chain({complete.file_a, complete.file_b, &comps}, kc, known);
    res.atel0 = summarize_atel(reference.post_burn_in_atel()).mean;

    TruthBundle data = complete;
    if (missing > 0.0) {
      Rng mrng(derive_seed(res.seed, {0x4D495353, tag}));
      data.file_a = inject_missing_outcomes(std::move(data.file_a), missing, mrng);
    }
    const ChainInputs in{data.file_a, data.file_b, &comps};

    for (Mode mode : matrix.modes) {
      RunConfig mc = rc;
      mc.mode = mode;
      mc.seed = derive_seed(res.seed, {tag, static_cast<std::uint64_t>(mode) + 1});
      if (mode == Mode::joint) {
        const McmcTrace t = run_chain(in, mc);
        const auto links = one_to_one_modal_links(posterior_mode_links(t), data.file_a.size());
        res.modes.push_back(summarize_mode(mode, t, &links, data, res.atel0));
        if (matrix.trace_sink) matrix.trace_sink(res, mode, t);
      } else if (mode == Mode::two_stage) {
        ChainOptions opt;
        const TwoStageResult ts = run_two_stage_pipeline(in, mc, opt);
        const auto links = one_to_one_modal_links(ts.stage1_links, data.file_a.size());
        res.modes.push_back(summarize_mode(mode, ts.trace, &links, data, res.atel0));
        if (matrix.trace_sink) matrix.trace_sink(res, mode, ts.trace);
      } else if (missing == 0.0) {
        res.modes.push_back(summarize_mode(mode, reference, nullptr, data, res.atel0));
        if (matrix.trace_sink) matrix.trace_sink(res, mode, reference);
      } else {
        const McmcTrace t = run_chain(in, mc, known);
        res.modes.push_back(summarize_mode(mode, t, nullptr, data, res.atel0));
        if (matrix.trace_sink) matrix.trace_sink(res, mode, t);
      }
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    res.modes.clear();
  }
  return res;
}

ExperimentReport run_experiment_matrix(const ExperimentMatrix& matrix, const ProgressFn& progress) {
  if (matrix.replications < 1) throw ConfigError("replications must be positive");
  if (matrix.modes.empty()) throw ConfigError("at least one mode is required");
  for (Scheme s : matrix.schemes)
    for (double o : matrix.overlaps) replication_config(matrix, s, o, 0).validate();
  matrix.run.validate();

  struct Task {
    Scheme scheme;
    double overlap, missing;
    int rep;
  };
  std::vector<Task> tasks;
  for (Scheme s : matrix.schemes) {
    for (double o : matrix.overlaps) {
      for (double m : matrix.missing_fracs) {
        for (int r = 0; r < matrix.replications; ++r) tasks.push_back({s, o, m, r});
      }
    }
  }

  ExperimentReport report;
  report.replications.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  const auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const Task& t = tasks[k];
      auto r = run_replication(matrix, t.scheme, t.overlap, t.missing, t.rep);
      std::lock_guard lock(mu);
      report.replications[k] = std::move(r);
      if (progress) progress(report.replications[k]);
    }
  };
  const unsigned n_threads = std::max(1U, std::min<unsigned>(matrix.threads, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (Scheme s : matrix.schemes) {
    for (double o : matrix.overlaps) {
      for (double m : matrix.missing_fracs) {
        for (Mode mode : matrix.modes) {
          CellSummary c;
          c.scheme = s;
          c.outcome_model = matrix.outcome_model.value_or(correct_outcome_model(s));
          c.overlap = o;
          c.missing_frac = m;
          c.mode = mode;
          std::vector<double> ppv, npv, mse, mean, q025, q50, q975;
          for (const auto& r : report.replications) {
            if (r.scheme != s || r.overlap != o || r.missing_frac != m) continue;
            ++c.replications;
            if (!r.ok) {
              ++c.failed;
              continue;
            }
            for (const auto& mr : r.modes) {
              if (mr.mode != mode) continue;
              if (mr.ppv) ppv.push_back(*mr.ppv);
              if (mr.npv) npv.push_back(*mr.npv);
              mse.push_back(mr.mse);
              mean.push_back(mr.atel.mean);
              q025.push_back(mr.atel.q025);
              q50.push_back(mr.atel.q50);
              q975.push_back(mr.atel.q975);
            }
          }
          c.partial = c.failed > 0;
          c.ppv = summarize_optional(ppv);
          c.npv = summarize_optional(npv);
          c.mse = summarize_optional(mse);
          c.atel_mean = mean_se(mean);
          c.atel_q025 = mean_se(q025);
          c.atel_q50 = mean_se(q50);
          c.atel_q975 = mean_se(q975);
          report.cells.push_back(c);
        }
      }
    }
  }
  return report;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "scheme,outcome_model,overlap,missing,mode,replications,failed,partial,ppv,ppv_se,npv,npv_se,mse,mse_se,"
         "atel_mean,atel_q025,atel_q50,atel_q975\n";
  for (const auto& c : report.cells) {
    const std::vector<std::string> row{std::string(to_string(c.scheme)),
                                       std::string(to_string(c.outcome_model)),
                                       format_sig(c.overlap),
                                       format_sig(c.missing_frac),
                                       std::string(to_string(c.mode)),
                                       std::to_string(c.replications),
                                       std::to_string(c.failed),
                                       c.partial ? "1" : "0",
                                       opt_num(c.ppv, false),
                                       opt_num(c.ppv, true),
                                       opt_num(c.npv, false),
                                       opt_num(c.npv, true),
                                       opt_num(c.mse, false),
                                       opt_num(c.mse, true),
                                       c.atel_mean.n ? format_sig(c.atel_mean.mean) : "NA",
                                       c.atel_q025.n ? format_sig(c.atel_q025.mean) : "NA",
                                       c.atel_q50.n ? format_sig(c.atel_q50.mean) : "NA",
                                       c.atel_q975.n ? format_sig(c.atel_q975.mean) : "NA"};
    write_csv_row(out, row);
  }
}

void write_report_json(std::ostream& out, const ExperimentReport& report, const ExperimentMatrix& matrix) {
  using nlohmann::ordered_json;
  const auto stat = [](const std::optional<MeanSe>& v) -> ordered_json {
    if (!v) return nullptr;
    return {{"mean", v->mean}, {"se", v->se}, {"n", v->n}};
  };
  ordered_json j;
  j["master_seed"] = matrix.master_seed;
  j["replications"] = matrix.replications;
  j["n_a"] = matrix.base.n_a;
  j["n_b"] = matrix.base.n_b;
  j["iterations"] = matrix.run.iterations;
  j["burn_in"] = matrix.run.burn_in;
  j["typo_prob"] = matrix.base.perturbation.typo_prob;
  j["digit_swap_prob"] = matrix.base.perturbation.digit_swap_prob;
  j["zipf_exponent"] = matrix.base.names.zipf_exponent;
  ordered_json cells = ordered_json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"scheme", to_string(c.scheme)},
                     {"outcome_model", to_string(c.outcome_model)},
                     {"overlap", c.overlap},
                     {"missing", c.missing_frac},
                     {"mode", to_string(c.mode)},
                     {"replications", c.replications},
                     {"failed", c.failed},
                     {"partial", c.partial},
                     {"ppv", stat(c.ppv)},
                     {"npv", stat(c.npv)},
                     {"mse", stat(c.mse)},
                     {"atel_mean", c.atel_mean.mean},
                     {"atel_q025", c.atel_q025.mean},
                     {"atel_q50", c.atel_q50.mean},
                     {"atel_q975", c.atel_q975.mean}});
  }
  j["cells"] = std::move(cells);
  ordered_json failures = ordered_json::array();
  for (const auto& r : report.replications) {
    if (r.ok) continue;
    failures.push_back({{"scheme", to_string(r.scheme)},
                        {"overlap", r.overlap},
                        {"missing", r.missing_frac},
                        {"replication", r.replication},
                        {"error", r.error}});
  }
  j["failures"] = std::move(failures);
  out << j.dump(2) << '\n';
}

}  // namespace jointlink
