// jointlink: simulate / link / report front end.
//
// Exit codes: 0 success, 1 runtime or model error, 2 usage error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "jointlink/causal.hpp"
#include "jointlink/comparators.hpp"
#include "jointlink/errors.hpp"
#include "jointlink/linkage.hpp"
#include "jointlink/records_io.hpp"
#include "jointlink/sampler.hpp"
#include "jointlink/simgen.hpp"
#include "jointlink/trace.hpp"

namespace fs = std::filesystem;
using namespace jointlink;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  unsigned threads = std::max(1U, std::thread::hardware_concurrency());
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "override one configuration key (key=value), repeatable");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_config(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    apply_config_value(rc, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  rc.validate();
  return rc;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::string opt_sig(const std::optional<double>& v) { return v ? format_sig(*v) : "NA"; }

// Fixed-width plain-text rendering of a CSV-like table.
void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << r[c];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------------------------

struct SimulateFlags {
  CommonFlags common;
  std::vector<std::string> schemes;
  std::vector<double> overlaps;
  std::vector<std::string> modes{"joint", "two_stage", "known_link"};
  std::vector<double> missing{0.0};
  int reps = 20;
  std::uint64_t seed = 0;
  std::size_t n_a = SimConfig{}.n_a;
  std::size_t n_b = SimConfig{}.n_b;
  std::string outcome_model;
  double typo_prob = PerturbationConfig{}.typo_prob;
  double digit_swap_prob = PerturbationConfig{}.digit_swap_prob;
  double zipf = NamePoolConfig{}.zipf_exponent;
  std::string out, json, trace_dir, data_dir;
  bool quiet = false;
};

std::string cell_tag(Scheme s, double overlap, double missing, int rep) {
  std::ostringstream os;
  os << to_string(s) << "_o" << std::llround(overlap * 1000) << "_m" << std::llround(missing * 1000) << "_r" << rep;
  return os.str();
}

int cmd_simulate(const SimulateFlags& f) {
  ExperimentMatrix mx;
  mx.run = resolve_config(f.common);
  mx.schemes.clear();
  for (const auto& s : f.schemes) mx.schemes.push_back(parse_scheme(s));
  mx.overlaps = f.overlaps;
  mx.missing_fracs = f.missing;
  mx.modes.clear();
  for (const auto& m : f.modes) mx.modes.push_back(parse_mode(m));
  mx.replications = f.reps;
  mx.master_seed = f.seed;
  mx.threads = f.common.threads;
  if (!f.outcome_model.empty()) mx.outcome_model = parse_outcome_model(f.outcome_model);
  mx.base.n_a = f.n_a;
  mx.base.n_b = f.n_b;
  mx.base.overlap = std::min(f.n_a, f.n_b);
  mx.base.perturbation.typo_prob = f.typo_prob;
  mx.base.perturbation.digit_swap_prob = f.digit_swap_prob;
  mx.base.names.zipf_exponent = f.zipf;
  mx.base.validate();

  if (!f.trace_dir.empty()) {
    fs::create_directories(f.trace_dir);
    const fs::path dir = f.trace_dir;
    mx.trace_sink = [dir](const ReplicationResult& r, Mode m, const McmcTrace& t) {
      auto out = open_out(dir / (cell_tag(r.scheme, r.overlap, r.missing_frac, r.replication) + "_" +
                                 std::string(to_string(m)) + ".csv"));
      write_trace_csv(out, t);
    };
  }
  if (!f.data_dir.empty()) {
    for (Scheme s : mx.schemes)
      for (double o : mx.overlaps)
        for (int r = 0; r < mx.replications; ++r) {
          const TruthBundle b = generate_population(replication_config(mx, s, o, r));
          write_sim_files(f.data_dir, b, cell_tag(s, o, 0.0, r) + "_");
        }
  }

  std::mutex mu;
  std::size_t done = 0;
  const std::size_t total = mx.schemes.size() * mx.overlaps.size() * mx.missing_fracs.size() * mx.replications;
  ProgressFn progress;
  if (!f.quiet) {
    progress = [&](const ReplicationResult& r) {
      std::lock_guard lock(mu);
      ++done;
      std::cerr << "[" << done << "/" << total << "] " << cell_tag(r.scheme, r.overlap, r.missing_frac, r.replication)
                << (r.ok ? "" : " FAILED: " + r.error) << '\n';
    };
  }
  const ExperimentReport report = run_experiment_matrix(mx, progress);

  if (f.out.empty()) {
    write_report_csv(std::cout, report);
  } else {
    auto out = open_out(f.out);
    write_report_csv(out, report);
  }
  if (!f.json.empty()) {
    auto out = open_out(f.json);
    write_report_json(out, report, mx);
  }
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct LinkFlags {
  CommonFlags common;
  std::string file_a, file_b;
  std::vector<std::string> fields;
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::string treatment = "w";
  std::string mode, outcome_model;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string truth;
  int z_every = 0;
};

// File B record j -> File A row holding the same truth id, kNoLink otherwise.
std::vector<std::int32_t> truth_links(const CsvTable& a, const CsvTable& b, const std::string& column) {
  const std::size_t ca = a.column(column), cb = b.column(column);
  std::map<std::string, std::int32_t> index;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (!index.emplace(a.rows[i][ca], static_cast<std::int32_t>(i)).second) {
      throw DomainError("duplicate truth id '" + a.rows[i][ca] + "' in File A");
    }
  }
  std::vector<std::int32_t> z(b.rows.size(), kNoLink);
  std::map<std::string, std::size_t> seen;
  for (std::size_t j = 0; j < b.rows.size(); ++j) {
    const auto& id = b.rows[j][cb];
    if (!seen.emplace(id, j).second) throw DomainError("duplicate truth id '" + id + "' in File B");
    if (auto it = index.find(id); it != index.end()) z[j] = it->second;
  }
  return z;
}

int cmd_link(const LinkFlags& f) {
  RunConfig rc = resolve_config(f.common);
  if (!f.mode.empty()) rc.mode = parse_mode(f.mode);
  if (!f.outcome_model.empty()) rc.outcome_model = parse_outcome_model(f.outcome_model);
  if (f.seed) rc.seed = *f.seed;
  if (rc.mode == Mode::known_link && f.truth.empty()) throw UsageError("--mode known_link requires --truth");

  std::vector<LinkFieldSpec> schema;
  for (const auto& s : f.fields) schema.push_back(parse_field_spec(s));
  validate_schema(schema);

  const CsvTable ta = read_csv(f.file_a), tb = read_csv(f.file_b);
  const auto file_a = outcome_records_from(ta, schema, f.outcome);
  const auto file_b = covariate_records_from(tb, schema, f.covariates, f.treatment);
  std::optional<std::vector<std::int32_t>> truth;
  if (!f.truth.empty()) truth = truth_links(ta, tb, f.truth);

  const ComparisonStore comps = build_comparisons(file_a, file_b, schema);
  const ChainInputs in{file_a, file_b, &comps};

  McmcTrace trace;
  std::optional<McmcTrace> stage1;
  std::vector<ModalLink> modal;
  if (rc.mode == Mode::two_stage) {
    TwoStageResult ts = run_two_stage_pipeline(in, rc);
    modal = std::move(ts.stage1_links);
    stage1 = std::move(ts.stage1);
    trace = std::move(ts.trace);
  } else {
    ChainOptions opt;
    if (rc.mode == Mode::known_link) opt.known_links = *truth;
    trace = run_chain(in, rc, opt);
    modal = posterior_mode_links(trace);
  }
  const auto resolved = one_to_one_modal_links(modal, file_a.size());

  const fs::path dir = f.out_dir;
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "links.csv");
    write_csv_row(out, std::vector<std::string>{"j", "i", "probability", "resolved_i"});
    for (std::size_t j = 0; j < modal.size(); ++j) {
      const std::string i = modal[j].i == kNoLink ? "NA" : std::to_string(modal[j].i);
      const std::string ri = resolved[j] == kNoLink ? "NA" : std::to_string(resolved[j]);
      write_csv_row(out, std::vector<std::string>{std::to_string(j), i, format_sig(modal[j].probability), ri});
    }
  }
  {
    auto out = open_out(dir / "trace.csv");
    write_trace_csv(out, trace);
  }
  if (stage1) {
    auto out = open_out(dir / "stage1_trace.csv");
    write_trace_csv(out, *stage1);
  }
  if (f.z_every > 0) {
    auto out = open_out(dir / "z_snapshots.csv");
    write_z_snapshots_csv(out, stage1 ? *stage1 : trace, f.z_every);
  }

  const auto draws = trace.post_burn_in_atel();
  std::optional<AtelPosterior> post;
  if (!draws.empty()) post = summarize_atel(draws);
  LinkageAccuracy acc;
  if (truth) acc = compute_ppv_npv(resolved, *truth, file_a.size(), file_b.size());
  const auto n_links = std::count_if(resolved.begin(), resolved.end(), [](std::int32_t i) { return i != kNoLink; });

  std::vector<std::vector<std::string>> rows{
      {"mode", "outcome_model", "modal_links", "draws", "atel_mean", "atel_sd", "q025", "q50", "q975", "ppv", "npv"}};
  rows.push_back({std::string(to_string(rc.mode)), std::string(to_string(rc.outcome_model)), std::to_string(n_links),
                  std::to_string(draws.size()), post ? format_sig(post->mean) : "NA",
                  post ? format_sig(post->sd) : "NA", post ? format_sig(post->q025) : "NA",
                  post ? format_sig(post->q50) : "NA", post ? format_sig(post->q975) : "NA", opt_sig(acc.ppv),
                  opt_sig(acc.npv)});
  {
    auto out = open_out(dir / "atel.csv");
    for (const auto& r : rows) write_csv_row(out, r);
  }
  print_table(std::cout, rows);
  if (trace.nonconverged_fits > 0) {
    std::cerr << "warning: " << trace.nonconverged_fits << " propensity fits hit the iteration cap\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct ReportFlags {
  std::vector<std::string> traces;
  std::string out;
  std::string density;
  int bins = 40;
};

McmcTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read trace " + path);
  return read_trace_csv(in);
}

int cmd_report(const ReportFlags& f) {
  std::vector<std::vector<std::string>> rows{{"trace", "mode", "outcome_model", "seed", "iterations", "burn_in",
                                              "draws", "mean_links", "atel_mean", "atel_sd", "q025", "q50", "q975",
                                              "skipped"}};
  std::vector<std::vector<std::string>> grid{{"trace", "bin", "lo", "hi", "count", "density"}};
  for (const auto& path : f.traces) {
    const McmcTrace t = load_trace(path);
    const auto draws = t.post_burn_in_atel();
    double links = 0.0;
    for (std::size_t k = static_cast<std::size_t>(t.burn_in); k < t.records.size(); ++k) links += t.records[k].n_links;
    const auto post_len = t.records.size() > static_cast<std::size_t>(t.burn_in) ? t.records.size() - t.burn_in : 0;
    std::vector<std::string> row{path,
                                 std::string(to_string(t.mode)),
                                 std::string(to_string(t.outcome_model)),
                                 std::to_string(t.seed),
                                 std::to_string(t.iterations),
                                 std::to_string(t.burn_in),
                                 std::to_string(draws.size()),
                                 post_len ? format_sig(links / post_len) : "NA"};
    if (draws.empty()) {
      row.insert(row.end(), 5, "NA");
    } else {
      const auto p = summarize_atel(draws);
      for (double v : {p.mean, p.sd, p.q025, p.q50, p.q975}) row.push_back(format_sig(v));
    }
    row.push_back(std::to_string(t.skipped_iterations));
    rows.push_back(std::move(row));

    if (!f.density.empty() && !draws.empty()) {
      const auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
      double lo = *mn, hi = *mx;
      if (hi <= lo) {
        lo -= 0.5;
        hi += 0.5;
      }
      const double width = (hi - lo) / f.bins;
      std::vector<std::size_t> count(f.bins, 0);
      for (double d : draws) {
        const auto b = std::min<std::size_t>(static_cast<std::size_t>((d - lo) / width), f.bins - 1);
        ++count[b];
      }
      for (int b = 0; b < f.bins; ++b) {
        grid.push_back({path, std::to_string(b), format_sig(lo + b * width), format_sig(lo + (b + 1) * width),
                        std::to_string(count[b]),
                        format_sig(static_cast<double>(count[b]) / (draws.size() * width))});
      }
    }
  }
  if (!f.out.empty()) {
    auto out = open_out(f.out);
    for (const auto& r : rows) write_csv_row(out, r);
  }
  if (!f.density.empty()) {
    auto out = open_out(f.density);
    for (const auto& r : grid) write_csv_row(out, r);
  }
  print_table(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint Bayesian record linkage and causal effect estimation"};
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* s = app.add_subcommand("simulate", "run the simulation study and write a report");
  add_common(s, sim.common);
  s->add_option("--scheme", sim.schemes, "outcome scheme(s): L, N")->required()->delimiter(',');
  s->add_option("--overlap", sim.overlaps, "overlap fraction(s)")->required()->delimiter(',');
  s->add_option("--mode", sim.modes, "mode(s): joint, two_stage, known_link")->delimiter(',')->capture_default_str();
  s->add_option("--missing", sim.missing, "missing-outcome fraction(s)")->delimiter(',');
  s->add_option("--reps", sim.reps, "replications per cell")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--seed", sim.seed, "master seed")->capture_default_str();
  s->add_option("--n-a", sim.n_a, "File A size")->capture_default_str();
  s->add_option("--n-b", sim.n_b, "File B size")->capture_default_str();
  s->add_option("--outcome-model", sim.outcome_model, "parametric or spline (default: correct for the scheme)");
  s->add_option("--typo-prob", sim.typo_prob, "per-name typo probability")->capture_default_str();
  s->add_option("--digit-swap-prob", sim.digit_swap_prob, "per-date digit swap probability")->capture_default_str();
  s->add_option("--zipf", sim.zipf, "name frequency skew exponent")->capture_default_str();
  s->add_option("--out", sim.out, "report CSV (default: stdout)");
  s->add_option("--json", sim.json, "report JSON");
  s->add_option("--trace-dir", sim.trace_dir, "write one trace CSV per replication and mode");
  s->add_option("--data-dir", sim.data_dir, "write the generated File A / File B CSVs");
  s->add_flag("--quiet", sim.quiet, "no progress on stderr");

  LinkFlags lk;
  auto* l = app.add_subcommand("link", "link two CSV files and estimate the ATEL");
  add_common(l, lk.common);
  l->add_option("--file-a", lk.file_a, "File A CSV (outcome)")->required()->check(CLI::ExistingFile);
  l->add_option("--file-b", lk.file_b, "File B CSV (covariates, treatment)")->required()->check(CLI::ExistingFile);
  l->add_option("--field", lk.fields, "linking field name:nominal or name:string:threshold, repeatable")->required();
  l->add_option("--outcome", lk.outcome, "File A outcome column")->capture_default_str();
  l->add_option("--covariates", lk.covariates, "File B covariate columns")->required()->delimiter(',');
  l->add_option("--treatment", lk.treatment, "File B treatment column")->capture_default_str();
  l->add_option("--mode", lk.mode, "joint, two_stage or known_link (overrides the config)");
  l->add_option("--outcome-model", lk.outcome_model, "parametric or spline (overrides the config)");
  l->add_option("--seed", lk.seed, "chain seed (overrides the config)");
  l->add_option("--out-dir", lk.out_dir, "output directory")->required();
  l->add_option("--truth", lk.truth, "id column present in both files, for PPV/NPV and known_link mode");
  l->add_option("--z-every", lk.z_every, "write every k-th post burn-in z snapshot")->check(CLI::NonNegativeNumber);

  ReportFlags rp;
  auto* r = app.add_subcommand("report", "summarize trace files");
  r->add_option("--trace,traces", rp.traces, "trace CSV, repeatable")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rp.out, "summary CSV");
  r->add_option("--density", rp.density, "ATEL histogram grid CSV");
  r->add_option("--bins", rp.bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (l->parsed()) return cmd_link(lk);
    return cmd_report(rp);
  } catch (const UsageError& e) {
    std::cerr << "jointlink: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "jointlink: error: " << e.what() << '\n';
    return 1;
  }
}
