#pragma once

// Synthetic File A / File B populations with perturbed identifiers, and the replication harness.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jointlink/causal.hpp"
#include "jointlink/random.hpp"
#include "jointlink/records_io.hpp"
#include "jointlink/trace.hpp"

namespace jointlink {

enum class Scheme { L, N };

std::string_view to_string(Scheme s) noexcept;
Scheme parse_scheme(std::string_view text);

// Outcome surface: y = m1(e) + m2(e) w + eps.
double scheme_m1(Scheme s, double e) noexcept;
double scheme_m2(Scheme s, double e) noexcept;

struct PerturbationConfig {
  double typo_prob = 0.20;        // per name field
  double digit_swap_prob = 0.25;  // per date field
};

struct NamePoolConfig {
  std::size_t first_names = 2500;
  std::size_t last_names = 2500;
  double zipf_exponent = 1.0;  // name frequencies proportional to rank^-exponent
};

struct SimConfig {
  std::size_t n_a = 1000;
  std::size_t n_b = 1000;
  std::size_t overlap = 900;
  Scheme scheme = Scheme::L;
  std::array<double, 3> alpha{1.0, 1.5, -1.0};
  double noise_sd = 1.0;
  double missing_frac = 0.0;
  PerturbationConfig perturbation;
  NamePoolConfig names;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Overlap given as a fraction of min(n_a, n_b), rounded to the nearest record.
std::size_t overlap_count(double fraction, std::size_t n_a, std::size_t n_b);

// fname, lname (string, 0.95), bdate (MMDD), byear.
std::vector<LinkFieldSpec> sim_schema();
std::vector<std::string> sim_covariate_columns();

// Deterministic syllable-built pools of distinct upper-case names.
std::vector<std::string> first_name_pool(std::size_t n);
std::vector<std::string> last_name_pool(std::size_t n);

enum class IdentifierKind { text, date };

// Text fields get one substitution, insertion or deletion with typo_prob; date fields get one
// swap of adjacent distinct digits with digit_swap_prob.
std::vector<std::string> perturb_identifiers(std::span<const std::string> fields, std::span<const IdentifierKind> kinds,
                                             const PerturbationConfig& config, Rng& rng);

// Blanks exactly round(frac * n_a) outcomes chosen uniformly at random.
std::vector<OutcomeRecord> inject_missing_outcomes(std::vector<OutcomeRecord> file_a, double frac, Rng& rng);

struct TruthBundle {
  std::vector<OutcomeRecord> file_a;
  std::vector<CovariateRecord> file_b;
  std::vector<std::int32_t> true_links;  // per File B record, kNoLink for none
  std::vector<std::size_t> id_a, id_b;   // synthetic individual behind each record
  std::vector<double> e_b;               // true propensity of each File B record
  std::vector<double> effect_b;          // m2(e) of each File B record
  std::optional<double> atel0;           // filled from a known-link run
};

double true_propensity(const std::array<double, 3>& alpha, std::span<const double> x) noexcept;

// Missing outcomes are injected from a stream derived from the seed, so a population does not
// depend on missing_frac.
TruthBundle generate_population(const SimConfig& config);

// file_a.csv / file_b.csv with the individual id as the first column.
void write_sim_files(const std::filesystem::path& dir, const TruthBundle& bundle, const std::string& prefix = "");

// ---------------------------------------------------------------------------------------------
// Replication harness

struct ReplicationResult;

struct ExperimentMatrix {
  std::vector<Scheme> schemes{Scheme::L, Scheme::N};
  std::vector<double> overlaps{0.9, 0.5, 0.1};
  std::vector<double> missing_fracs{0.0};
  std::vector<Mode> modes{Mode::joint, Mode::two_stage, Mode::known_link};
  int replications = 20;
  // Unset: parametric for Scheme L and spline for Scheme N (the correct specifications).
  std::optional<OutcomeModel> outcome_model;
  SimConfig base;
  RunConfig run;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  // Called with every finished mode chain (from worker threads, so it must be thread-safe).
  // For two_stage the trace is the stage-2 chain.
  std::function<void(const ReplicationResult&, Mode, const McmcTrace&)> trace_sink;
};

OutcomeModel correct_outcome_model(Scheme s) noexcept;

struct ModeResult {
  Mode mode = Mode::joint;
  std::optional<double> ppv, npv;
  double mse = 0.0;
  AtelPosterior atel;
};

struct ReplicationResult {
  Scheme scheme = Scheme::L;
  double overlap = 0.0;
  double missing_frac = 0.0;
  int replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double atel0 = 0.0;
  std::vector<ModeResult> modes;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  int n = 0;
};

struct CellSummary {
  Scheme scheme = Scheme::L;
  OutcomeModel outcome_model = OutcomeModel::parametric;
  double overlap = 0.0;
  double missing_frac = 0.0;
  Mode mode = Mode::joint;
  int replications = 0;
  int failed = 0;
  bool partial = false;
  std::optional<MeanSe> ppv, npv;
  std::optional<MeanSe> mse;
  MeanSe atel_mean, atel_q025, atel_q50, atel_q975;
};

struct ExperimentReport {
  std::vector<ReplicationResult> replications;
  std::vector<CellSummary> cells;
  const CellSummary* find(Scheme s, double overlap, double missing, Mode m) const;
};

MeanSe mean_se(std::span<const double> values);

// Population settings of one replication (complete data, missing_frac = 0).
SimConfig replication_config(const ExperimentMatrix& matrix, Scheme scheme, double overlap, int replication);

// One replication: population, comparisons, the known-link reference chain, then each mode.
ReplicationResult run_replication(const ExperimentMatrix& matrix, Scheme scheme, double overlap, double missing,
                                  int replication);

using ProgressFn = std::function<void(const ReplicationResult&)>;
ExperimentReport run_experiment_matrix(const ExperimentMatrix& matrix, const ProgressFn& progress = {});

// One row per (scheme, overlap, missing, mode) with mean and SE columns.
void write_report_csv(std::ostream& out, const ExperimentReport& report);
void write_report_json(std::ostream& out, const ExperimentReport& report, const ExperimentMatrix& matrix);

}  // namespace jointlink
