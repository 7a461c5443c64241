#pragma once

// File A / File B data model, CSV ingestion and run configuration.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jointlink {

enum class FieldKind { nominal, string };

struct LinkFieldSpec {
  std::string name;
  FieldKind kind = FieldKind::nominal;
  // Similarity threshold in (0, 1]; set iff kind == string.
  std::optional<double> string_threshold;

  static LinkFieldSpec nominal(std::string name) { return {std::move(name), FieldKind::nominal, std::nullopt}; }
  static LinkFieldSpec string(std::string name, double threshold) {
    return {std::move(name), FieldKind::string, threshold};
  }
  bool operator==(const LinkFieldSpec&) const = default;
};

// Throws SchemaError on duplicate names or a threshold that does not match the kind.
void validate_schema(std::span<const LinkFieldSpec> schema);

// Parses "name:nominal" or "name:string:0.95".
LinkFieldSpec parse_field_spec(std::string_view text);

// A File A row: linking fields and the (possibly missing) outcome.
struct OutcomeRecord {
  std::size_t row_id = 0;
  std::vector<std::string> link_fields;
  std::optional<double> y;
  bool operator==(const OutcomeRecord&) const = default;
};

// A File B row: linking fields, covariates and binary treatment.
struct CovariateRecord {
  std::size_t row_id = 0;
  std::vector<std::string> link_fields;
  std::vector<double> x;
  int w = 0;
  bool operator==(const CovariateRecord&) const = default;
};

inline constexpr std::string_view kMissingToken = "NA";

// RFC-4180 style table. Rows are returned without the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws SchemaError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

std::vector<OutcomeRecord> load_file_a(const std::filesystem::path& path, std::span<const LinkFieldSpec> schema,
                                       std::string_view outcome_column);
std::vector<CovariateRecord> load_file_b(const std::filesystem::path& path, std::span<const LinkFieldSpec> schema,
                                         std::span<const std::string> covariate_columns,
                                         std::string_view treatment_column);

// Same as the loaders but over already-parsed tables.
std::vector<OutcomeRecord> outcome_records_from(const CsvTable& table, std::span<const LinkFieldSpec> schema,
                                                std::string_view outcome_column);
std::vector<CovariateRecord> covariate_records_from(const CsvTable& table, std::span<const LinkFieldSpec> schema,
                                                    std::span<const std::string> covariate_columns,
                                                    std::string_view treatment_column);

// Writers emit full-precision numbers so that load(write(x)) == x.
void write_file_a(std::ostream& out, std::span<const OutcomeRecord> records, std::span<const LinkFieldSpec> schema,
                  std::string_view outcome_column = "y");
void write_file_b(std::ostream& out, std::span<const CovariateRecord> records, std::span<const LinkFieldSpec> schema,
                  std::span<const std::string> covariate_columns, std::string_view treatment_column = "w");

// Shortest decimal text that parses back to the same double.
std::string format_exact(double v);
// Fixed significant digits, for human-facing reports.
std::string format_sig(double v, int digits = 6);

enum class OutcomeModel { parametric, spline };
enum class Mode { joint, two_stage, known_link };

std::string_view to_string(OutcomeModel m) noexcept;
std::string_view to_string(Mode m) noexcept;
OutcomeModel parse_outcome_model(std::string_view text);
Mode parse_mode(std::string_view text);

struct Hyperparameters {
  double a = 1.0, b = 1.0;              // Beta prior on theta_m, theta_u
  double alpha_pi = 1.0, beta_pi = 1.0;  // Beta prior on the link proportion
  double a_sigma = 1.0, b_sigma = 1.0;   // IG prior on sigma^2
  double a_sigma1 = 1.0, b_sigma1 = 1.0; // IG prior on sigma_1^2
  double r1 = 1.0, r2 = 1.0;             // Gamma shape on lambda_1^2, lambda_2^2
  double delta1 = 1.0, delta2 = 1.0;     // Gamma rate on lambda_1^2, lambda_2^2
  bool operator==(const Hyperparameters&) const = default;
};

struct SplineConfig {
  int s = 2;
  int m_knots = 15;
  bool operator==(const SplineConfig&) const = default;
};

struct RunConfig {
  OutcomeModel outcome_model = OutcomeModel::parametric;
  Mode mode = Mode::joint;
  int iterations = 2000;
  int burn_in = 1500;
  std::uint64_t seed = 0;
  Hyperparameters hyper;
  SplineConfig spline;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Applies one "key = value" assignment; throws ConfigError for unknown keys or bad values.
void apply_config_value(RunConfig& config, std::string_view key, std::string_view value);
// Flat key = value grammar with '#' comments. Result is validated.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text form accepted by parse_config.
std::string to_config_text(const RunConfig& config);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace jointlink
