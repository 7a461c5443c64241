#include "jointlink/records_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "jointlink/errors.hpp"

namespace jointlink {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_integer(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string> extract_link_fields(const CsvTable& table, std::span<const std::size_t> cols,
                                             std::size_t r) {
  std::vector<std::string> out;
  out.reserve(cols.size());
  for (std::size_t c : cols) {
    const std::string& v = table.rows[r][c];
    if (v.empty() || v == kMissingToken) {
      throw ParseError("missing value in linking field '" + table.header[c] + "'", r + 2);
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> link_columns(const CsvTable& table, std::span<const LinkFieldSpec> schema) {
  validate_schema(schema);
  std::vector<std::size_t> cols;
  for (const auto& f : schema) cols.push_back(table.column(f.name));
  return cols;
}

bool needs_quoting(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos || (!s.empty() && (s.front() == ' ' || s.back() == ' '));
}

}  // namespace

void validate_schema(std::span<const LinkFieldSpec> schema) {
  std::set<std::string> seen;
  for (const auto& f : schema) {
    if (f.name.empty()) throw SchemaError("linking field with empty name");
    if (!seen.insert(f.name).second) throw SchemaError("duplicate linking field '" + f.name + "'");
    if (f.kind == FieldKind::string) {
      if (!f.string_threshold) throw SchemaError("string field '" + f.name + "' needs a threshold");
      const double t = *f.string_threshold;
      if (!(t > 0.0 && t <= 1.0)) throw SchemaError("threshold for '" + f.name + "' must lie in (0, 1]");
    } else if (f.string_threshold) {
      throw SchemaError("nominal field '" + f.name + "' must not carry a threshold");
    }
  }
}

LinkFieldSpec parse_field_spec(std::string_view text) {
  const auto c1 = text.find(':');
  if (c1 == std::string_view::npos) throw SchemaError("field spec '" + std::string(text) + "' lacks a kind");
  std::string name(trim(text.substr(0, c1)));
  const std::string_view rest = text.substr(c1 + 1);
  const auto c2 = rest.find(':');
  const std::string_view kind = trim(rest.substr(0, c2));
  if (kind == "nominal") {
    if (c2 != std::string_view::npos) throw SchemaError("nominal field '" + name + "' takes no threshold");
    return LinkFieldSpec::nominal(std::move(name));
  }
  if (kind == "string") {
    const auto t = c2 == std::string_view::npos ? std::optional<double>{} : parse_double(rest.substr(c2 + 1));
    if (!t) throw SchemaError("string field '" + name + "' needs a numeric threshold");
    LinkFieldSpec spec = LinkFieldSpec::string(std::move(name), *t);
    validate_schema(std::span(&spec, 1));
    return spec;
  }
  throw SchemaError("unknown field kind '" + std::string(kind) + "'");
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError("column '" + std::string(name) + "' not found");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (in_quotes) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw ParseError("quote inside unquoted field", line);
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", record_line);
  if (field_started || !record.empty()) end_record();

  if (records.empty()) throw ParseError("empty file", 1);
  CsvTable table;
  table.header = std::move(records.front());
  std::set<std::string_view> names;
  for (const auto& h : table.header) {
    if (!names.insert(h).second) throw ParseError("duplicate header name '" + h + "'", 1);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(records[r].size()),
                       r + 1);
    }
    table.rows.push_back(std::move(records[r]));
  }
  if (table.rows.empty()) throw ParseError("file has a header but no data rows", 1);
  return table;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out << ',';
    const std::string& f = fields[k];
    if (needs_quoting(f)) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

std::vector<OutcomeRecord> outcome_records_from(const CsvTable& table, std::span<const LinkFieldSpec> schema,
                                                std::string_view outcome_column) {
  const auto cols = link_columns(table, schema);
  const std::size_t ycol = table.column(outcome_column);
  std::vector<OutcomeRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    OutcomeRecord rec;
    rec.row_id = r;
    rec.link_fields = extract_link_fields(table, cols, r);
    const std::string& raw = table.rows[r][ycol];
    if (raw != kMissingToken) {
      rec.y = parse_double(raw);
      if (!rec.y) throw ParseError("non-numeric outcome '" + raw + "'", r + 2);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<CovariateRecord> covariate_records_from(const CsvTable& table, std::span<const LinkFieldSpec> schema,
                                                    std::span<const std::string> covariate_columns,
                                                    std::string_view treatment_column) {
  const auto cols = link_columns(table, schema);
  std::vector<std::size_t> xcols;
  for (const auto& c : covariate_columns) xcols.push_back(table.column(c));
  const std::size_t wcol = table.column(treatment_column);
  std::vector<CovariateRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    CovariateRecord rec;
    rec.row_id = r;
    rec.link_fields = extract_link_fields(table, cols, r);
    for (std::size_t c : xcols) {
      const std::string& raw = table.rows[r][c];
      if (raw == kMissingToken) throw ParseError("missing covariate '" + table.header[c] + "'", r + 2);
      const auto v = parse_double(raw);
      if (!v) throw ParseError("non-numeric covariate '" + raw + "'", r + 2);
      rec.x.push_back(*v);
    }
    const std::string_view w = trim(table.rows[r][wcol]);
    if (w == "0") {
      rec.w = 0;
    } else if (w == "1") {
      rec.w = 1;
    } else {
      throw DomainError("treatment must be 0 or 1, found '" + std::string(w) + "' (row " + std::to_string(r + 2) +
                        ")");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<OutcomeRecord> load_file_a(const std::filesystem::path& path, std::span<const LinkFieldSpec> schema,
                                       std::string_view outcome_column) {
  return outcome_records_from(read_csv(path), schema, outcome_column);
}

std::vector<CovariateRecord> load_file_b(const std::filesystem::path& path, std::span<const LinkFieldSpec> schema,
                                         std::span<const std::string> covariate_columns,
                                         std::string_view treatment_column) {
  return covariate_records_from(read_csv(path), schema, covariate_columns, treatment_column);
}

std::string format_exact(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_sig(double v, int digits) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_file_a(std::ostream& out, std::span<const OutcomeRecord> records, std::span<const LinkFieldSpec> schema,
                  std::string_view outcome_column) {
  std::vector<std::string> row;
  for (const auto& f : schema) row.push_back(f.name);
  row.emplace_back(outcome_column);
  write_csv_row(out, row);
  for (const auto& r : records) {
    row.assign(r.link_fields.begin(), r.link_fields.end());
    row.push_back(r.y ? format_exact(*r.y) : std::string(kMissingToken));
    write_csv_row(out, row);
  }
}

void write_file_b(std::ostream& out, std::span<const CovariateRecord> records, std::span<const LinkFieldSpec> schema,
                  std::span<const std::string> covariate_columns, std::string_view treatment_column) {
  std::vector<std::string> row;
  for (const auto& f : schema) row.push_back(f.name);
  row.insert(row.end(), covariate_columns.begin(), covariate_columns.end());
  row.emplace_back(treatment_column);
  write_csv_row(out, row);
  for (const auto& r : records) {
    row.assign(r.link_fields.begin(), r.link_fields.end());
    for (double x : r.x) row.push_back(format_exact(x));
    row.push_back(r.w ? "1" : "0");
    write_csv_row(out, row);
  }
}

std::string_view to_string(OutcomeModel m) noexcept {
  return m == OutcomeModel::parametric ? "parametric" : "spline";
}

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::joint: return "joint";
    case Mode::two_stage: return "two_stage";
    case Mode::known_link: return "known_link";
  }
  return "joint";
}

OutcomeModel parse_outcome_model(std::string_view text) {
  if (text == "parametric") return OutcomeModel::parametric;
  if (text == "spline") return OutcomeModel::spline;
  throw ConfigError("outcome_model must be parametric or spline, found '" + std::string(text) + "'");
}

Mode parse_mode(std::string_view text) {
  if (text == "joint") return Mode::joint;
  if (text == "two_stage") return Mode::two_stage;
  if (text == "known_link") return Mode::known_link;
  throw ConfigError("mode must be joint, two_stage or known_link, found '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be a positive integer");
  if (burn_in < 0) throw ConfigError("burn_in must be non-negative");
  if (burn_in >= iterations) throw ConfigError("burn_in must be smaller than iterations");
  const std::pair<const char*, double> hs[] = {
      {"a", hyper.a},           {"b", hyper.b},           {"alpha_pi", hyper.alpha_pi}, {"beta_pi", hyper.beta_pi},
      {"a_sigma", hyper.a_sigma}, {"b_sigma", hyper.b_sigma}, {"a_sigma1", hyper.a_sigma1}, {"b_sigma1", hyper.b_sigma1},
      {"r1", hyper.r1},         {"r2", hyper.r2},         {"delta1", hyper.delta1},     {"delta2", hyper.delta2}};
  for (const auto& [name, v] : hs) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a positive real");
  }
  if (spline.s < 1) throw ConfigError("spline.s must be a positive integer");
  if (spline.m_knots < 1) throw ConfigError("spline.m_knots must be a positive integer");
}

void apply_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  auto real = [&](double& dst) {
    const auto v = parse_double(value);
    if (!v) throw ConfigError("value for '" + std::string(key) + "' must be a real number");
    dst = *v;
  };
  auto integer = [&](int& dst) {
    const auto v = parse_integer<int>(value);
    if (!v) throw ConfigError("value for '" + std::string(key) + "' must be an integer");
    dst = *v;
  };
  Hyperparameters& h = config.hyper;
  if (key == "outcome_model") {
    config.outcome_model = parse_outcome_model(value);
  } else if (key == "mode") {
    config.mode = parse_mode(value);
  } else if (key == "iterations") {
    integer(config.iterations);
  } else if (key == "burn_in") {
    integer(config.burn_in);
  } else if (key == "seed") {
    const auto v = parse_integer<std::uint64_t>(value);
    if (!v) throw ConfigError("seed must be an unsigned 64-bit integer");
    config.seed = *v;
  } else if (key == "spline.s") {
    integer(config.spline.s);
  } else if (key == "spline.m_knots") {
    integer(config.spline.m_knots);
  } else if (key == "a") {
    real(h.a);
  } else if (key == "b") {
    real(h.b);
  } else if (key == "alpha_pi") {
    real(h.alpha_pi);
  } else if (key == "beta_pi") {
    real(h.beta_pi);
  } else if (key == "a_sigma") {
    real(h.a_sigma);
  } else if (key == "b_sigma") {
    real(h.b_sigma);
  } else if (key == "a_sigma1") {
    real(h.a_sigma1);
  } else if (key == "b_sigma1") {
    real(h.b_sigma1);
  } else if (key == "r1") {
    real(h.r1);
  } else if (key == "r2") {
    real(h.r2);
  } else if (key == "delta1") {
    real(h.delta1);
  } else if (key == "delta2") {
    real(h.delta2);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_value(config, line.substr(0, eq), line.substr(eq + 1));
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "outcome_model = " << to_string(c.outcome_model) << '\n'
      << "mode = " << to_string(c.mode) << '\n'
      << "iterations = " << c.iterations << '\n'
      << "burn_in = " << c.burn_in << '\n'
      << "seed = " << c.seed << '\n'
      << "spline.s = " << c.spline.s << '\n'
      << "spline.m_knots = " << c.spline.m_knots << '\n';
  const Hyperparameters& h = c.hyper;
  const std::pair<const char*, double> hs[] = {
      {"a", h.a},           {"b", h.b},           {"alpha_pi", h.alpha_pi}, {"beta_pi", h.beta_pi},
      {"a_sigma", h.a_sigma}, {"b_sigma", h.b_sigma}, {"a_sigma1", h.a_sigma1}, {"b_sigma1", h.b_sigma1},
      {"r1", h.r1},         {"r2", h.r2},         {"delta1", h.delta1},     {"delta2", h.delta2}};
  for (const auto& [name, v] : hs) out << name << " = " << format_exact(v) << '\n';
  return out.str();
}

}  // namespace jointlink
