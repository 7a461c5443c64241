#include "jointlink/trace.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "jointlink/errors.hpp"

namespace jointlink {
namespace {

constexpr std::string_view kTraceHeader =
    "iteration,post_burn_in,n_links,atel,theta_m_mean,theta_u_mean,sigma2,mu1,sigma1_sq,coef0,coef1,coef2,"
    "outcome_skipped";

std::string num(double v) { return std::isnan(v) ? std::string("NA") : format_exact(v); }

double parse_num(const std::string& s, std::size_t line) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "' in trace", line);
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::size_t line) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("bad integer '" + std::string(s) + "' in trace", line);
  }
  return v;
}

}  // namespace

std::vector<double> McmcTrace::post_burn_in_atel() const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.iteration >= burn_in && std::isfinite(r.atel)) out.push_back(r.atel);
  }
  return out;
}

void write_trace_csv(std::ostream& out, const McmcTrace& t) {
  out << "# jointlink trace\n"
      << "# mode=" << to_string(t.mode) << '\n'
      << "# outcome_model=" << to_string(t.outcome_model) << '\n'
      << "# seed=" << t.seed << '\n'
      << "# iterations=" << t.iterations << '\n'
      << "# burn_in=" << t.burn_in << '\n'
      << "# n_a=" << t.n_a << '\n'
      << "# n_b=" << t.n_b << '\n'
      << "# skipped_iterations=" << t.skipped_iterations << '\n'
      << "# nonconverged_fits=" << t.nonconverged_fits << '\n'
      << kTraceHeader << '\n';
  for (const auto& r : t.records) {
    out << r.iteration << ',' << (r.iteration >= t.burn_in ? 1 : 0) << ',' << r.n_links << ',' << num(r.atel) << ','
        << num(r.theta_m_mean) << ',' << num(r.theta_u_mean) << ',' << num(r.sigma2) << ',' << num(r.mu1) << ','
        << num(r.sigma1_sq) << ',' << num(r.coef[0]) << ',' << num(r.coef[1]) << ',' << num(r.coef[2]) << ','
        << (r.outcome_skipped ? 1 : 0) << '\n';
  }
}

McmcTrace read_trace_csv(std::istream& in) {
  McmcTrace t;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  bool saw_magic = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string_view body(line);
      body.remove_prefix(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body == "jointlink trace") {
        saw_magic = true;
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string_view key = body.substr(0, eq), value = body.substr(eq + 1);
      if (key == "mode") t.mode = parse_mode(value);
      else if (key == "outcome_model") t.outcome_model = parse_outcome_model(value);
      else if (key == "seed") t.seed = parse_int<std::uint64_t>(value, line_no);
      else if (key == "iterations") t.iterations = parse_int<int>(value, line_no);
      else if (key == "burn_in") t.burn_in = parse_int<int>(value, line_no);
      else if (key == "n_a") t.n_a = parse_int<std::size_t>(value, line_no);
      else if (key == "n_b") t.n_b = parse_int<std::size_t>(value, line_no);
      else if (key == "skipped_iterations") t.skipped_iterations = parse_int<int>(value, line_no);
      else if (key == "nonconverged_fits") t.nonconverged_fits = parse_int<int>(value, line_no);
      continue;
    }
    if (!saw_header) {
      if (line != kTraceHeader) throw ParseError("not a trace file header", line_no);
      saw_header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw ParseError("trace row has " + std::to_string(f.size()) + " fields", line_no);
    IterationRecord r;
    r.iteration = parse_int<int>(f[0], line_no);
    r.n_links = parse_int<int>(f[2], line_no);
    r.atel = parse_num(f[3], line_no);
    r.theta_m_mean = parse_num(f[4], line_no);
    r.theta_u_mean = parse_num(f[5], line_no);
    r.sigma2 = parse_num(f[6], line_no);
    r.mu1 = parse_num(f[7], line_no);
    r.sigma1_sq = parse_num(f[8], line_no);
    r.coef = {parse_num(f[9], line_no), parse_num(f[10], line_no), parse_num(f[11], line_no)};
    r.outcome_skipped = f[12] == "1";
    t.records.push_back(r);
  }
  if (!saw_magic || !saw_header) throw ParseError("not a jointlink trace file", line_no);
  if (static_cast<int>(t.records.size()) != t.iterations) {
    throw ParseError("trace holds " + std::to_string(t.records.size()) + " rows but declares " +
                         std::to_string(t.iterations) + " iterations",
                     line_no);
  }
  return t;
}

void write_z_snapshots_csv(std::ostream& out, const McmcTrace& t, int every) {
  if (every < 1) every = 1;
  out << "iteration,j,z\n";
  const std::size_t L = t.stored_snapshots();
  for (std::size_t l = 0; l < L; l += static_cast<std::size_t>(every)) {
    const auto z = t.z_snapshot(l);
    const std::size_t iteration = static_cast<std::size_t>(t.burn_in) + l;
    for (std::size_t j = 0; j < z.size(); ++j) {
      out << iteration << ',' << j << ',';
      if (z[j] == kNoLink) {
        out << "NA";
      } else {
        out << z[j];
      }
      out << '\n';
    }
  }
}

}  // namespace jointlink
