#include "jointlink/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "jointlink/errors.hpp"
#include "jointlink/outcomes.hpp"
#include "jointlink/trace.hpp"

namespace jointlink {
namespace {

constexpr std::array<std::string_view, 26> kOnsets{"B",  "C",  "D",  "F",  "G",  "H",  "J",  "K",  "L",
                                                   "M",  "N",  "P",  "R",  "S",  "T",  "V",  "W",  "Z",
                                                   "BR", "CH", "CL", "DR", "GR", "SH", "ST", "TR"};
constexpr std::array<std::string_view, 8> kVowels{"A", "E", "I", "O", "U", "AI", "EA", "OU"};
constexpr std::array<std::string_view, 8> kCodas{"", "N", "R", "L", "S", "TH", "RD", "NE"};
constexpr std::array<std::string_view, 10> kSurnameEndings{"SON", "MAN", "TON", "LEY", "ER",
                                                           "INI", "EZ",  "OV",  "BERG", "WOOD"};

std::string syllable(Rng& rng) {
  std::string s(kOnsets[rng.uniform_index(kOnsets.size())]);
  s += kVowels[rng.uniform_index(kVowels.size())];
  s += kCodas[rng.uniform_index(kCodas.size())];
  return s;
}

template <typename Make>
std::vector<std::string> build_pool(std::size_t n, std::uint64_t seed, Make make) {
  Rng rng(seed);
  std::vector<std::string> pool;
  pool.reserve(n);
  std::unordered_set<std::string> seen;
  std::size_t attempts = 0;
  while (pool.size() < n) {
    if (++attempts > 100 * n + 1000) throw DomainError("cannot build a name pool of " + std::to_string(n) + " names");
    std::string name = make(rng);
    if (seen.insert(name).second) pool.push_back(std::move(name));
  }
  return pool;
}

// Rank-frequency sampler over a fixed pool.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += std::pow(static_cast<double>(k + 1), -exponent);
      cdf_[k] = acc;
    }
    for (double& c : cdf_) c /= acc;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }
int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> d{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : d[static_cast<std::size_t>(m - 1)];
}

constexpr int kFirstYear = 1940, kLastYear = 2000;

int total_days() {
  int n = 0;
  for (int y = kFirstYear; y <= kLastYear; ++y) n += leap(y) ? 366 : 365;
  return n;
}

struct BirthDate {
  int month, day, year;
};

// Uniform calendar date in [1940-01-01, 2000-12-31].
BirthDate random_birth_date(Rng& rng, int days) {
  int k = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(days)));
  for (int y = kFirstYear;; ++y) {
    const int len = leap(y) ? 366 : 365;
    if (k >= len) {
      k -= len;
      continue;
    }
    for (int m = 1; m <= 12; ++m) {
      const int dm = days_in_month(y, m);
      if (k < dm) return {m, k + 1, y};
      k -= dm;
    }
  }
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

char random_letter(Rng& rng) { return static_cast<char>('A' + rng.uniform_index(26)); }

std::string typo(const std::string& s, Rng& rng) {
  std::string out = s;
  std::size_t kind = rng.uniform_index(3);
  if (kind == 2 && out.size() < 2) kind = 0;
  if (out.empty()) kind = 1;
  if (kind == 0) {
    const std::size_t pos = rng.uniform_index(out.size());
    char c;
    do c = random_letter(rng);
    while (c == out[pos]);
    out[pos] = c;
  } else if (kind == 1) {
    const std::size_t pos = rng.uniform_index(out.size() + 1);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), random_letter(rng));
  } else {
    out.erase(rng.uniform_index(out.size()), 1);
  }
  return out;
}

std::string digit_swap(const std::string& s, Rng& rng) {
  std::vector<std::size_t> spots;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    if (s[k] != s[k + 1]) spots.push_back(k);
  }
  if (spots.empty()) return s;
  std::string out = s;
  const std::size_t k = spots[rng.uniform_index(spots.size())];
  std::swap(out[k], out[k + 1]);
  return out;
}

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

std::string_view to_string(Scheme s) noexcept { return s == Scheme::L ? "L" : "N"; }

Scheme parse_scheme(std::string_view text) {
  if (text == "L" || text == "l") return Scheme::L;
  if (text == "N" || text == "n") return Scheme::N;
  throw ConfigError("unknown scheme '" + std::string(text) + "' (expected L or N)");
}

double scheme_m1(Scheme s, double e) noexcept { return s == Scheme::L ? 1.0 + 2.0 * e : 5.0 - 1.5 * e; }
double scheme_m2(Scheme s, double e) noexcept { return s == Scheme::L ? 4.0 : std::exp(-0.8 + 2.6 * e); }

void SimConfig::validate() const {
  if (n_a == 0 || n_b == 0) throw ConfigError("n_a and n_b must be positive");
  if (overlap > std::min(n_a, n_b)) throw ConfigError("overlap must not exceed min(n_a, n_b)");
  if (!(noise_sd > 0.0)) throw ConfigError("noise_sd must be positive");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw ConfigError("missing_frac must lie in [0, 1)");
  check_prob(perturbation.typo_prob, "typo_prob");
  check_prob(perturbation.digit_swap_prob, "digit_swap_prob");
  if (names.first_names == 0 || names.last_names == 0) throw ConfigError("name pools must be nonempty");
  if (!(names.zipf_exponent >= 0.0)) throw ConfigError("zipf_exponent must be non-negative");
}

std::size_t overlap_count(double fraction, std::size_t n_a, std::size_t n_b) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("overlap fraction must lie in [0, 1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(std::min(n_a, n_b))));
}

std::vector<LinkFieldSpec> sim_schema() {
  return {LinkFieldSpec::string("fname", 0.95), LinkFieldSpec::string("lname", 0.95), LinkFieldSpec::nominal("bdate"),
          LinkFieldSpec::nominal("byear")};
}

std::vector<std::string> sim_covariate_columns() { return {"x1", "x2"}; }

std::vector<std::string> first_name_pool(std::size_t n) {
  return build_pool(n, 0xF1257ULL, [](Rng& rng) {
    std::string s = syllable(rng) + syllable(rng);
    if (rng.bernoulli(0.25)) s += kVowels[rng.uniform_index(5)];
    return s;
  });
}

std::vector<std::string> last_name_pool(std::size_t n) {
  return build_pool(n, 0x1A57ULL, [](Rng& rng) {
    std::string s = syllable(rng);
    if (rng.bernoulli(0.5)) s += syllable(rng);
    s += kSurnameEndings[rng.uniform_index(kSurnameEndings.size())];
    return s;
  });
}

std::vector<std::string> perturb_identifiers(std::span<const std::string> fields, std::span<const IdentifierKind> kinds,
                                             const PerturbationConfig& config, Rng& rng) {
  if (fields.size() != kinds.size()) throw DomainError("one identifier kind per field is required");
  std::vector<std::string> out(fields.begin(), fields.end());
  for (std::size_t f = 0; f < out.size(); ++f) {
    if (kinds[f] == IdentifierKind::text) {
      if (rng.bernoulli(config.typo_prob)) out[f] = typo(out[f], rng);
    } else if (rng.bernoulli(config.digit_swap_prob)) {
      out[f] = digit_swap(out[f], rng);
    }
  }
  return out;
}

std::vector<OutcomeRecord> inject_missing_outcomes(std::vector<OutcomeRecord> file_a, double frac, Rng& rng) {
  if (!(frac >= 0.0 && frac < 1.0)) throw ConfigError("missing fraction must lie in [0, 1)");
  const auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(file_a.size())));
  std::vector<std::size_t> idx(file_a.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t n = 0; n < k; ++n) {
    std::swap(idx[n], idx[n + rng.uniform_index(idx.size() - n)]);
    file_a[idx[n]].y.reset();
  }
  return file_a;
}

double true_propensity(const std::array<double, 3>& alpha, std::span<const double> x) noexcept {
  return logistic(alpha[0] + alpha[1] * x[0] + alpha[2] * x[1]);
}

TruthBundle generate_population(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t total = cfg.n_a + cfg.n_b - cfg.overlap;
  const std::size_t n_days = 366, n_years = kLastYear - kFirstYear + 1;
  const double capacity = static_cast<double>(cfg.names.first_names) * static_cast<double>(cfg.names.last_names) *
                          static_cast<double>(n_days * n_years);
  if (static_cast<double>(total) > capacity) {
    throw DomainError("identifier pools cannot supply " + std::to_string(total) + " distinct individuals");
  }
  const auto first = first_name_pool(cfg.names.first_names);
  const auto last = last_name_pool(cfg.names.last_names);
  const ZipfSampler pick_first(first.size(), cfg.names.zipf_exponent);
  const ZipfSampler pick_last(last.size(), cfg.names.zipf_exponent);
  const int days = total_days();

  Rng rng(derive_seed(cfg.seed, {0x9090}));
  struct Person {
    std::vector<std::string> ids;
    std::vector<double> x;
    int w;
    double e, y;
  };
  std::vector<Person> people;
  people.reserve(total);
  std::unordered_set<std::string> seen;
  std::size_t collisions = 0;
  while (people.size() < total) {
    Person p;
    const auto d = random_birth_date(rng, days);
    p.ids = {first[pick_first(rng)], last[pick_last(rng)], two_digits(d.month) + two_digits(d.day),
             std::to_string(d.year)};
    const std::string key = p.ids[0] + '\x1f' + p.ids[1] + '\x1f' + p.ids[2] + '\x1f' + p.ids[3];
    if (!seen.insert(key).second) {
      if (++collisions > 100 * total + 1000) {
        throw DomainError("identifier pools exhausted after " + std::to_string(people.size()) + " of " +
                          std::to_string(total) + " individuals");
      }
      continue;
    }
    p.x = {rng.normal(), rng.normal()};
    p.e = true_propensity(cfg.alpha, p.x);
    p.w = rng.bernoulli(p.e) ? 1 : 0;
    p.y = scheme_m1(cfg.scheme, p.e) + scheme_m2(cfg.scheme, p.e) * p.w + cfg.noise_sd * rng.normal();
    people.push_back(std::move(p));
  }

  // Overlap individuals are 0..O-1, File A only O..n_a-1, File B only n_a..total-1.
  std::vector<std::size_t> ids_a(cfg.n_a), ids_b;
  std::iota(ids_a.begin(), ids_a.end(), 0);
  ids_b.reserve(cfg.n_b);
  for (std::size_t k = 0; k < cfg.overlap; ++k) ids_b.push_back(k);
  for (std::size_t k = cfg.n_a; k < total; ++k) ids_b.push_back(k);
  std::shuffle(ids_a.begin(), ids_a.end(), rng.engine());
  std::shuffle(ids_b.begin(), ids_b.end(), rng.engine());

  TruthBundle b;
  b.id_a = ids_a;
  b.id_b = ids_b;
  std::vector<std::int32_t> position_in_a(total, kNoLink);
  b.file_a.resize(cfg.n_a);
  for (std::size_t i = 0; i < cfg.n_a; ++i) {
    const Person& p = people[ids_a[i]];
    b.file_a[i] = {i, p.ids, p.y};
    position_in_a[ids_a[i]] = static_cast<std::int32_t>(i);
  }
  const std::array<IdentifierKind, 4> kinds{IdentifierKind::text, IdentifierKind::text, IdentifierKind::date,
                                            IdentifierKind::date};
  b.file_b.resize(cfg.n_b);
  b.true_links.assign(cfg.n_b, kNoLink);
  b.e_b.resize(cfg.n_b);
  b.effect_b.resize(cfg.n_b);
  for (std::size_t j = 0; j < cfg.n_b; ++j) {
    const std::size_t id = ids_b[j];
    const Person& p = people[id];
    const bool dup = id < cfg.overlap;
    auto fields = dup ? perturb_identifiers(p.ids, kinds, cfg.perturbation, rng) : p.ids;
    b.file_b[j] = {j, std::move(fields), p.x, p.w};
    if (dup) b.true_links[j] = position_in_a[id];
    b.e_b[j] = p.e;
    b.effect_b[j] = scheme_m2(cfg.scheme, p.e);
  }
  if (cfg.missing_frac > 0.0) {
    Rng mrng(derive_seed(cfg.seed, {0x4D495353}));
    b.file_a = inject_missing_outcomes(std::move(b.file_a), cfg.missing_frac, mrng);
  }
  return b;
}

void write_sim_files(const std::filesystem::path& dir, const TruthBundle& bundle, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const auto schema = sim_schema();
  const auto open = [&](const std::string& name) {
    std::ofstream out(dir / (prefix + name), std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / (prefix + name)).string());
    return out;
  };
  {
    auto out = open("file_a.csv");
    std::vector<std::string> row{"id"};
    for (const auto& f : schema) row.push_back(f.name);
    row.push_back("y");
    write_csv_row(out, row);
    for (std::size_t i = 0; i < bundle.file_a.size(); ++i) {
      const auto& r = bundle.file_a[i];
      row = {std::to_string(bundle.id_a[i])};
      row.insert(row.end(), r.link_fields.begin(), r.link_fields.end());
      row.push_back(r.y ? format_exact(*r.y) : std::string(kMissingToken));
      write_csv_row(out, row);
    }
  }
  auto out = open("file_b.csv");
  std::vector<std::string> row{"id"};
  for (const auto& f : schema) row.push_back(f.name);
  row.insert(row.end(), {"x1", "x2", "w"});
  write_csv_row(out, row);
  for (std::size_t j = 0; j < bundle.file_b.size(); ++j) {
    const auto& r = bundle.file_b[j];
    row = {std::to_string(bundle.id_b[j])};
    row.insert(row.end(), r.link_fields.begin(), r.link_fields.end());
    for (double v : r.x) row.push_back(format_exact(v));
    row.push_back(std::to_string(r.w));
    write_csv_row(out, row);
  }
}

}  // namespace jointlink
