#include "jointlink/comparators.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "jointlink/errors.hpp"

namespace jointlink {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t k = 0;
  while (k < n) {
    const unsigned char c = p[k];
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && k + len <= n;
    for (std::size_t t = 1; ok && t < len; ++t) {
      if ((p[k + t] & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (p[k + t] & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    static constexpr char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(U'�');
      ++k;
      continue;
    }
    out.push_back(cp);
    k += len;
  }
  return out;
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t x = 1; x <= a.size(); ++x) {
    std::size_t diag = row[0];
    row[0] = x;
    for (std::size_t y = 1; y <= b.size(); ++y) {
      const std::size_t up = row[y];
      row[y] = std::min({up + 1, row[y - 1] + 1, diag + (a[x - 1] == b[y - 1] ? 0U : 1U)});
      diag = up;
    }
  }
  return row[b.size()];
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::u32string ua = decode_utf8(a);
  const std::u32string ub = decode_utf8(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(ua, ub)) / static_cast<double>(longest);
}

ComparisonStore::ComparisonStore(std::size_t n_a, std::size_t n_b, std::size_t f_count, std::vector<Pattern> patterns)
    : n_a_(n_a), n_b_(n_b), f_count_(f_count), patterns_(std::move(patterns)), totals_(f_count, 0) {
  if (f_count > kMaxFields) throw SchemaError("at most 32 linking fields are supported");
  if (patterns_.size() != n_a * n_b) throw SchemaError("comparison pattern count does not match n_a * n_b");
  const Pattern valid = f_count == kMaxFields ? ~Pattern{0} : ((Pattern{1} << f_count) - 1);
  offsets_.assign(n_b + 1, 0);
  for (std::size_t j = 0; j < n_b; ++j) {
    for (std::size_t i = 0; i < n_a; ++i) {
      const Pattern p = patterns_[j * n_a + i];
      if (p & ~valid) throw SchemaError("comparison pattern has bits beyond the field count");
      if (p == 0) continue;
      entries_.push_back({static_cast<std::uint32_t>(i), p});
      for (std::size_t f = 0; f < f_count; ++f) totals_[f] += (p >> f) & 1U;
    }
    offsets_[j + 1] = entries_.size();
  }
}

ComparisonStore build_comparisons(std::span<const OutcomeRecord> file_a, std::span<const CovariateRecord> file_b,
                                  std::span<const LinkFieldSpec> schema) {
  validate_schema(schema);
  const std::size_t n_a = file_a.size(), n_b = file_b.size(), F = schema.size();
  if (F > ComparisonStore::kMaxFields) throw SchemaError("at most 32 linking fields are supported");
  for (const auto& r : file_a) {
    if (r.link_fields.size() != F) throw SchemaError("File A record does not match the linking schema");
  }
  for (const auto& r : file_b) {
    if (r.link_fields.size() != F) throw SchemaError("File B record does not match the linking schema");
  }

  std::vector<ComparisonStore::Pattern> patterns(n_a * n_b, 0);
  for (std::size_t f = 0; f < F; ++f) {
    // Intern values so each distinct (a, b) value pair is compared once.
    std::unordered_map<std::string_view, std::uint32_t> ids_a, ids_b;
    std::vector<std::string_view> values_a, values_b;
    std::vector<std::uint32_t> code_a(n_a), code_b(n_b);
    for (std::size_t i = 0; i < n_a; ++i) {
      const std::string_view v = file_a[i].link_fields[f];
      auto [it, fresh] = ids_a.try_emplace(v, static_cast<std::uint32_t>(values_a.size()));
      if (fresh) values_a.push_back(v);
      code_a[i] = it->second;
    }
    for (std::size_t j = 0; j < n_b; ++j) {
      const std::string_view v = file_b[j].link_fields[f];
      auto [it, fresh] = ids_b.try_emplace(v, static_cast<std::uint32_t>(values_b.size()));
      if (fresh) values_b.push_back(v);
      code_b[j] = it->second;
    }
    std::vector<std::uint8_t> agree(values_a.size() * values_b.size());
    const LinkFieldSpec& spec = schema[f];
    for (std::size_t u = 0; u < values_a.size(); ++u) {
      for (std::size_t v = 0; v < values_b.size(); ++v) {
        bool hit = false;
        if (spec.kind == FieldKind::nominal) {
          hit = values_a[u] == values_b[v];
        } else {
          hit = levenshtein_similarity(values_a[u], values_b[v]) >= *spec.string_threshold;
        }
        agree[u * values_b.size() + v] = hit;
      }
    }
    const auto bit = ComparisonStore::Pattern{1} << f;
    for (std::size_t j = 0; j < n_b; ++j) {
      for (std::size_t i = 0; i < n_a; ++i) {
        if (agree[code_a[i] * values_b.size() + code_b[j]]) patterns[j * n_a + i] |= bit;
      }
    }
  }
  return ComparisonStore(n_a, n_b, F, std::move(patterns));
}

void write_comparisons_csv(std::ostream& out, const ComparisonStore& store, std::span<const LinkFieldSpec> schema) {
  out << "i,j";
  for (const auto& f : schema) out << ',' << f.name;
  out << '\n';
  for (std::size_t i = 0; i < store.n_a(); ++i) {
    for (std::size_t j = 0; j < store.n_b(); ++j) {
      out << i << ',' << j;
      for (std::size_t f = 0; f < store.f_count(); ++f) out << ',' << (store.at(i, j, f) ? 1 : 0);
      out << '\n';
    }
  }
}

}  // namespace jointlink
