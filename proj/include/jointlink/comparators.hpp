#pragma once

// Binary field-agreement vectors for every (File A, File B) record pair.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jointlink/records_io.hpp"

namespace jointlink {

// Decodes UTF-8 into Unicode scalar values; malformed sequences become U+FFFD.
std::u32string decode_utf8(std::string_view text);

// Unit-cost insert/delete/substitute distance.
std::size_t edit_distance(std::u32string_view a, std::u32string_view b);

// 1 - d(a, b) / max(|a|, |b|) over code points; 1 when both are empty.
double levenshtein_similarity(std::string_view a, std::string_view b);

// Dense n_a x n_b x F agreement tensor, one bit per field packed per pair.
class ComparisonStore {
 public:
  using Pattern = std::uint32_t;
  static constexpr std::size_t kMaxFields = 32;

  struct Entry {
    std::uint32_t i;
    Pattern pattern;
  };

  ComparisonStore() = default;
  // patterns is indexed [j * n_a + i].
  ComparisonStore(std::size_t n_a, std::size_t n_b, std::size_t f_count, std::vector<Pattern> patterns);

  std::size_t n_a() const noexcept { return n_a_; }
  std::size_t n_b() const noexcept { return n_b_; }
  std::size_t f_count() const noexcept { return f_count_; }

  Pattern pattern(std::size_t i, std::size_t j) const noexcept { return patterns_[j * n_a_ + i]; }
  bool at(std::size_t i, std::size_t j, std::size_t f) const noexcept { return (pattern(i, j) >> f) & 1U; }

  // File A records that agree with record j on at least one field.
  std::span<const Entry> agreeing(std::size_t j) const noexcept {
    return {entries_.data() + offsets_[j], entries_.data() + offsets_[j + 1]};
  }

  // Sum of gamma_f over every pair.
  std::uint64_t total_agreements(std::size_t f) const noexcept { return totals_[f]; }

  bool operator==(const ComparisonStore& o) const { return n_a_ == o.n_a_ && n_b_ == o.n_b_ && f_count_ == o.f_count_ && patterns_ == o.patterns_; }

 private:
  std::size_t n_a_ = 0, n_b_ = 0, f_count_ = 0;
  std::vector<Pattern> patterns_;
  std::vector<std::uint64_t> totals_;
  std::vector<std::size_t> offsets_;
  std::vector<Entry> entries_;
};

// Nominal fields agree on exact equality; string fields when similarity >= threshold.
ComparisonStore build_comparisons(std::span<const OutcomeRecord> file_a, std::span<const CovariateRecord> file_b,
                                  std::span<const LinkFieldSpec> schema);

// Audit dump: i, j, then one 0/1 column per field.
void write_comparisons_csv(std::ostream& out, const ComparisonStore& store, std::span<const LinkFieldSpec> schema);

}  // namespace jointlink
