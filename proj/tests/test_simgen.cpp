#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"

#include "jointlink/comparators.hpp"
#include "jointlink/errors.hpp"
#include "jointlink/simgen.hpp"

using namespace jointlink;

TEST_SUITE("simgen") {
  TEST_CASE("outcome surfaces") {
    CHECK(scheme_m1(Scheme::L, 0.5) + scheme_m2(Scheme::L, 0.5) == doctest::Approx(6.0));
    CHECK(scheme_m1(Scheme::N, 0.5) + scheme_m2(Scheme::N, 0.5) == doctest::Approx(5.0 - 0.75 + std::exp(0.5)));
    CHECK(scheme_m1(Scheme::N, 0.5) + scheme_m2(Scheme::N, 0.5) == doctest::Approx(5.8987).epsilon(1e-4));
    CHECK(parse_scheme("N") == Scheme::N);
    CHECK_THROWS_AS(parse_scheme("Q"), ConfigError);
  }

  TEST_CASE("population layout") {
    SimConfig sc;
    sc.n_a = 300;
    sc.n_b = 250;
    sc.overlap = 200;
    sc.seed = 3;
    const auto b = generate_population(sc);
    CHECK(b.file_a.size() == 300);
    CHECK(b.file_b.size() == 250);
    std::size_t links = 0;
    std::set<std::int32_t> used;
    for (std::size_t j = 0; j < b.file_b.size(); ++j) {
      if (b.true_links[j] == kNoLink) continue;
      ++links;
      CHECK(used.insert(b.true_links[j]).second);
      CHECK(b.id_a[static_cast<std::size_t>(b.true_links[j])] == b.id_b[j]);
      CHECK(b.e_b[j] == doctest::Approx(true_propensity(sc.alpha, b.file_b[j].x)));
    }
    CHECK(links == 200);
    // Identifier tuples are unique within each file.
    std::set<std::vector<std::string>> ta;
    for (const auto& r : b.file_a) ta.insert(r.link_fields);
    CHECK(ta.size() == 300);
  }

  TEST_CASE("disjoint files have no true links") {
    SimConfig sc;
    sc.n_a = 50;
    sc.n_b = 40;
    sc.overlap = 0;
    const auto b = generate_population(sc);
    for (auto z : b.true_links) CHECK(z == kNoLink);
  }

  TEST_CASE("generation is seeded") {
    SimConfig sc;
    sc.n_a = 100;
    sc.n_b = 100;
    sc.overlap = 50;
    sc.seed = 8;
    const auto a = generate_population(sc), b = generate_population(sc);
    CHECK(a.file_a == b.file_a);
    CHECK(a.file_b == b.file_b);
    sc.seed = 9;
    CHECK_FALSE(generate_population(sc).file_a == a.file_a);
  }

  TEST_CASE("perturbation probabilities") {
    Rng rng(1);
    const std::vector<std::string> f{"ABELSON", "MARGOT", "0412", "1966"};
    const std::vector<IdentifierKind> k{IdentifierKind::text, IdentifierKind::text, IdentifierKind::date,
                                        IdentifierKind::date};
    CHECK(perturb_identifiers(f, k, {0.0, 0.0}, rng) == f);
    for (int t = 0; t < 200; ++t) {
      const auto p = perturb_identifiers(f, k, {1.0, 1.0}, rng);
      for (int x = 0; x < 2; ++x) {
        REQUIRE(edit_distance(decode_utf8(p[x]), decode_utf8(f[x])) == 1);
      }
      for (int x = 2; x < 4; ++x) {
        REQUIRE(p[x] != f[x]);
        REQUIRE(p[x].size() == f[x].size());
        auto a = p[x], b = f[x];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        REQUIRE(a == b);
      }
    }
    const int n = 100000;
    int changed = 0;
    const std::vector<std::string> one{"KOWALSKI"};
    const std::vector<IdentifierKind> text{IdentifierKind::text};
    for (int t = 0; t < n; ++t) changed += perturb_identifiers(one, text, {0.2, 0.0}, rng)[0] != one[0];
    CHECK(std::abs(changed / double(n) - 0.2) < 3.0 * std::sqrt(0.2 * 0.8 / n));
  }

  TEST_CASE("missing outcome injection") {
    SimConfig sc;
    sc.seed = 2;
    const auto b = generate_population(sc);
    Rng r0(1);
    CHECK(inject_missing_outcomes(b.file_a, 0.0, r0) == b.file_a);
    std::set<std::size_t> first;
    for (std::uint64_t seed : {1u, 2u}) {
      Rng rng(seed);
      const auto a = inject_missing_outcomes(b.file_a, 0.05, rng);
      std::set<std::size_t> blank;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].y) blank.insert(i);
      }
      CHECK(blank.size() == 50);
      if (first.empty()) {
        first = blank;
      } else {
        CHECK(blank != first);
      }
    }
  }

  TEST_CASE("config validation") {
    SimConfig sc;
    sc.overlap = 2000;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    CHECK(overlap_count(0.9, 1000, 800) == 720);
    CHECK_THROWS_AS(overlap_count(1.5, 10, 10), ConfigError);
    SimConfig tiny;
    // One first and one last name leave only the dates to tell people apart.
    tiny.names = {1, 1, 1.0};
    tiny.n_a = 20000;
    tiny.n_b = 20000;
    tiny.overlap = 0;
    CHECK_THROWS_AS(generate_population(tiny), DomainError);
  }

  TEST_CASE("experiment report") {
    ExperimentMatrix mx;
    mx.schemes = {Scheme::L};
    mx.overlaps = {0.9};
    mx.modes = {Mode::known_link};
    mx.replications = 1;
    mx.base.n_a = 120;
    mx.base.n_b = 120;
    mx.run.iterations = 100;
    mx.run.burn_in = 50;
    mx.master_seed = 4;
    const auto rep = run_experiment_matrix(mx);
    REQUIRE(rep.cells.size() == 1);
    const auto* c = rep.find(Scheme::L, 0.9, 0.0, Mode::known_link);
    REQUIRE(c != nullptr);
    CHECK_FALSE(c->ppv.has_value());
    CHECK_FALSE(c->npv.has_value());
    CHECK(c->failed == 0);
    std::ostringstream a, b;
    write_report_csv(a, rep);
    write_report_csv(b, run_experiment_matrix(mx));
    CHECK(a.str() == b.str());
    CHECK(a.str().find("L,parametric,0.9,0,known_link,1,0,0,NA,NA,NA,NA,") != std::string::npos);
  }

  TEST_CASE("thread count does not change the report") {
    ExperimentMatrix mx;
    mx.schemes = {Scheme::L, Scheme::N};
    mx.overlaps = {0.5};
    mx.modes = {Mode::joint, Mode::two_stage};
    mx.replications = 2;
    mx.base.n_a = 100;
    mx.base.n_b = 100;
    mx.run.iterations = 100;
    mx.run.burn_in = 50;
    std::ostringstream one, three;
    mx.threads = 1;
    write_report_csv(one, run_experiment_matrix(mx));
    mx.threads = 3;
    write_report_csv(three, run_experiment_matrix(mx));
    CHECK(one.str() == three.str());
  }
}
