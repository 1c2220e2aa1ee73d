#include <doctest.h>

#include <cmath>
#include <random>

#include "unit/test_support.hpp"
#include "vdc/emissions.hpp"

using namespace vdc;

TEST_CASE("truncated Poisson oracle values") {
  CHECK(truncated_poisson_pmf(1.0, 10)[0] == doctest::Approx(0.36787944486780905).epsilon(1e-13));
  CHECK(truncated_poisson_pmf(5.0, 7)[7] == doctest::Approx(0.12051863507342961).epsilon(1e-13));
  CHECK_THROWS_AS(truncated_poisson_pmf(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(truncated_poisson_pmf(-1.0, 5), std::invalid_argument);
}

TEST_CASE("truncated Poisson sums to one without overflow") {
  for (double rate : {1e-6, 0.3, 1.0, 7.5, 40.0, 100.0, 1000.0})
    for (int L : {1, 7, 10, 60}) {
      const auto pmf = truncated_poisson_pmf(rate, L);
      double total = 0.0;
      for (double p : pmf) {
        CHECK(std::isfinite(p));
        total += p;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

namespace {

ModelConfig two_margin(CopulaFamily family, int states = 1) {
  ModelConfig c;
  c.num_states = states;
  c.num_margins = 2;
  c.scale_max = {10, 7};
  c.copula_family = family;
  c.use_duration = false;
  c.use_covariates = false;
  return c;
}

}  // namespace

TEST_CASE("independence tables are products") {
  const ModelConfig c = two_margin(CopulaFamily::Independence);
  ParameterSet p = ParameterSet::defaults(c);
  p.rate(0, 0) = 1.0;
  p.rate(0, 1) = 1.0;
  const auto tables = build_emission_tables(p, c);
  const auto f1 = truncated_poisson_pmf(1.0, 10), f2 = truncated_poisson_pmf(1.0, 7);
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; b <= 7; ++b) {
      const std::vector<int> y = {a, b};
      CHECK(std::abs(tables[0].pmf.at(y) - f1[a] * f2[b]) <= 1e-12);
    }
  const std::vector<int> y00 = {0, 0};
  // pmf(0) with rate 1 is 1 / sum_{l<=L} 1/l!: 0.3678794... for L = 10 and
  // 0.3678832... for L = 7.
  CHECK(log_emission(tables, 0, y00) ==
        doctest::Approx(std::log(0.36787944486780905) + std::log(0.3678832116788321)).epsilon(1e-12));
}

TEST_CASE("single margin ignores the copula") {
  for (auto family : {CopulaFamily::Independence, CopulaFamily::SurvivalGumbel, CopulaFamily::AliMikhailHaq,
                      CopulaFamily::Clayton}) {
    ModelConfig c = two_margin(family);
    c.num_margins = 1;
    c.scale_max = {10};
    ParameterSet p = ParameterSet::defaults(c);
    p.rate(0, 0) = 3.3;
    const auto tables = build_emission_tables(p, c);
    const auto f = truncated_poisson_pmf(3.3, 10);
    for (int y = 0; y <= 10; ++y) CHECK(std::abs(tables[0].pmf.values[y] - f[y]) <= 1e-15);
  }
}

TEST_CASE("lower-tail copula moves mass to the (0,0) corner") {
  ModelConfig c = two_margin(CopulaFamily::SurvivalGumbel);
  ParameterSet p = ParameterSet::defaults(c);
  p.rate(0, 0) = 0.5;
  p.rate(0, 1) = 0.5;
  p.copula_params[0] = 3.0;
  const auto tables = build_emission_tables(p, c);
  const std::vector<int> y00 = {0, 0};
  const double product = truncated_poisson_pmf(0.5, 10)[0] * truncated_poisson_pmf(0.5, 7)[0];
  CHECK(tables[0].pmf.at(y00) > product);
}

TEST_CASE("random tables: mass, margins, log consistency") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> rate(0.01, 20.0);
  const CopulaFamily families[] = {CopulaFamily::Independence, CopulaFamily::SurvivalGumbel,
                                   CopulaFamily::AliMikhailHaq, CopulaFamily::Clayton};
  for (int draw = 0; draw < 200; ++draw) {
    ModelConfig c = two_margin(families[draw % 4], 2);
    ParameterSet p = testing::random_params(c, rng);
    for (int s = 0; s < 2; ++s) p.rate(s, 1) = rate(rng);
    p.rate(0, 0) = rate(rng) / 2;
    p.rate(1, 0) = p.rate(0, 0) + rate(rng) / 2;
    const auto tables = build_emission_tables(p, c);
    for (int s = 0; s < 2; ++s) {
      const auto& t = tables[s];
      double total = 0.0;
      for (std::size_t i = 0; i < t.pmf.values.size(); ++i) {
        total += t.pmf.values[i];
        if (t.pmf.values[i] > 0.0) CHECK(t.log_pmf[i] == std::log(t.pmf.values[i]));
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
      for (int k = 0; k < 2; ++k) {
        const auto f = truncated_poisson_pmf(p.rate(s, k), c.scale_max[k]);
        const auto marginal = t.pmf.marginal(k);
        for (std::size_t y = 0; y < f.size(); ++y) CHECK(std::abs(marginal[y] - f[y]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("missing values are marginalized") {
  ModelConfig c = two_margin(CopulaFamily::Clayton);
  ParameterSet p = ParameterSet::defaults(c);
  p.rate(0, 0) = 2.0;
  p.rate(0, 1) = 4.0;
  p.copula_params[0] = 2.0;
  const auto tables = build_emission_tables(p, c);
  const std::vector<int> none = {kMissing, kMissing};
  CHECK(log_emission(tables, 0, none) == 0.0);
  const std::vector<int> pain_only = {3, kMissing}, activity_only = {kMissing, 5};
  CHECK(emission_prob(tables, 0, pain_only) == doctest::Approx(truncated_poisson_pmf(2.0, 10)[3]).epsilon(1e-12));
  CHECK(emission_prob(tables, 0, activity_only) == doctest::Approx(truncated_poisson_pmf(4.0, 7)[5]).epsilon(1e-12));
}

TEST_CASE("out of range observations are rejected") {
  const ModelConfig c = two_margin(CopulaFamily::Independence);
  const auto tables = build_emission_tables(ParameterSet::defaults(c), c);
  const std::vector<int> high = {11, 0}, negative = {0, -3}, short_obs = {1};
  CHECK_THROWS_AS(log_emission(tables, 0, high), std::out_of_range);
  CHECK_THROWS_AS(log_emission(tables, 0, negative), std::out_of_range);
  CHECK_THROWS_AS(log_emission(tables, 0, short_obs), std::invalid_argument);
}

TEST_CASE("survival Gumbel keeps relative accuracy in the joint upper tail") {
  ModelConfig c = two_margin(CopulaFamily::SurvivalGumbel);
  ParameterSet p = ParameterSet::defaults(c);
  p.rate(0, 0) = 0.3;
  p.rate(0, 1) = 0.3;
  p.copula_params[0] = 2.0;
  const auto tables = build_emission_tables(p, c);
  // 50-digit evaluation of the cell (8, 6).
  const std::vector<int> y = {8, 6};
  CHECK(tables[0].pmf.at(y) == doctest::Approx(1.2909743108324177918e-11).epsilon(1e-6));
}
