#include <doctest.h>

#include <cmath>
#include <random>

#include "unit/test_support.hpp"
#include "vdc/emissions.hpp"
#include "vdc/simulate.hpp"
#include "vdc/transitions.hpp"

using namespace vdc;
using vdc::testing::TempDir;
using vdc::testing::slurp;

namespace {

CohortSpec base_spec(int states, CopulaFamily family, double nu) {
  CohortSpec spec;
  spec.config.num_states = states;
  spec.config.copula_family = family;
  spec.config.duration_cap = 20;
  spec.config.covariate_dim = 0;
  spec.params = ParameterSet::defaults(spec.config);
  for (int s = 0; s < states; ++s) {
    spec.params.rate(s, 0) = 1.0 + 2.5 * s;
    spec.params.rate(s, 1) = 1.0 + 2.0 * s;
  }
  if (family != CopulaFamily::Independence) spec.params.copula_params.assign(states, nu);
  return spec;
}

// Brute-force tau-b for small samples.
double naive_tau_b(const std::vector<int>& x, const std::vector<int>& y) {
  double c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const int sx = (x[i] > x[j]) - (x[i] < x[j]);
      const int sy = (y[i] > y[j]) - (y[i] < y[j]);
      if (sx == 0) tx += 1;
      if (sy == 0) ty += 1;
      if (sx * sy > 0) c += 1;
      if (sx * sy < 0) d += 1;
    }
  const double n0 = x.size() * (x.size() - 1.0) / 2.0;
  return (c - d) / std::sqrt((n0 - tx) * (n0 - ty));
}

}  // namespace

TEST_CASE("single-state cohorts sample the emission table") {
  CohortSpec spec = base_spec(1, CopulaFamily::SurvivalGumbel, 2.0);
  spec.params.rate(0, 0) = 3.0;
  spec.params.rate(0, 1) = 2.0;
  spec.num_patients = 200;
  spec.horizon = 50;
  const auto cohort = simulate_cohort(spec, 11);
  const double n = spec.num_patients * spec.horizon;
  std::vector<double> counts(88, 0.0);
  for (const auto& r : cohort) {
    for (int t = 0; t < r.length(); ++t) {
      CHECK(r.phase[t] == Regimen::Stable);
      counts[r.obs(t, 0) * 8 + r.obs(t, 1)] += 1.0;
    }
  }
  const auto table = build_emission_tables(spec.params, spec.config).front().pmf;
  for (int c = 0; c < 88; ++c) {
    const double p = table.values[c];
    CHECK_MESSAGE(std::abs(counts[c] / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n), "cell " << c);
  }
}

TEST_CASE("mean sojourn matches the hazard product") {
  for (double omega : {-0.04, -0.08}) {
    CohortSpec spec = base_spec(2, CopulaFamily::Independence, 1.0);
    spec.config.duration_cap = 20;
    spec.params.initial_dist = {1.0, 0.0};
    spec.params.intercept(0, 1) = -2.0;
    spec.params.duration_coef(0, 1) = omega;
    spec.params.intercept(1, 0) = 0.0;
    spec.num_patients = 1500;
    spec.horizon = 1200;

    // sum_d prod_{e<d} stay(e); the stay probability is constant past the cap
    double expected = 0.0, survive = 1.0;
    for (int d = 1; d <= spec.config.duration_cap; ++d) {
      expected += survive;
      survive *= transition_row(spec.params, spec.config, {0, d, {}})[0];
    }
    const double stay_cap = transition_row(spec.params, spec.config, {0, spec.config.duration_cap, {}})[0];
    expected += survive / (1.0 - stay_cap);

    const auto sim = simulate_cohort_with_states(spec, 5);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto& path : sim.states) {
      int len = 0;
      while (len < spec.horizon && path[len] == 0) ++len;
      REQUIRE(len < spec.horizon);
      sum += len;
      sum2 += double(len) * len;
      ++n;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK_MESSAGE(std::abs(mean - expected) < 4.0 * se, "omega " << omega << " mean " << mean << " vs " << expected);
    if (omega == -0.08) CHECK(expected > 15.0);
  }
}

TEST_CASE("treatment flags follow the weekly probability") {
  CohortSpec spec = base_spec(2, CopulaFamily::SurvivalGumbel, 1.5);
  spec.num_patients = 50;
  spec.horizon = 20;
  spec.treatment_prob = 0.0;
  for (const auto& r : simulate_cohort(spec, 3))
    for (int f : r.treatment) CHECK(f == 0);
  spec.treatment_prob = 1.0;
  for (const auto& r : simulate_cohort(spec, 3))
    for (int f : r.treatment) CHECK(f == 1);
  spec.treatment_prob = 0.3;
  double on = 0;
  for (const auto& r : simulate_cohort(spec, 3))
    for (int f : r.treatment) on += f;
  CHECK(std::abs(on / 1000.0 - 0.3) < 4.0 * std::sqrt(0.21 / 1000.0));
}

TEST_CASE("labels are the phase of the latent state") {
  CohortSpec spec = base_spec(3, CopulaFamily::SurvivalGumbel, 2.0);
  spec.params.intercept(0, 1) = -1;
  spec.num_patients = 40;
  spec.horizon = 30;
  const auto sim = simulate_cohort_with_states(spec, 9);
  for (std::size_t i = 0; i < sim.records.size(); ++i)
    for (int t = 0; t < spec.horizon; ++t) CHECK(sim.records[i].phase[t] == phase_of_state(sim.states[i][t], 3));

  spec.label_flip_rate = 1.0;
  const auto flipped = simulate_cohort_with_states(spec, 9);
  int flips[3] = {0, 0, 0};
  for (std::size_t i = 0; i < flipped.records.size(); ++i)
    for (int t = 0; t < spec.horizon; ++t) {
      const int truth = static_cast<int>(phase_of_state(flipped.states[i][t], 3));
      const int label = static_cast<int>(flipped.records[i].phase[t]);
      CHECK(label != truth);
      ++flips[(label - truth + 3) % 3];
    }
  CHECK(flips[1] > 400);
  CHECK(flips[2] > 400);

  spec.label_flip_rate = 0.2;
  const auto noisy = simulate_cohort_with_states(spec, 10);
  double wrong = 0;
  for (std::size_t i = 0; i < noisy.records.size(); ++i)
    for (int t = 0; t < spec.horizon; ++t)
      wrong += noisy.records[i].phase[t] != phase_of_state(noisy.states[i][t], 3);
  CHECK(std::abs(wrong / 1200.0 - 0.2) < 4.0 * std::sqrt(0.16 / 1200.0));
}

TEST_CASE("missingness and covariates") {
  CohortSpec spec = base_spec(2, CopulaFamily::Clayton, 1.0);
  spec.features = {Feature::Treatment, Feature::LagPain, Feature::Age, Feature::Gender};
  spec.config.covariate_dim = 4;
  spec.params = ParameterSet::defaults(spec.config);
  spec.params.covariate_coef(0, 1)[1] = 0.3;
  spec.missing_rate = 0.25;
  spec.num_patients = 100;
  spec.horizon = 40;
  const auto cohort = simulate_cohort(spec, 21);
  double missing = 0;
  for (const auto& r : cohort)
    for (int y : r.observations) missing += y == kMissing;
  CHECK(std::abs(missing / 8000.0 - 0.25) < 4.0 * std::sqrt(0.1875 / 8000.0));

  spec.config.covariate_dim = 3;
  CHECK_THROWS_WITH_AS(simulate_cohort(spec, 1), doctest::Contains("covariate_dim"), std::invalid_argument);
}

TEST_CASE("risk profiles follow the generator") {
  CohortSpec spec = base_spec(1, CopulaFamily::Independence, 1.0);
  spec.num_patients = 4000;
  spec.horizon = 1;
  const auto cohort = simulate_cohort(spec, 4);
  const CovariateGenerator g;
  double age = 0;
  std::array<std::vector<double>, kNumFactors> freq;
  for (int k = 0; k < kNumFactors; ++k) freq[k].assign(g.level_probs[k].size(), 0.0);
  for (const auto& r : cohort) {
    CHECK(r.profile.age >= 18);
    CHECK(r.profile.age <= 65);
    CHECK(r.profile.age == std::round(r.profile.age));
    CHECK(r.profile.bmi >= 18);
    CHECK(r.profile.general_health <= 100);
    age += r.profile.age;
    for (int k = 0; k < kNumFactors; ++k) freq[k][r.profile.levels[k]] += 1;
  }
  CHECK(std::abs(age / 4000 - 43.2) < 1.0);
  for (int k = 0; k < kNumFactors; ++k)
    for (std::size_t l = 0; l < freq[k].size(); ++l) {
      const double p = g.level_probs[k][l];
      CHECK(std::abs(freq[k][l] / 4000 - p) < 4.0 * std::sqrt(p * (1 - p) / 4000));
    }
  CHECK(cohort.front().id == "P0001");
  CHECK(cohort.back().id == "P4000");
}

TEST_CASE("kendall tau-b") {
  const std::vector<int> x{0, 1, 2, 3, 4, 5};
  CHECK(*kendall_tau_b(x, x) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<int> rev{5, 4, 3, 2, 1, 0};
  CHECK(*kendall_tau_b(x, rev) == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<int> tied_x{0, 0, 1, 1, 2, 2, 2}, tied_y{0, 1, 1, 1, 3, 3, 4};
  CHECK(*kendall_tau_b(tied_x, tied_y) == doctest::Approx(naive_tau_b(tied_x, tied_y)).epsilon(1e-13));
  CHECK_FALSE(kendall_tau_b(std::vector<int>{1, 1, 1}, std::vector<int>{0, 1, 2}).has_value());
  CHECK_FALSE(kendall_tau_b(std::vector<int>{1}, std::vector<int>{2}).has_value());

  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> a(60), b(60);
    for (int i = 0; i < 60; ++i) {
      a[i] = std::uniform_int_distribution<int>(0, 10)(rng);
      b[i] = std::max(0, std::min(7, a[i] / 2 + std::uniform_int_distribution<int>(-2, 2)(rng)));
    }
    CHECK(*kendall_tau_b(a, b) == doctest::Approx(naive_tau_b(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("empirical dependence") {
  CohortSpec spec = base_spec(1, CopulaFamily::Independence, 1.0);
  spec.params.rate(0, 0) = 3.0;
  spec.params.rate(0, 1) = 2.0;
  spec.num_patients = 400;
  spec.horizon = 52;
  const auto indep = empirical_dependence(simulate_cohort(spec, 8));
  CHECK(indep.pairs == 400 * 52);
  REQUIRE(indep.tau_b);
  CHECK(std::abs(*indep.tau_b) < 0.02);
  for (std::size_t a = 0; a < indep.conditional.size(); ++a) {
    if (indep.row_counts[a] == 0) continue;
    double sum = 0;
    for (double v : indep.conditional[a]) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  CohortSpec weak = base_spec(1, CopulaFamily::SurvivalGumbel, 1.0);
  weak.params.rate(0, 0) = 3.0;
  weak.params.rate(0, 1) = 2.0;
  weak.num_patients = 200;
  weak.horizon = 52;
  CohortSpec strong = weak;
  strong.params.copula_params = {3.0};
  const double tau_weak = *empirical_dependence(simulate_cohort(weak, 8)).tau_b;
  const double tau_strong = *empirical_dependence(simulate_cohort(strong, 8)).tau_b;
  CHECK(tau_strong > tau_weak + 0.3);

  PatientRecord comonotone;
  comonotone.id = "c";
  for (int t = 0; t < 8; ++t) {
    comonotone.observations.push_back(t);
    comonotone.observations.push_back(t);
    comonotone.treatment.push_back(0);
  }
  CHECK(*empirical_dependence({comonotone}).tau_b == doctest::Approx(1.0));

  PatientRecord flat = comonotone;
  for (int t = 0; t < 8; ++t) flat.observations[2 * t] = 4;
  CHECK_FALSE(empirical_dependence({flat}).tau_b.has_value());
}

TEST_CASE("same seed gives byte-identical files at any thread count") {
  CohortSpec spec = base_spec(3, CopulaFamily::SurvivalGumbel, 2.5);
  spec.features = {Feature::Treatment, Feature::LagActivity};
  spec.config.covariate_dim = 2;
  spec.params = ParameterSet::defaults(spec.config);
  spec.params.covariate_coef(1, 2)[0] = -0.5;
  spec.missing_rate = 0.1;
  spec.label_flip_rate = 0.2;
  spec.num_patients = 30;
  spec.horizon = 26;
  TempDir dir("determinism");
  auto dump = [&](int threads, std::uint64_t seed, const std::string& tag) {
    const auto cohort = simulate_cohort(spec, seed, threads);
    write_observations_csv(dir.file(tag + "o.csv"), cohort);
    write_profiles_csv(dir.file(tag + "p.csv"), cohort);
    write_labels_csv(dir.file(tag + "l.csv"), cohort);
    return slurp(dir.file(tag + "o.csv")) + slurp(dir.file(tag + "p.csv")) + slurp(dir.file(tag + "l.csv"));
  };
  const std::string a = dump(1, 42, "a");
  CHECK(a == dump(1, 42, "b"));
  CHECK(a == dump(4, 42, "c"));
  CHECK(a != dump(1, 43, "d"));
}

TEST_CASE("cohort spec json round trip") {
  CohortSpec spec = base_spec(2, CopulaFamily::AliMikhailHaq, 0.4);
  spec.features = {Feature::Age};
  spec.config.covariate_dim = 1;
  spec.params = ParameterSet::defaults(spec.config);
  spec.params.covariate_coef(0, 1)[0] = 0.02;
  spec.covariates.bmi.sd = 3.0;
  spec.covariates.level_probs[0] = {0.3, 0.7};
  spec.treatment_prob = 0.1;
  spec.first_id = 501;
  const CohortSpec back = cohort_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
  CHECK(to_json(back) == to_json(spec));
  CHECK(simulate_cohort(back, 2).front().id == "P0501");

  auto j = to_json(spec);
  j["treatment_prob"] = 1.5;
  CHECK_THROWS_AS(cohort_spec_from_json(j), std::invalid_argument);
  CHECK_THROWS_AS(cohort_spec_from_json(nlohmann::json::object()), std::invalid_argument);
}
