#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "unit/test_support.hpp"
#include "vdc/inference.hpp"
#include "vdc/simulate.hpp"

using namespace vdc;

namespace {

ModelConfig scalar_config() {
  ModelConfig c;
  c.num_states = 1;
  c.num_margins = 1;
  c.scale_max = {10};
  c.copula_family = CopulaFamily::Independence;
  c.use_duration = false;
  c.use_covariates = false;
  return c;
}

SequenceData scalar_sequence(std::vector<int> ys) {
  SequenceData d;
  d.length = static_cast<int>(ys.size());
  d.num_margins = 1;
  d.observations = std::move(ys);
  return d;
}

}  // namespace

TEST_CASE("sampler space round trip and prior equivalence") {
  std::mt19937_64 rng(3);
  ModelConfig c;
  c.covariate_dim = 3;
  std::vector<SequenceData> cohort;
  for (int i = 0; i < 10; ++i) cohort.push_back(testing::random_sequence(c, 12, rng));
  for (auto& s : cohort)
    for (int t = 0; t < s.length; ++t) s.covariates[t * 3 + 2] = 5.0 + 2.0 * s.covariates[t * 3 + 1] + s.covariates[t * 3];
  // third column is an affine mix plus noise-free offset of the others: collinear
  CHECK_THROWS_AS(covariate_basis(c, cohort), std::invalid_argument);
  for (auto& s : cohort)
    for (int t = 0; t < s.length; ++t) s.covariates[t * 3 + 2] = 40.0 + 3.0 * std::normal_distribution<double>()(rng);

  const auto basis = covariate_basis(c, cohort);
  REQUIRE(basis.has_value());
  const SamplerSpace space(c, basis);
  const ParameterSet p = testing::random_params(c, rng);
  const auto v = to_unconstrained(p, c);
  const auto theta = space.to_sampler(v);
  const auto back = space.to_unconstrained(theta);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-12));

  // Linear predictors agree between the two parametrizations.
  const ParameterSet q = from_unconstrained(back, c);
  const TransitionTensor a(p, c, cohort[0].x(3)), b(q, c, cohort[0].x(3));
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) CHECK(a.prob(j, 4, k) == doctest::Approx(b.prob(j, 4, k)).epsilon(1e-10));
}

TEST_CASE("log posterior composition") {
  const ModelConfig c = scalar_config();
  const PriorSpec priors;
  const std::vector<double> v = {std::log(2.0)};
  const ParameterSet p = from_unconstrained(v, c);
  const double prior_part = log_prior(p, c, priors) + log_jacobian(v, c);

  SUBCASE("empty cohort is prior plus Jacobian") { CHECK(log_posterior(v, {}, c, priors) == prior_part); }
  SUBCASE("single sequence adds emission log terms") {
    const auto seq = scalar_sequence({0, 3, 5, 2});
    const auto f = truncated_poisson_pmf(2.0, 10);
    const double expected = prior_part + std::log(f[0]) + std::log(f[3]) + std::log(f[5]) + std::log(f[2]);
    CHECK(log_posterior(v, {seq}, c, priors) == doctest::Approx(expected).epsilon(1e-13));
    // half-normal(0, 5) at 2 plus log 2 for the log transform
    const double hn = std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi * 25.0) - 2.0 / 25.0;
    CHECK(prior_part == doctest::Approx(hn + std::log(2.0)).epsilon(1e-13));
  }
  SUBCASE("duplicate patient adds its likelihood") {
    std::mt19937_64 rng(1);
    ModelConfig full;
    full.covariate_dim = 2;
    const ParameterSet params = testing::random_params(full, rng);
    const auto w = to_unconstrained(params, full);
    std::vector<SequenceData> cohort{testing::random_sequence(full, 20, rng), testing::random_sequence(full, 20, rng)};
    const double base = log_posterior(w, cohort, full, priors);
    const double one = LikelihoodEngine(params, full).loglik(cohort[1]);
    cohort.push_back(cohort[1]);
    CHECK(log_posterior(w, cohort, full, priors) == doctest::Approx(base + one).epsilon(1e-13));
  }
  SUBCASE("dimension mismatch throws") {
    const std::vector<double> bad = {0.0, 1.0};
    CHECK_THROWS_AS(log_posterior(bad, {}, c, priors), std::invalid_argument);
  }
}

TEST_CASE("split R-hat and ESS on synthetic chains") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> iid(4, std::vector<double>(2000));
  for (auto& ch : iid)
    for (double& x : ch) x = z(rng);
  CHECK(split_rhat(iid) < 1.01);
  CHECK(split_rhat(iid) >= 1.0);
  const double ess_iid = effective_sample_size(iid);
  CHECK(ess_iid > 6500);
  CHECK(ess_iid < 10000);

  auto shifted = iid;
  for (double& x : shifted[0]) x += 2.0;
  CHECK(split_rhat(shifted) > 1.2);

  // AR(1) with phi = 0.9: ESS about n (1 - phi) / (1 + phi).
  std::vector<std::vector<double>> ar(4, std::vector<double>(5000));
  for (auto& ch : ar) {
    double x = z(rng) / std::sqrt(1 - 0.81);
    for (double& y : ch) y = x = 0.9 * x + z(rng);
  }
  const double expected = 20000 * 0.1 / 1.9;
  CHECK(effective_sample_size(ar) == doctest::Approx(expected).epsilon(0.25));
}

TEST_CASE("lpd, WAIC and LOO") {
  SUBCASE("two-draw toy matrix") {
    const std::vector<double> ll = {-1, -2, -3, -2};
    CHECK(compute_lpd(ll, 2) == doctest::Approx(-3.5662191695169727).epsilon(1e-12));
    CHECK(deviance(compute_lpd(ll, 2)) == doctest::Approx(7.132438339033945).epsilon(1e-12));
  }
  SUBCASE("constant draws have no WAIC penalty") {
    const std::vector<double> ll = {-1.5, -2.5, -1.5, -2.5, -1.5, -2.5};
    CHECK(compute_waic(ll, 3) == doctest::Approx(-2.0 * compute_lpd(ll, 3)).epsilon(1e-14));
    CHECK(compute_loo(ll, 3) == doctest::Approx(-2.0 * compute_lpd(ll, 3)).epsilon(1e-14));
  }
  SUBCASE("LOO never exceeds lpd") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const int D = 400, N = 15;
      std::vector<double> ll(D * N);
      for (int d = 0; d < D; ++d)
        for (int i = 0; i < N; ++i) ll[d * N + i] = -10.0 - i + (0.2 + 0.1 * trial) * z(rng);
      const auto loo = compute_loo_detail(ll, D);
      CHECK(loo.elpd <= compute_lpd(ll, D) + 1e-9);
      CHECK(std::abs(compute_waic(ll, D) - loo.deviance) / std::abs(loo.deviance) < 0.01);
    }
  }
  SUBCASE("one draw is rejected") {
    const std::vector<double> ll = {-1.0, -2.0};
    CHECK_THROWS_AS(compute_lpd(ll, 1), std::invalid_argument);
    CHECK_THROWS_AS(compute_waic(ll, 1), std::invalid_argument);
  }
  SUBCASE("a dominant weight is flagged") {
    std::vector<double> ll(1000, -1.0);
    ll[0] = -60.0;
    CHECK(compute_loo_detail(ll, 1000).flagged);
  }
}

TEST_CASE("pointwise log-likelihoods and held-out lpd") {
  std::mt19937_64 rng(21);
  ModelConfig c;
  c.covariate_dim = 1;
  PosteriorDraws draws;
  draws.names = unconstrained_names(c);
  draws.num_chains = 1;
  draws.draws_per_chain = 3;
  std::vector<ParameterSet> sets;
  for (int d = 0; d < 3; ++d) {
    sets.push_back(testing::random_params(c, rng));
    const auto v = to_unconstrained(sets.back(), c);
    draws.values.insert(draws.values.end(), v.begin(), v.end());
    draws.log_posterior.push_back(0.0);
  }
  std::vector<SequenceData> cohort;
  for (int i = 0; i < 4; ++i) cohort.push_back(testing::random_sequence(c, 15, rng));
  cohort.push_back(cohort[2]);
  const auto pw = pointwise_loglik(draws, c, cohort, 2);
  REQUIRE(pw.size() == 15);
  for (int d = 0; d < 3; ++d) {
    const auto expected = patient_logliks(sets[d], c, cohort);
    double row_sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(pw[d * 5 + i] == doctest::Approx(expected[i]).epsilon(1e-10));
      row_sum += pw[d * 5 + i];
    }
    CHECK(row_sum == doctest::Approx(cohort_loglik(sets[d], c, cohort)).epsilon(1e-9));
    CHECK(pw[d * 5 + 4] == pw[d * 5 + 2]);
  }
  const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  CHECK(out_of_sample_lpd(draws, c, cohort, {"x", "y"}, ids) == doctest::Approx(deviance(compute_lpd(pw, 3))));
  CHECK_THROWS_AS(out_of_sample_lpd(draws, c, cohort, {"q", "c"}, ids), std::invalid_argument);
}

TEST_CASE("draws csv round trip") {
  PosteriorDraws d;
  d.names = {"a", "b"};
  d.num_chains = 2;
  d.draws_per_chain = 2;
  d.values = {0.1, -1e-300, 3.0, 1.0 / 3.0, 5e10, -2.5, 7.0, 0.0};
  d.log_posterior = {-1.0, -2.0, -3.0, -4.25};
  std::stringstream ss;
  write_draws_csv(ss, d);
  const PosteriorDraws back = read_draws_csv(ss);
  CHECK(back.names == d.names);
  CHECK(back.num_chains == 2);
  CHECK(back.draws_per_chain == 2);
  CHECK(back.values == d.values);
  CHECK(back.log_posterior == d.log_posterior);
}

TEST_CASE("sampler is deterministic for a fixed seed") {
  std::mt19937_64 rng(5);
  ModelConfig c;
  c.num_states = 2;
  c.covariate_dim = 1;
  c.duration_cap = 10;
  std::vector<SequenceData> cohort;
  for (int i = 0; i < 5; ++i) cohort.push_back(testing::random_sequence(c, 5, rng));
  McmcConfig m;
  m.iterations = 300;
  m.warmup = 150;
  m.seed = 99;
  const auto a = run_mcmc(cohort, c, PriorSpec{}, m);
  m.threads = 2;
  const auto b = run_mcmc(cohort, c, PriorSpec{}, m);
  CHECK(a.draws.values == b.draws.values);
  CHECK(a.draws.log_posterior == b.draws.log_posterior);
  CHECK(a.draws.patient_loglik == b.draws.patient_loglik);
  m.seed = 100;
  const auto other = run_mcmc(cohort, c, PriorSpec{}, m);
  CHECK(other.draws.values != a.draws.values);
  for (double lp : a.draws.log_posterior) CHECK(std::isfinite(lp));
  CHECK(a.diagnostics.acceptance.size() == 2);
}

TEST_CASE("prior-only run reproduces the half-normal rate prior") {
  const ModelConfig c = scalar_config();
  McmcConfig m;
  m.num_chains = 4;
  m.iterations = 30000;
  m.warmup = 2000;
  m.seed = 7;
  const auto res = run_mcmc({}, c, PriorSpec{}, m);
  const auto summary = summarize_constrained(res.draws, c);
  REQUIRE(summary.size() == 1);
  // median of |N(0, 5)| = 5 * Phi^{-1}(0.75)
  CHECK(std::abs(summary[0].q50 - 3.3724487509834953) < 0.1);
  CHECK(res.diagnostics.converged);
}

TEST_CASE("posterior mean of a single rate matches numerical integration") {
  const ModelConfig c = scalar_config();
  const auto seq = scalar_sequence({2, 4, 3});
  // Grid posterior: half-normal(0, 5) prior times truncated Poisson terms.
  double num = 0.0, den = 0.0;
  for (int i = 1; i <= 400000; ++i) {
    const double lam = i * 5e-5;
    double log_post = -lam * lam / 50.0;
    double z = 0.0, term = 1.0;
    for (int y = 0; y <= 10; ++y) {
      if (y > 0) term *= lam / y;
      z += term;
    }
    for (int y : {2, 4, 3}) log_post += y * std::log(lam) - std::lgamma(y + 1.0) - std::log(z);
    const double w = std::exp(log_post);
    num += lam * w;
    den += w;
  }
  const double grid_mean = num / den;
  McmcConfig m;
  m.num_chains = 4;
  m.iterations = 40000;
  m.warmup = 2000;
  m.seed = 11;
  const auto res = run_mcmc({seq}, c, PriorSpec{}, m);
  const auto summary = summarize_constrained(res.draws, c);
  CHECK(std::abs(summary[0].mean - grid_mean) < 0.02);
}

TEST_CASE("data-informed start orders states and stays valid") {
  CohortSpec spec = reference_spec();
  spec.num_patients = 60;
  const auto seqs = to_sequences(simulate_cohort(spec, 21), spec.features);
  const ParameterSet start = data_informed_start(spec.config, seqs);
  CHECK_NOTHROW(start.validate(spec.config));
  for (int s = 1; s < spec.config.num_states; ++s) CHECK(start.rate(s, 0) > start.rate(s - 1, 0));
  for (int s = 0; s < spec.config.num_states; ++s) {
    CHECK(start.rate(s, 0) == doctest::Approx(spec.params.rate(s, 0)).epsilon(0.5));
    CHECK(start.copula_params[s] >= 1.0);
    for (int l = 0; l < spec.config.num_states; ++l)
      if (l != s) CHECK(start.intercept(s, l) == -2.0);
  }
  for (double w : start.duration_coefs) CHECK(w == 0.0);
  for (double b : start.covariate_coefs) CHECK(b == 0.0);
}

TEST_CASE("Laplace start climbs above the truth and uniform start skips it") {
  CohortSpec spec = reference_spec();
  spec.num_patients = 40;
  const auto seqs = to_sequences(simulate_cohort(spec, 22), spec.features);
  const auto basis = covariate_basis(spec.config, seqs);
  const double at_truth = log_posterior(to_unconstrained(spec.params, spec.config), seqs, spec.config, PriorSpec{},
                                        basis ? &*basis : nullptr);
  McmcConfig m;
  m.iterations = 60;
  m.warmup = 30;
  m.sweeps = 1;
  m.coordinate_moves = 1;
  const auto fit = run_mcmc(seqs, spec.config, PriorSpec{}, m);
  REQUIRE(std::isfinite(fit.diagnostics.mode_log_posterior));
  CHECK(fit.diagnostics.mode_log_posterior >= at_truth);
  CHECK(fit.diagnostics.block_names.back() == "joint");

  m.init = InitStrategy::Uniform;
  const auto uniform = run_mcmc(seqs, spec.config, PriorSpec{}, m);
  CHECK(std::isnan(uniform.diagnostics.mode_log_posterior));
}

TEST_CASE("sampler settings are validated") {
  McmcConfig m;
  CHECK_NOTHROW(m.validate());
  auto rejects = [](auto edit) {
    McmcConfig bad;
    edit(bad);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  rejects([](McmcConfig& c) { c.sweeps = 0; });
  rejects([](McmcConfig& c) { c.coordinate_moves = -1; });
  rejects([](McmcConfig& c) { c.wide_step_prob = 1.0; });
  rejects([](McmcConfig& c) { c.wide_step_factor = 0.5; });
  rejects([](McmcConfig& c) { c.init_spread = -1.0; });
  rejects([](McmcConfig& c) { c.warmup = c.iterations; });
}
