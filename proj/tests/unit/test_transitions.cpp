#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "unit/test_support.hpp"
#include "vdc/transitions.hpp"

using namespace vdc;

namespace {

ModelConfig transition_config(int states, bool duration, int covariates) {
  ModelConfig c;
  c.num_states = states;
  c.num_margins = 1;
  c.scale_max = {10};
  c.copula_family = CopulaFamily::Independence;
  c.duration_cap = 10;
  c.use_duration = duration;
  c.covariate_dim = covariates;
  c.use_covariates = covariates > 0;
  return c;
}

}  // namespace

TEST_CASE("zero logits give a uniform row") {
  const ModelConfig c = transition_config(3, true, 2);
  const ParameterSet p = ParameterSet::defaults(c);
  const std::vector<double> x = {0.3, -2.0};
  for (int d : {1, 4, 50}) {
    const auto row = transition_row(p, c, {1, d, x});
    for (double r : row) CHECK(r == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("duration coefficient ln 2 at d = 1") {
  const ModelConfig c = transition_config(2, true, 0);
  ParameterSet p = ParameterSet::defaults(c);
  p.duration_coef(0, 1) = std::numbers::ln2;
  const auto row = transition_row(p, c, {0, 1, {}});
  CHECK(row[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(row[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("rows are stochastic for random draws") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const ModelConfig c = testing::random_config(rng, 5, 1, 4);
    const ParameterSet p = testing::random_params(c, rng);
    std::vector<double> x(c.covariate_dim);
    std::normal_distribution<double> z(0.0, 2.0);
    for (double& v : x) v = z(rng);
    const int j = std::uniform_int_distribution<int>(0, c.num_states - 1)(rng);
    const int d = std::uniform_int_distribution<int>(1, 60)(rng);
    const auto row = transition_row(p, c, {j, d, x});
    double total = 0.0;
    for (double r : row) {
      CHECK(r >= 0.0);
      total += r;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("extreme logits stay finite") {
  const ModelConfig c = transition_config(3, true, 0);
  ParameterSet p = ParameterSet::defaults(c);
  p.intercept(0, 1) = 800.0;
  p.intercept(0, 2) = -800.0;
  const auto row = transition_row(p, c, {0, 1, {}});
  CHECK(row[1] == doctest::Approx(1.0));
  CHECK(row[0] >= 0.0);
}

TEST_CASE("duration saturates at the cap") {
  const ModelConfig c = transition_config(3, true, 0);
  ParameterSet p = ParameterSet::defaults(c);
  p.duration_coef(2, 0) = 0.3;
  p.duration_coef(2, 1) = -0.2;
  const auto capped = transition_row(p, c, {2, c.duration_cap, {}});
  const auto beyond = transition_row(p, c, {2, c.duration_cap + 7, {}});
  CHECK(capped == beyond);
  CHECK_THROWS_AS(transition_row(p, c, {2, 0, {}}), std::invalid_argument);
}

TEST_CASE("tensor matches rows and collapses without duration") {
  std::mt19937_64 rng(5);
  ModelConfig c = transition_config(3, true, 2);
  ParameterSet p = testing::random_params(c, rng);
  const std::vector<double> x = {0.4, -1.1};
  const TransitionTensor tensor(p, c, x);
  for (int j = 0; j < 3; ++j)
    for (int d = 1; d <= c.duration_cap; ++d) {
      const auto row = transition_row(p, c, {j, d, x});
      for (int k = 0; k < 3; ++k) CHECK(std::abs(tensor.prob(j, d, k) - row[k]) <= 1e-15);
    }

  c.use_duration = false;
  p.duration_coefs.assign(p.duration_coefs.size(), 0.0);
  const TransitionTensor flat(p, c, x);
  for (int j = 0; j < 3; ++j)
    for (int d = 2; d <= c.duration_cap; ++d)
      for (int k = 0; k < 3; ++k) CHECK(flat.prob(j, d, k) == flat.prob(j, 1, k));
}

TEST_CASE("single state tensor is identically one") {
  const ModelConfig c = transition_config(1, true, 0);
  const TransitionTensor t(ParameterSet::defaults(c), c, {});
  for (int d = 1; d <= c.duration_cap; ++d) CHECK(t.prob(0, d, 0) == 1.0);
}

TEST_CASE("leaving probability follows the sign of the duration coefficient") {
  const ModelConfig c = transition_config(3, true, 0);
  for (double omega : {-0.4, 0.25}) {
    ParameterSet p = ParameterSet::defaults(c);
    p.intercept(1, 0) = -1.0;
    p.intercept(1, 2) = 0.5;
    p.duration_coef(1, 2) = omega;
    const TransitionTensor t(p, c, {});
    for (int d = 1; d < c.duration_cap; ++d) {
      const double diff = t.prob(1, d + 1, 2) - t.prob(1, d, 2);
      if (omega > 0)
        CHECK(diff > 0.0);
      else
        CHECK(diff < 0.0);
    }
  }
}
