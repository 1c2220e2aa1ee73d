#include "vdc/transitions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vdc {

std::vector<double> transition_row(const ParameterSet& params, const ModelConfig& config,
                                   const TransitionContext& ctx) {
  const int S = config.num_states;
  const int j = ctx.current_state;
  if (j < 0 || j >= S) throw std::invalid_argument("transition origin state out of range");
  if (ctx.duration < 1) throw std::invalid_argument("duration must be >= 1");
  const int p = config.active_covariates();
  if (p > 0 && static_cast<int>(ctx.covariates.size()) != config.covariate_dim)
    throw std::invalid_argument("covariate vector has wrong length");
  const double d = std::min(ctx.duration, config.duration_cap);

  std::vector<double> eta(S, 0.0);
  for (int l = 0; l < S; ++l) {
    if (l == j) continue;
    double e = params.intercept(j, l);
    if (config.use_duration) e += params.duration_coef(j, l) * d;
    auto beta = params.covariate_coef(j, l);
    for (int c = 0; c < p; ++c) e += ctx.covariates[c] * beta[c];
    eta[l] = e;
  }
  const double top = *std::max_element(eta.begin(), eta.end());
  double total = 0.0;
  for (double& e : eta) total += (e = std::exp(e - top));
  for (double& e : eta) e /= total;
  return eta;
}

TransitionTensor::TransitionTensor(const ParameterSet& params, const ModelConfig& config,
                                   std::span<const double> covariates)
    : num_states_(config.num_states), duration_cap_(config.duration_cap) {
  values_.resize(static_cast<std::size_t>(num_states_) * duration_cap_ * num_states_);
  for (int j = 0; j < num_states_; ++j) {
    for (int d = 1; d <= duration_cap_; ++d) {
      std::vector<double> r;
      if (d > 1 && !config.use_duration) {
        auto prev = row(j, 1);
        r.assign(prev.begin(), prev.end());
      } else {
        r = transition_row(params, config, {j, d, covariates});
      }
      std::copy(r.begin(), r.end(), values_.begin() + ((j * duration_cap_) + (d - 1)) * num_states_);
    }
  }
}

std::span<const double> TransitionTensor::row(int from, int duration) const {
  const int d = duration > duration_cap_ ? duration_cap_ : duration;
  return {values_.data() + ((from * duration_cap_) + (d - 1)) * num_states_,
          static_cast<std::size_t>(num_states_)};
}

}  // namespace vdc
