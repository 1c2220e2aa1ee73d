#ifndef VDC_TRANSITIONS_HPP
#define VDC_TRANSITIONS_HPP

#include <span>
#include <vector>

#include "vdc/model.hpp"

namespace vdc {

struct TransitionContext {
  int current_state = 0;
  int duration = 1;                      // weeks in current_state, >= 1
  std::span<const double> covariates;   // length covariate_dim, or empty
};

// Multinomial logit with the current state as base category:
// eta_jl = delta_jl + omega_jl * d + x . beta_jl, eta_jj = 0. Durations
// beyond the cap saturate at duration_cap.
std::vector<double> transition_row(const ParameterSet& params, const ModelConfig& config,
                                   const TransitionContext& ctx);

// Rows for every origin state and duration 1..duration_cap under one
// covariate vector.
class TransitionTensor {
 public:
  TransitionTensor(const ParameterSet& params, const ModelConfig& config,
                   std::span<const double> covariates);

  int num_states() const { return num_states_; }
  int duration_cap() const { return duration_cap_; }
  // Durations above the cap read the capped row.
  double prob(int from, int duration, int to) const {
    const int d = duration > duration_cap_ ? duration_cap_ : duration;
    return values_[((from * duration_cap_) + (d - 1)) * num_states_ + to];
  }
  std::span<const double> row(int from, int duration) const;

 private:
  int num_states_;
  int duration_cap_;
  std::vector<double> values_;
};

}  // namespace vdc

#endif  // VDC_TRANSITIONS_HPP
