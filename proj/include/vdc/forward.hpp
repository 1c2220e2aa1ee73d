#ifndef VDC_FORWARD_HPP
#define VDC_FORWARD_HPP

#include <span>
#include <vector>

#include "vdc/emissions.hpp"
#include "vdc/model.hpp"
#include "vdc/transitions.hpp"

namespace vdc {

// One patient's model-ready series. Observation row t holds the m measures
// of week t (kMissing for gaps); covariate row t drives the transition out
// of week t.
struct SequenceData {
  int length = 0;
  int num_margins = 0;
  int covariate_dim = 0;
  std::vector<int> observations;
  std::vector<double> covariates;

  std::span<const int> obs(int t) const {
    return {observations.data() + static_cast<std::size_t>(t) * num_margins,
            static_cast<std::size_t>(num_margins)};
  }
  std::span<const double> x(int t) const {
    return {covariates.data() + static_cast<std::size_t>(t) * covariate_dim,
            static_cast<std::size_t>(covariate_dim)};
  }
};

// Filtered distribution over (state, duration) after `week` observations.
// log_alpha holds log P(S_t = s, d_t = d | y_1..t) (normalized), laid out
// [state][duration - 1]; log_norm is log P(y_1..t).
struct ForwardState {
  int week = 0;
  int num_states = 0;
  int duration_cap = 0;
  std::vector<double> log_alpha;
  double log_norm = 0.0;

  double log_alpha_at(int state, int duration) const {
    return log_alpha[static_cast<std::size_t>(state) * duration_cap + (duration - 1)];
  }
  // log P(y_1..t, S_t = s, d_t = d)
  double joint_log_alpha(int state, int duration) const { return log_alpha_at(state, duration) + log_norm; }
  std::vector<double> state_marginals() const;
};

ForwardState forward_init(const ParameterSet& params, const ModelConfig& config,
                          const std::vector<EmissionTable>& tables, std::span<const int> y1);

// Advances one week. `transitions` must be built from the covariate row of
// the previous week.
ForwardState forward_step(const ForwardState& state, const ModelConfig& config,
                          const std::vector<EmissionTable>& tables, const TransitionTensor& transitions,
                          std::span<const int> y);

// Sum over all num_states^T state paths with their implied durations.
// Refuses instances with more than 10^6 paths.
double brute_force_loglik(const ParameterSet& params, const ModelConfig& config, const SequenceData& data);

enum class TieBreak { LowestIndex, HighestIndex };

struct FilterResult {
  std::vector<std::vector<double>> marginals;  // [week][state], P(S_t | y_1..t)
  std::vector<int> map_states;                 // argmax per week
  double log_likelihood = 0.0;                 // log P(y_1..up_to)
};

int argmax_state(std::span<const double> marginal, TieBreak tie_break);

// On-line filtering through week `up_to` (1-based, inclusive).
FilterResult filter_sequence(const ParameterSet& params, const ModelConfig& config, const SequenceData& data,
                             int up_to, TieBreak tie_break = TieBreak::LowestIndex);

// Distinct covariate rows of a cohort (over the covariates that enter the
// transitions). Weeks that share a row share their transition
// probabilities, so the engine can tabulate them once per parameter set.
struct CovariateIndex {
  int dim = 0;
  std::vector<double> rows;           // [row][dim]
  std::vector<std::vector<int>> ids;  // [sequence][week]

  int num_rows() const { return dim == 0 ? 1 : static_cast<int>(rows.size()) / dim; }
};

CovariateIndex index_covariates(const ModelConfig& config, const std::vector<SequenceData>& cohort);

// Hot-path sequence likelihood: the same recursion in linear space with a
// per-week rescaling. Emission tables and the duration factors are built
// once per parameter set and shared across patients.
class LikelihoodEngine {
 public:
  LikelihoodEngine(const ParameterSet& params, const ModelConfig& config);

  double loglik(const SequenceData& data) const;
  // Transition probabilities for every indexed row, laid out
  // [row][from][to][duration - 1]; empty when the index is too large to be
  // worth tabulating.
  std::vector<double> transition_table(const CovariateIndex& index) const;
  // Same likelihood from a table built by transition_table; `row_ids` maps
  // each week to its covariate row.
  double loglik(const SequenceData& data, std::span<const int> row_ids, std::span<const double> table) const;
  const std::vector<EmissionTable>& tables() const { return tables_; }

 private:
  void fallback_row(int from, int duration, std::span<const double> x, std::vector<double>& out) const;
  void emission_probs(const SequenceData& data, std::vector<double>& b) const;

  ModelConfig config_;
  ParameterSet params_;
  std::vector<EmissionTable> tables_;
  std::vector<double> duration_factor_;  // [from][to][d - 1] = exp(omega_jl * d)
  std::vector<double> factor_max_;       // [from][to] = max over d of duration_factor_
};

// `index`, when given, must come from index_covariates on the same cohort.
std::vector<double> patient_logliks(const ParameterSet& params, const ModelConfig& config,
                                    const std::vector<SequenceData>& cohort, int threads = 1,
                                    const CovariateIndex* index = nullptr);
double cohort_loglik(const ParameterSet& params, const ModelConfig& config,
                     const std::vector<SequenceData>& cohort, int threads = 1);

}  // namespace vdc

#endif  // VDC_FORWARD_HPP
