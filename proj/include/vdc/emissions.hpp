#ifndef VDC_EMISSIONS_HPP
#define VDC_EMISSIONS_HPP

#include <span>
#include <vector>

#include "vdc/copula.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Sentinel for a missing measurement in an observation vector.
inline constexpr int kMissing = -1;

// Poisson(rate) renormalized onto {0..scale_max}; computed in log space.
std::vector<double> truncated_poisson_pmf(double rate, int scale_max);

struct EmissionTable {
  int state = 0;
  PmfTable pmf;
  std::vector<double> log_pmf;
  std::vector<std::vector<double>> marginal_pmfs;
  std::vector<std::vector<double>> marginal_cdfs;
  CopulaParam copula;
};

CopulaParam state_copula(const ParameterSet& params, const ModelConfig& config, int state);

std::vector<EmissionTable> build_emission_tables(const ParameterSet& params, const ModelConfig& config);

// Probability of an observation under one state. Missing margins are
// marginalized out: a fully missing observation has probability 1.
double emission_prob(const std::vector<EmissionTable>& tables, int state, std::span<const int> y);
double log_emission(const std::vector<EmissionTable>& tables, int state, std::span<const int> y);

}  // namespace vdc

#endif  // VDC_EMISSIONS_HPP
