#include "vdc/emissions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vdc {

std::vector<double> truncated_poisson_pmf(double rate, int scale_max) {
  if (!(rate > 0.0) || !std::isfinite(rate))
    throw std::invalid_argument("truncated Poisson rate must be positive and finite");
  if (scale_max < 0) throw std::invalid_argument("scale_max must be >= 0");
  std::vector<double> logw(scale_max + 1);
  const double log_rate = std::log(rate);
  double top = -std::numeric_limits<double>::infinity();
  for (int y = 0; y <= scale_max; ++y) {
    logw[y] = y * log_rate - std::lgamma(y + 1.0);  // e^{-rate} cancels
    top = std::max(top, logw[y]);
  }
  double total = 0.0;
  for (double lw : logw) total += std::exp(lw - top);
  const double log_norm = top + std::log(total);
  std::vector<double> pmf(scale_max + 1);
  for (int y = 0; y <= scale_max; ++y) pmf[y] = std::exp(logw[y] - log_norm);
  return pmf;
}

CopulaParam state_copula(const ParameterSet& params, const ModelConfig& config, int state) {
  CopulaParam c{config.copula_family, 0.0};
  if (config.has_copula_params()) c.value = params.copula_params.at(state);
  return c;
}

std::vector<EmissionTable> build_emission_tables(const ParameterSet& params, const ModelConfig& config) {
  const int S = config.num_states;
  const int m = config.num_margins;
  std::vector<EmissionTable> tables(S);
  for (int s = 0; s < S; ++s) {
    EmissionTable& t = tables[s];
    t.state = s;
    t.copula = state_copula(params, config, s);
    t.marginal_pmfs.resize(m);
    t.marginal_cdfs.resize(m);
    for (int k = 0; k < m; ++k) {
      t.marginal_pmfs[k] = truncated_poisson_pmf(params.rate(s, k), config.scale_max[k]);
      auto& F = t.marginal_cdfs[k];
      F.resize(t.marginal_pmfs[k].size());
      double acc = 0.0;
      for (std::size_t y = 0; y < F.size(); ++y) F[y] = (acc += t.marginal_pmfs[k][y]);
      F.back() = 1.0;
    }
    if (m == 1 || t.copula.family == CopulaFamily::Independence) {
      // Exact products of the marginal pmfs.
      t.pmf.sizes.resize(m);
      std::size_t cells = 1;
      for (int k = 0; k < m; ++k) cells *= (t.pmf.sizes[k] = config.scale_max[k] + 1);
      t.pmf.values.assign(cells, 1.0);
      std::vector<int> y(m, 0);
      for (std::size_t cell = 0; cell < cells; ++cell) {
        for (int k = 0; k < m; ++k) t.pmf.values[cell] *= t.marginal_pmfs[k][y[k]];
        for (int k = m - 1; k >= 0 && ++y[k] == t.pmf.sizes[k]; --k) y[k] = 0;
      }
    } else {
      std::vector<std::vector<double>> survivals(m);
      for (int k = 0; k < m; ++k) {
        const auto& f = t.marginal_pmfs[k];
        survivals[k].assign(f.size(), 0.0);
        double tail = 0.0;
        for (int y = static_cast<int>(f.size()) - 1; y >= 0; --y) {
          survivals[k][y] = tail;
          tail += f[y];
        }
      }
      t.pmf = joint_pmf(t.copula, t.marginal_cdfs, survivals);
    }
    t.log_pmf.resize(t.pmf.values.size());
    for (std::size_t i = 0; i < t.log_pmf.size(); ++i)
      t.log_pmf[i] = t.pmf.values[i] > 0.0 ? std::log(t.pmf.values[i])
                                           : -std::numeric_limits<double>::infinity();
  }
  return tables;
}

namespace {

// Probability that the observed margins take their values, with the
// missing margins' copula arguments set to one.
double partial_prob(const EmissionTable& t, std::span<const int> y) {
  const std::size_t m = y.size();
  std::vector<std::size_t> observed;
  for (std::size_t k = 0; k < m; ++k)
    if (y[k] != kMissing) observed.push_back(k);
  if (t.copula.family == CopulaFamily::Independence || observed.size() == 1) {
    double p = 1.0;
    for (std::size_t k : observed) p *= t.marginal_pmfs[k][y[k]];
    return p;
  }
  std::vector<double> args(m, 1.0);
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << observed.size()); ++mask) {
    int bits = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
      const std::size_t k = observed[i];
      const int shift = (mask >> i) & 1u;
      bits += shift;
      const int v = y[k] - shift;
      args[k] = v < 0 ? 0.0 : t.marginal_cdfs[k][v];
    }
    total += (bits % 2 ? -1.0 : 1.0) * copula_cdf(t.copula, args);
  }
  return std::max(total, 0.0);
}

}  // namespace

double emission_prob(const std::vector<EmissionTable>& tables, int state, std::span<const int> y) {
  const EmissionTable& t = tables.at(state);
  if (y.size() != t.pmf.sizes.size())
    throw std::invalid_argument("observation has " + std::to_string(y.size()) + " margins, expected " +
                                std::to_string(t.pmf.sizes.size()));
  int missing = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] == kMissing) {
      ++missing;
    } else if (y[k] < 0 || y[k] >= t.pmf.sizes[k]) {
      throw std::out_of_range("value " + std::to_string(y[k]) + " outside the scale of margin " +
                              std::to_string(k));
    }
  }
  if (missing == 0) return t.pmf.at(y);
  if (missing == static_cast<int>(y.size())) return 1.0;
  return partial_prob(t, y);
}

double log_emission(const std::vector<EmissionTable>& tables, int state, std::span<const int> y) {
  const EmissionTable& t = tables.at(state);
  bool complete = y.size() == t.pmf.sizes.size();
  for (int v : y) complete = complete && v != kMissing;
  if (complete) return t.log_pmf[t.pmf.index(y)];
  const double p = emission_prob(tables, state, y);
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

}  // namespace vdc
