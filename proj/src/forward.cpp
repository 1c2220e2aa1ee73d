#include "vdc/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "vdc/parallel.hpp"

namespace vdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

// Normalizes in place; returns the log of the removed total.
double normalize_log(std::vector<double>& v) {
  double top = kNegInf;
  for (double x : v) top = std::max(top, x);
  if (top == kNegInf) return kNegInf;
  double total = 0.0;
  for (double x : v) total += std::exp(x - top);
  const double log_total = top + std::log(total);
  for (double& x : v) x -= log_total;
  return log_total;
}

void check_sequence(const SequenceData& data, const ModelConfig& config) {
  if (data.num_margins != config.num_margins)
    throw std::invalid_argument("sequence has " + std::to_string(data.num_margins) +
                                " margins, model expects " + std::to_string(config.num_margins));
  if (static_cast<int>(data.observations.size()) != data.length * data.num_margins)
    throw std::invalid_argument("sequence observation buffer has wrong size");
  if (config.active_covariates() > 0) {
    if (data.covariate_dim != config.covariate_dim)
      throw std::invalid_argument("sequence has " + std::to_string(data.covariate_dim) +
                                  " covariates, model expects " + std::to_string(config.covariate_dim));
    if (static_cast<int>(data.covariates.size()) != data.length * data.covariate_dim)
      throw std::invalid_argument("sequence covariate buffer has wrong size");
  }
}

std::span<const double> covariate_row(const SequenceData& data, const ModelConfig& config, int t) {
  if (config.active_covariates() == 0) return {};
  return data.x(t);
}

}  // namespace

std::vector<double> ForwardState::state_marginals() const {
  std::vector<double> out(num_states, 0.0);
  double total = 0.0;
  for (int s = 0; s < num_states; ++s) {
    for (int d = 1; d <= duration_cap; ++d) out[s] += std::exp(log_alpha_at(s, d));
    total += out[s];
  }
  if (total > 0.0)
    for (double& x : out) x /= total;
  return out;
}

ForwardState forward_init(const ParameterSet& params, const ModelConfig& config,
                          const std::vector<EmissionTable>& tables, std::span<const int> y1) {
  ForwardState st;
  st.week = 1;
  st.num_states = config.num_states;
  st.duration_cap = config.duration_cap;
  st.log_alpha.assign(static_cast<std::size_t>(st.num_states) * st.duration_cap, kNegInf);
  for (int s = 0; s < st.num_states; ++s) {
    const double w = params.initial_dist[s];
    st.log_alpha[static_cast<std::size_t>(s) * st.duration_cap] =
        (w > 0.0 ? std::log(w) : kNegInf) + log_emission(tables, s, y1);
  }
  st.log_norm = normalize_log(st.log_alpha);
  return st;
}

ForwardState forward_step(const ForwardState& state, const ModelConfig& config,
                          const std::vector<EmissionTable>& tables, const TransitionTensor& transitions,
                          std::span<const int> y) {
  const int S = state.num_states;
  const int D = state.duration_cap;
  if (config.num_states != S || config.duration_cap != D)
    throw std::invalid_argument("forward state does not match the model config");
  ForwardState next;
  next.week = state.week + 1;
  next.num_states = S;
  next.duration_cap = D;
  next.log_alpha.assign(static_cast<std::size_t>(S) * D, kNegInf);
  if (state.log_norm == kNegInf) {
    next.log_norm = kNegInf;
    return next;
  }

  const int dmax = std::min(state.week, D);
  for (int j = 0; j < S; ++j) {
    for (int d = 1; d <= dmax; ++d) {
      const double la = state.log_alpha_at(j, d);
      if (la == kNegInf) continue;
      auto row = transitions.row(j, d);
      for (int k = 0; k < S; ++k) {
        const double lp = la + std::log(row[k]);
        const int target_d = k == j ? std::min(d + 1, D) : 1;
        double& cell = next.log_alpha[static_cast<std::size_t>(k) * D + (target_d - 1)];
        cell = log_add(cell, lp);
      }
    }
  }
  for (int k = 0; k < S; ++k) {
    const double lb = log_emission(tables, k, y);
    for (int d = 0; d < D; ++d) next.log_alpha[static_cast<std::size_t>(k) * D + d] += lb;
  }
  const double step = normalize_log(next.log_alpha);
  next.log_norm = step == kNegInf ? kNegInf : state.log_norm + step;
  return next;
}

double brute_force_loglik(const ParameterSet& params, const ModelConfig& config, const SequenceData& data) {
  params.validate(config);
  check_sequence(data, config);
  const int S = config.num_states;
  const int T = data.length;
  if (T < 1) throw std::invalid_argument("empty series");
  double paths = 1.0;
  for (int t = 0; t < T; ++t) paths *= S;
  if (paths > 1e6) throw std::invalid_argument("brute force limited to 10^6 state paths");

  const auto tables = build_emission_tables(params, config);
  std::vector<double> log_b(static_cast<std::size_t>(T) * S);
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) log_b[t * S + s] = log_emission(tables, s, data.obs(t));

  std::vector<int> path(T, 0);
  double total = kNegInf;
  for (;;) {
    double lp = std::log(params.initial_dist[path[0]]) + log_b[path[0]];
    int duration = 1;
    for (int t = 1; t < T && lp != kNegInf; ++t) {
      const auto row = transition_row(params, config, {path[t - 1], duration, covariate_row(data, config, t - 1)});
      lp += std::log(row[path[t]]) + log_b[t * S + path[t]];
      duration = path[t] == path[t - 1] ? duration + 1 : 1;
    }
    total = log_add(total, lp);

    int t = T - 1;
    while (t >= 0 && ++path[t] == S) path[t--] = 0;
    if (t < 0) break;
  }
  return total;
}

int argmax_state(std::span<const double> marginal, TieBreak tie_break) {
  int best = 0;
  for (int s = 1; s < static_cast<int>(marginal.size()); ++s) {
    if (marginal[s] > marginal[best] || (tie_break == TieBreak::HighestIndex && marginal[s] == marginal[best]))
      best = s;
  }
  return best;
}

FilterResult filter_sequence(const ParameterSet& params, const ModelConfig& config, const SequenceData& data,
                             int up_to, TieBreak tie_break) {
  params.validate(config);
  check_sequence(data, config);
  if (data.length < 1) throw std::invalid_argument("empty series");
  if (up_to < 1 || up_to > data.length)
    throw std::invalid_argument("filter horizon " + std::to_string(up_to) + " outside 1.." +
                                std::to_string(data.length));
  const auto tables = build_emission_tables(params, config);
  FilterResult out;
  out.marginals.reserve(up_to);
  out.map_states.reserve(up_to);
  ForwardState st = forward_init(params, config, tables, data.obs(0));
  for (int t = 0;; ++t) {
    out.marginals.push_back(st.state_marginals());
    out.map_states.push_back(argmax_state(out.marginals.back(), tie_break));
    if (t + 1 >= up_to) break;
    const TransitionTensor tensor(params, config, covariate_row(data, config, t));
    st = forward_step(st, config, tables, tensor, data.obs(t + 1));
  }
  out.log_likelihood = st.log_norm;
  return out;
}

LikelihoodEngine::LikelihoodEngine(const ParameterSet& params, const ModelConfig& config)
    : config_(config), params_(params) {
  params_.validate(config_);
  tables_ = build_emission_tables(params_, config_);
  const int S = config_.num_states;
  const int D = config_.duration_cap;
  duration_factor_.assign(static_cast<std::size_t>(S) * S * D, 1.0);
  factor_max_.assign(static_cast<std::size_t>(S) * S, 1.0);
  if (config_.use_duration) {
    for (int j = 0; j < S; ++j)
      for (int l = 0; l < S; ++l)
        factor_max_[j * S + l] = std::exp(std::max(params_.duration_coef(j, l), params_.duration_coef(j, l) * D));
    for (int j = 0; j < S; ++j)
      for (int l = 0; l < S; ++l)
        for (int d = 1; d <= D; ++d)
          duration_factor_[(static_cast<std::size_t>(j) * S + l) * D + (d - 1)] =
              std::exp(params_.duration_coef(j, l) * d);
  }
}

void LikelihoodEngine::fallback_row(int from, int duration, std::span<const double> x,
                                    std::vector<double>& out) const {
  out = transition_row(params_, config_, {from, duration, x});
}

void LikelihoodEngine::emission_probs(const SequenceData& data, std::vector<double>& b) const {
  const int S = config_.num_states;
  const int T = data.length;
  const int m = config_.num_margins;
  b.assign(static_cast<std::size_t>(T) * S, 0.0);
  for (int t = 0; t < T; ++t) {
    const auto y = data.obs(t);
    bool complete = true;
    std::size_t idx = 0;
    for (int k = 0; k < m; ++k) {
      if (y[k] == kMissing) {
        complete = false;
        break;
      }
      if (y[k] < 0 || y[k] > config_.scale_max[k])
        throw std::out_of_range("observation " + std::to_string(y[k]) + " outside scale of margin " +
                                std::to_string(k));
      idx = idx * (config_.scale_max[k] + 1) + y[k];
    }
    for (int s = 0; s < S; ++s)
      b[t * S + s] = complete ? tables_[s].pmf.values[idx] : emission_prob(tables_, s, y);
  }
}

double LikelihoodEngine::loglik(const SequenceData& data) const {
  check_sequence(data, config_);
  const int S = config_.num_states;
  const int D = config_.duration_cap;
  const int T = data.length;
  const int p = config_.active_covariates();
  if (T < 1) throw std::invalid_argument("empty series");

  std::vector<double> b;
  emission_probs(data, b);

  std::vector<double> alpha(static_cast<std::size_t>(S) * D, 0.0);
  std::vector<double> next(alpha.size());
  std::vector<double> inflow(S);
  std::vector<double> base(static_cast<std::size_t>(S) * S);
  std::vector<double> denom(D), w(D);
  std::vector<double> row;

  double c = 0.0;
  for (int s = 0; s < S; ++s) c += (alpha[static_cast<std::size_t>(s) * D] = params_.initial_dist[s] * b[s]);
  if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
  for (double& a : alpha) a /= c;
  double ll = std::log(c);

  for (int t = 1; t < T; ++t) {
    const std::span<const double> x = p > 0 ? data.x(t - 1) : std::span<const double>{};
    for (int j = 0; j < S; ++j) {
      for (int l = 0; l < S; ++l) {
        if (l == j) continue;
        double eta = params_.intercept(j, l);
        if (p > 0) {
          auto beta = params_.covariate_coef(j, l);
          for (int k = 0; k < p; ++k) eta += x[k] * beta[k];
        }
        base[j * S + l] = std::exp(eta);
      }
    }
    std::fill(next.begin(), next.end(), 0.0);
    std::fill(inflow.begin(), inflow.end(), 0.0);
    const int dmax = std::min(t, D);
    for (int j = 0; j < S; ++j) {
      const double* a_row = alpha.data() + static_cast<std::size_t>(j) * D;
      double* n_row = next.data() + static_cast<std::size_t>(j) * D;
      // Row j at duration d: stay 1 / denom(d), leave to l base_jl f_jl(d) / denom(d).
      std::fill(denom.begin(), denom.begin() + dmax, 1.0);
      double bound = 1.0;
      for (int l = 0; l < S; ++l) {
        if (l == j) continue;
        const double bl = base[j * S + l];
        const double* f = duration_factor_.data() + (static_cast<std::size_t>(j) * S + l) * D;
        bound += bl * factor_max_[j * S + l];
        for (int d = 0; d < dmax; ++d) denom[d] += bl * f[d];
      }
      // bound dominates every denominator, so a finite bound rules out overflow.
      if (std::isfinite(bound)) {
        for (int d = 0; d < dmax; ++d) w[d] = a_row[d] / denom[d];
        for (int d = 0; d + 1 < dmax; ++d) n_row[d + 1] += w[d];
        n_row[std::min(dmax, D - 1)] += w[dmax - 1];
        for (int l = 0; l < S; ++l) {
          if (l == j) continue;
          const double* f = duration_factor_.data() + (static_cast<std::size_t>(j) * S + l) * D;
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          int d = 0;
          for (; d + 4 <= dmax; d += 4) {
            acc[0] += w[d] * f[d];
            acc[1] += w[d + 1] * f[d + 1];
            acc[2] += w[d + 2] * f[d + 2];
            acc[3] += w[d + 3] * f[d + 3];
          }
          for (; d < dmax; ++d) acc[0] += w[d] * f[d];
          inflow[l] += base[j * S + l] * ((acc[0] + acc[1]) + (acc[2] + acc[3]));
        }
      } else {
        for (int d = 1; d <= dmax; ++d) {
          const double a = a_row[d - 1];
          if (a == 0.0) continue;
          fallback_row(j, d, x, row);
          const int stay_d = std::min(d + 1, D);
          for (int l = 0; l < S; ++l) {
            if (l == j) n_row[stay_d - 1] += a * row[l];
            else inflow[l] += a * row[l];
          }
        }
      }
    }
    c = 0.0;
    const int dnew = std::min(t + 1, D);
    for (int s = 0; s < S; ++s) {
      double* n_row = next.data() + static_cast<std::size_t>(s) * D;
      n_row[0] += inflow[s];
      const double bs = b[t * S + s];
      for (int d = 0; d < dnew; ++d) c += (n_row[d] *= bs);
    }
    if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
    const double inv = 1.0 / c;
    for (int s = 0; s < S; ++s) {
      double* n_row = next.data() + static_cast<std::size_t>(s) * D;
      for (int d = 0; d < dnew; ++d) n_row[d] *= inv;
    }
    ll += std::log(c);
    alpha.swap(next);
  }
  return ll;
}

CovariateIndex index_covariates(const ModelConfig& config, const std::vector<SequenceData>& cohort) {
  CovariateIndex index;
  index.dim = config.active_covariates();
  std::map<std::vector<double>, int> seen;
  std::vector<double> key(index.dim);
  for (const auto& seq : cohort) {
    check_sequence(seq, config);
    std::vector<int> ids(seq.length);
    for (int t = 0; t < seq.length; ++t) {
      if (index.dim > 0) {
        const auto x = seq.x(t);
        std::copy(x.begin(), x.end(), key.begin());
      }
      const auto [it, inserted] = seen.try_emplace(key, static_cast<int>(seen.size()));
      if (inserted) index.rows.insert(index.rows.end(), key.begin(), key.end());
      ids[t] = it->second;
    }
    index.ids.push_back(std::move(ids));
  }
  return index;
}

std::vector<double> LikelihoodEngine::transition_table(const CovariateIndex& index) const {
  const int S = config_.num_states;
  const int D = config_.duration_cap;
  const int p = config_.active_covariates();
  if (index.dim != p) throw std::invalid_argument("covariate index does not match the model config");
  const int R = index.num_rows();
  std::size_t weeks = 0;
  for (const auto& ids : index.ids) weeks += ids.size();
  // Tabulating pays off only when rows repeat across weeks.
  const std::size_t size = static_cast<std::size_t>(R) * S * S * D;
  if (2 * static_cast<std::size_t>(R) > weeks + 1 || size > (std::size_t{1} << 23)) return {};

  std::vector<double> table(size);
  std::vector<double> eta(S);
  for (int r = 0; r < R; ++r) {
    const double* x = p > 0 ? index.rows.data() + static_cast<std::size_t>(r) * p : nullptr;
    for (int j = 0; j < S; ++j) {
      std::vector<double> base(S, 0.0);
      for (int l = 0; l < S; ++l) {
        if (l == j) continue;
        double e = params_.intercept(j, l);
        if (p > 0) {
          auto beta = params_.covariate_coef(j, l);
          for (int k = 0; k < p; ++k) e += x[k] * beta[k];
        }
        base[l] = e;
      }
      for (int d = 1; d <= D; ++d) {
        double top = 0.0;
        for (int l = 0; l < S; ++l) {
          eta[l] = l == j ? 0.0 : base[l] + (config_.use_duration ? params_.duration_coef(j, l) * d : 0.0);
          top = std::max(top, eta[l]);
        }
        double total = 0.0;
        for (int l = 0; l < S; ++l) total += (eta[l] = std::exp(eta[l] - top));
        for (int l = 0; l < S; ++l)
          table[((static_cast<std::size_t>(r) * S + j) * S + l) * D + (d - 1)] = eta[l] / total;
      }
    }
  }
  return table;
}

double LikelihoodEngine::loglik(const SequenceData& data, std::span<const int> row_ids,
                                std::span<const double> table) const {
  check_sequence(data, config_);
  const int S = config_.num_states;
  const int D = config_.duration_cap;
  const int T = data.length;
  if (T < 1) throw std::invalid_argument("empty series");
  if (static_cast<int>(row_ids.size()) != T) throw std::invalid_argument("row ids do not cover the sequence");

  thread_local std::vector<double> b, alpha, next, inflow;
  emission_probs(data, b);
  alpha.assign(static_cast<std::size_t>(S) * D, 0.0);
  next.resize(alpha.size());
  inflow.resize(S);

  double c = 0.0;
  for (int s = 0; s < S; ++s) c += (alpha[static_cast<std::size_t>(s) * D] = params_.initial_dist[s] * b[s]);
  if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
  double inv = 1.0 / c;
  double ll = std::log(c);

  const std::size_t row_size = static_cast<std::size_t>(S) * S * D;
  for (int t = 1; t < T; ++t) {
    const double* P = table.data() + static_cast<std::size_t>(row_ids[t - 1]) * row_size;
    std::fill(next.begin(), next.end(), 0.0);
    std::fill(inflow.begin(), inflow.end(), 0.0);
    const int dmax = std::min(t, D);
    for (int j = 0; j < S; ++j) {
      const double* a_row = alpha.data() + static_cast<std::size_t>(j) * D;
      double* n_row = next.data() + static_cast<std::size_t>(j) * D;
      const double* stay = P + (static_cast<std::size_t>(j) * S + j) * D;
      for (int d = 0; d + 1 < dmax; ++d) n_row[d + 1] = a_row[d] * stay[d];
      n_row[std::min(dmax, D - 1)] += a_row[dmax - 1] * stay[dmax - 1];
      for (int l = 0; l < S; ++l) {
        if (l == j) continue;
        const double* leave = P + (static_cast<std::size_t>(j) * S + l) * D;
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        int d = 0;
        for (; d + 4 <= dmax; d += 4) {
          acc[0] += a_row[d] * leave[d];
          acc[1] += a_row[d + 1] * leave[d + 1];
          acc[2] += a_row[d + 2] * leave[d + 2];
          acc[3] += a_row[d + 3] * leave[d + 3];
        }
        for (; d < dmax; ++d) acc[0] += a_row[d] * leave[d];
        inflow[l] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
      }
    }
    // alpha carries the previous week's total; dividing it out here keeps
    // the recursion on the normalized scale without a separate pass.
    double sums[4] = {0.0, 0.0, 0.0, 0.0};
    const int dnew = std::min(t + 1, D);
    for (int s = 0; s < S; ++s) {
      double* n_row = next.data() + static_cast<std::size_t>(s) * D;
      n_row[0] += inflow[s];
      const double bs = b[t * S + s] * inv;
      int d = 0;
      for (; d + 4 <= dnew; d += 4) {
        sums[0] += (n_row[d] *= bs);
        sums[1] += (n_row[d + 1] *= bs);
        sums[2] += (n_row[d + 2] *= bs);
        sums[3] += (n_row[d + 3] *= bs);
      }
      for (; d < dnew; ++d) sums[0] += (n_row[d] *= bs);
    }
    c = (sums[0] + sums[1]) + (sums[2] + sums[3]);
    if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
    inv = 1.0 / c;
    ll += std::log(c);
    alpha.swap(next);
  }
  return ll;
}

std::vector<double> patient_logliks(const ParameterSet& params, const ModelConfig& config,
                                    const std::vector<SequenceData>& cohort, int threads,
                                    const CovariateIndex* index) {
  const LikelihoodEngine engine(params, config);
  std::vector<double> out(cohort.size());
  std::vector<double> table;
  if (index) {
    if (index->ids.size() != cohort.size()) throw std::invalid_argument("covariate index does not match the cohort");
    table = engine.transition_table(*index);
  }
  if (table.empty()) {
    parallel_for(cohort.size(), threads, [&](std::size_t i) { out[i] = engine.loglik(cohort[i]); });
  } else {
    parallel_for(cohort.size(), threads,
                 [&](std::size_t i) { out[i] = engine.loglik(cohort[i], index->ids[i], table); });
  }
  return out;
}

double cohort_loglik(const ParameterSet& params, const ModelConfig& config,
                     const std::vector<SequenceData>& cohort, int threads) {
  double total = 0.0;
  for (double ll : patient_logliks(params, config, cohort, threads)) total += ll;
  return total;
}

}  // namespace vdc
