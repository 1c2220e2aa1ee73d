#include "vdc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "vdc/csv.hpp"
#include "vdc/parallel.hpp"
#include "vdc/qr.hpp"

namespace vdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLaplaceWeight = 100.0;

double log_sum_exp(std::span<const double> xs) {
  double top = kNegInf;
  for (double x : xs) top = std::max(top, x);
  if (top == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

void check_pointwise(std::span<const double> pointwise, int num_draws) {
  if (num_draws < 2) throw std::invalid_argument("need at least two draws");
  if (pointwise.size() % num_draws != 0) throw std::invalid_argument("pointwise matrix has ragged rows");
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

struct Block {
  std::string name;
  std::vector<int> index;
  double target = 0.234;
  double log_scale = 0.0;
  Eigen::MatrixXd chol;  // proposal Cholesky factor before scaling
  Eigen::MatrixXd laplace_cov;  // conditional covariance under the Laplace start
  long accepted = 0;
  long proposed = 0;
  long since_reset = 0;
};

std::vector<Block> make_blocks(const ModelConfig& config, const McmcConfig& mcmc) {
  const ParameterLayout layout(config);
  const int S = config.num_states;
  const int p = config.active_covariates();
  std::vector<Block> blocks;
  if (layout.initial_size > 0) {
    Block b;
    b.name = "initial_dist";
    for (int i = 0; i < layout.initial_size; ++i) b.index.push_back(layout.initial + i);
    blocks.push_back(b);
  }
  for (int j = 0; j < S && S > 1; ++j) {
    Block b;
    b.name = "transitions_from[" + std::to_string(j) + "]";
    for (int l = 0; l < S; ++l) {
      if (l == j) continue;
      const int o = ParameterLayout::off_diagonal_index(j, l, S);
      b.index.push_back(layout.intercepts + o);
      if (config.use_duration) b.index.push_back(layout.duration + o);
      for (int c = 0; c < p; ++c) b.index.push_back(layout.covariates + o * p + c);
    }
    blocks.push_back(b);
  }
  {
    Block b;
    b.name = "emissions";
    for (int i = 0; i < layout.rates_size; ++i) b.index.push_back(layout.rates + i);
    for (int i = 0; i < layout.copula_size; ++i) b.index.push_back(layout.copula + i);
    blocks.push_back(b);
  }
  if (blocks.size() > 1) {
    Block b;
    b.name = "joint";
    for (int i = 0; i < unconstrained_dim(config); ++i) b.index.push_back(i);
    blocks.push_back(b);
  }
  for (auto& b : blocks) {
    const int d = static_cast<int>(b.index.size());
    b.target = d == 1 ? mcmc.target_accept_scalar : mcmc.target_accept;
    b.chol = Eigen::MatrixXd::Identity(d, d) * (0.1 * 2.38 / std::sqrt(static_cast<double>(d)));
  }
  return blocks;
}

}  // namespace

void McmcConfig::validate() const {
  if (num_chains < 1) throw std::invalid_argument("num_chains must be >= 1");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (warmup < 0 || warmup >= iterations) throw std::invalid_argument("warmup must satisfy 0 <= warmup < iterations");
  if (!(init_radius > 0.0)) throw std::invalid_argument("init_radius must be positive");
  if (!(init_spread >= 0.0)) throw std::invalid_argument("init_spread must be nonnegative");
  if (mode_iterations < 0) throw std::invalid_argument("mode_iterations must be nonnegative");
  if (sweeps < 1) throw std::invalid_argument("sweeps must be positive");
  if (coordinate_moves < 0) throw std::invalid_argument("coordinate_moves must be nonnegative");
  if (!(wide_step_prob >= 0.0 && wide_step_prob < 1.0)) throw std::invalid_argument("wide_step_prob must be in [0, 1)");
  if (!(wide_step_factor >= 1.0)) throw std::invalid_argument("wide_step_factor must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0) || !(target_accept_scalar > 0.0 && target_accept_scalar < 1.0))
    throw std::invalid_argument("target acceptance rates must lie in (0, 1)");
}

SamplerSpace::SamplerSpace(const ModelConfig& config, std::optional<CovariateBasis> basis)
    : config_(config), basis_(std::move(basis)) {
  if (basis_ && basis_->dim() != config_.active_covariates())
    throw std::invalid_argument("covariate basis dimension does not match the config");
}

std::vector<double> SamplerSpace::to_unconstrained(std::span<const double> theta) const {
  std::vector<double> v(theta.begin(), theta.end());
  const int p = config_.active_covariates();
  if (!basis_ || p == 0) return v;
  const ParameterLayout layout(config_);
  const int S = config_.num_states;
  for (int o = 0; o < S * (S - 1); ++o) {
    const double* bt = theta.data() + layout.covariates + o * p;
    double* beta = v.data() + layout.covariates + o * p;
    double shift = 0.0;
    for (int a = 0; a < p; ++a) {
      double acc = 0.0;
      for (int b = a; b < p; ++b) acc += basis_->r_inverse[a * p + b] * bt[b];
      beta[a] = acc;
      shift += basis_->center[a] * acc;
    }
    v[layout.intercepts + o] = theta[layout.intercepts + o] - shift;
  }
  return v;
}

std::vector<double> SamplerSpace::to_sampler(std::span<const double> v) const {
  std::vector<double> theta(v.begin(), v.end());
  const int p = config_.active_covariates();
  if (!basis_ || p == 0) return theta;
  const ParameterLayout layout(config_);
  const int S = config_.num_states;
  for (int o = 0; o < S * (S - 1); ++o) {
    const double* beta = v.data() + layout.covariates + o * p;
    double shift = 0.0;
    for (int a = 0; a < p; ++a) {
      double acc = 0.0;
      for (int b = a; b < p; ++b) acc += basis_->r[a * p + b] * beta[b];
      theta[layout.covariates + o * p + a] = acc;
      shift += basis_->center[a] * beta[a];
    }
    theta[layout.intercepts + o] = v[layout.intercepts + o] + shift;
  }
  return theta;
}

std::optional<CovariateBasis> covariate_basis(const ModelConfig& config, const std::vector<SequenceData>& cohort) {
  const int p = config.active_covariates();
  if (p == 0) return std::nullopt;
  std::size_t rows = 0;
  for (const auto& s : cohort) rows += s.length > 1 ? s.length - 1 : 0;
  if (rows < static_cast<std::size_t>(p) + 1) return CovariateBasis::identity(p);
  Eigen::MatrixXd x(rows, p);
  std::size_t r = 0;
  for (const auto& s : cohort) {
    if (s.covariate_dim != p) throw std::invalid_argument("sequence covariate dimension does not match the config");
    for (int t = 0; t + 1 < s.length; ++t, ++r) {
      auto row = s.x(t);
      for (int c = 0; c < p; ++c) x(r, c) = row[c];
    }
  }
  return qr_reparametrize(x, std::sqrt(static_cast<double>(rows) - 1.0)).basis;
}

PosteriorTerms log_posterior_terms(std::span<const double> v, const std::vector<SequenceData>& cohort,
                                   const ModelConfig& config, const PriorSpec& priors, const CovariateBasis* basis,
                                   int threads, const CovariateIndex* index) {
  if (static_cast<int>(v.size()) != unconstrained_dim(config))
    throw std::invalid_argument("unconstrained vector has dimension " + std::to_string(v.size()) + ", expected " +
                                std::to_string(unconstrained_dim(config)));
  for (const auto& seq : cohort)
    if (seq.num_margins != config.num_margins || seq.covariate_dim != config.covariate_dim)
      throw std::invalid_argument("sequence dimensions do not match the model config");
  PosteriorTerms out;
  try {
    const ParameterSet params = from_unconstrained(v, config);
    double lp = log_prior(params, config, priors, basis) + log_jacobian(v, config);
    if (std::isfinite(lp) && !cohort.empty()) {
      out.patient_loglik = patient_logliks(params, config, cohort, threads, index);
      for (double ll : out.patient_loglik) lp += ll;
    }
    out.log_posterior = std::isfinite(lp) ? lp : kNegInf;
  } catch (const std::invalid_argument&) {
    out.log_posterior = kNegInf;
  } catch (const std::domain_error&) {
    out.log_posterior = kNegInf;
  }
  if (out.log_posterior == kNegInf) out.patient_loglik.clear();
  return out;
}

namespace {

// Nelder-Mead minimizer for the small starting-point fits.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                                double step, int max_evals) {
  const std::size_t n = x0.size();
  if (n == 0) return x0;
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
  std::vector<double> val(n + 1);
  for (std::size_t i = 0; i <= n; ++i) val[i] = f(pts[i]);
  int evals = static_cast<int>(n + 1);
  std::vector<std::size_t> order(n + 1);
  auto combine = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = c[i] + t * (w[i] - c[i]);
    return out;
  };
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (std::abs(val[worst] - val[best]) < 1e-9 * (1.0 + std::abs(val[best]))) break;
    std::vector<double> centroid(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += pts[order[k]][i] / static_cast<double>(n);
    const auto reflected = combine(centroid, pts[worst], -1.0);
    const double fr = f(reflected);
    ++evals;
    if (fr < val[best]) {
      const auto expanded = combine(centroid, pts[worst], -2.0);
      const double fe = f(expanded);
      ++evals;
      if (fe < fr) pts[worst] = expanded, val[worst] = fe;
      else pts[worst] = reflected, val[worst] = fr;
    } else if (fr < val[second]) {
      pts[worst] = reflected, val[worst] = fr;
    } else {
      const auto contracted = combine(centroid, pts[worst], 0.5);
      const double fc = f(contracted);
      ++evals;
      if (fc < val[worst]) {
        pts[worst] = contracted, val[worst] = fc;
      } else {
        for (std::size_t k = 1; k <= n; ++k) {
          pts[order[k]] = combine(pts[best], pts[order[k]], 0.5);
          val[order[k]] = f(pts[order[k]]);
          ++evals;
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (val[i] < val[best]) best = i;
  return pts[best];
}

double copula_from_free(CopulaFamily family, double u) {
  switch (family) {
    case CopulaFamily::SurvivalGumbel: return 1.0 + std::exp(std::clamp(u, -10.0, 3.0));
    case CopulaFamily::AliMikhailHaq: return std::tanh(std::clamp(u, -3.0, 3.0));
    case CopulaFamily::Clayton: return std::exp(std::clamp(u, -10.0, 3.0));
    case CopulaFamily::Independence: break;
  }
  return 0.0;
}

double copula_to_free(CopulaFamily family, double v) {
  switch (family) {
    case CopulaFamily::SurvivalGumbel: return std::log(std::max(v - 1.0, 1e-6));
    case CopulaFamily::AliMikhailHaq: return std::atanh(std::clamp(v, -0.99, 0.99));
    case CopulaFamily::Clayton: return std::log(std::max(v, 1e-6));
    case CopulaFamily::Independence: break;
  }
  return 0.0;
}

}  // namespace

ParameterSet data_informed_start(const ModelConfig& config, const std::vector<SequenceData>& cohort) {
  config.validate();
  const int S = config.num_states, m = config.num_margins;
  ParameterSet p = ParameterSet::defaults(config);
  for (int j = 0; j < S; ++j)
    for (int l = 0; l < S; ++l)
      if (j != l) p.intercept(j, l) = -2.0;

  // Fully observed weeks tabulated on the measurement grid.
  ModelConfig single = config;
  single.num_states = 1;
  single.covariate_dim = 0;
  ParameterSet one = ParameterSet::defaults(single);
  const PmfTable shape = build_emission_tables(one, single).front().pmf;
  const std::size_t cells = shape.values.size();
  std::vector<double> count(cells, 0.0);
  double total = 0.0;
  for (const auto& seq : cohort) {
    if (seq.num_margins != m) continue;
    for (int t = 0; t < seq.length; ++t) {
      const auto y = seq.obs(t);
      bool ok = true;
      for (int k = 0; k < m; ++k) ok = ok && y[k] >= 0 && y[k] <= config.scale_max[k];
      if (!ok) continue;
      count[shape.index(y)] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) return p;

  // Cells ordered by first-margin value seed S quantile groups.
  std::vector<std::vector<int>> cell_values(cells, std::vector<int>(m));
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    for (int k = m - 1; k >= 0; --k) {
      cell_values[c][k] = static_cast<int>(rest % shape.sizes[k]);
      rest /= shape.sizes[k];
    }
  }
  std::vector<std::size_t> by_first(cells);
  std::iota(by_first.begin(), by_first.end(), 0);
  std::stable_sort(by_first.begin(), by_first.end(),
                   [&](std::size_t a, std::size_t b) { return cell_values[a][0] < cell_values[b][0]; });
  std::vector<double> rate(static_cast<std::size_t>(S) * m, 0.0), weight(S, 1.0 / S);
  {
    std::vector<double> mass(S, 0.0);
    double seen = 0.0;
    for (std::size_t c : by_first) {
      if (count[c] == 0.0) continue;
      const int s = std::min(S - 1, static_cast<int>(S * (seen + 0.5 * count[c]) / total));
      seen += count[c];
      mass[s] += count[c];
      for (int k = 0; k < m; ++k) rate[s * m + k] += count[c] * cell_values[c][k];
    }
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < m; ++k) rate[s * m + k] = std::max(mass[s] > 0.0 ? rate[s * m + k] / mass[s] : 1.0, 0.1);
  }
  const bool has_copula = config.has_copula_params();
  const int free = m + (has_copula ? 1 : 0);
  std::vector<std::vector<double>> theta(S, std::vector<double>(free));
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < m; ++k) theta[s][k] = std::log(rate[s * m + k]);
    if (has_copula) theta[s][m] = copula_to_free(config.copula_family, one.copula_params.front());
  }
  auto table_of = [&](const std::vector<double>& th) {
    for (int k = 0; k < m; ++k) one.rate(0, k) = std::exp(std::clamp(th[k], -5.0, 5.0));
    if (has_copula) one.copula_params[0] = copula_from_free(config.copula_family, th[m]);
    return build_emission_tables(one, single).front().pmf.values;
  };

  // EM for a mixture of copula-coupled emission tables; time structure is
  // ignored.
  std::vector<std::vector<double>> pmf(S);
  for (int s = 0; s < S; ++s) pmf[s] = table_of(theta[s]);
  std::vector<std::vector<double>> resp(S, std::vector<double>(cells, 0.0));
  for (int iter = 0; iter < 30; ++iter) {
    for (std::size_t c = 0; c < cells; ++c) {
      if (count[c] == 0.0) continue;
      double norm = 0.0;
      for (int s = 0; s < S; ++s) norm += weight[s] * pmf[s][c];
      for (int s = 0; s < S; ++s) resp[s][c] = norm > 0.0 ? count[c] * weight[s] * pmf[s][c] / norm : count[c] / S;
    }
    for (int s = 0; s < S; ++s) {
      const double mass = std::accumulate(resp[s].begin(), resp[s].end(), 0.0);
      weight[s] = std::max(mass / total, 1e-6);
      if (mass <= 0.0) continue;
      auto objective = [&](const std::vector<double>& th) {
        const auto values = table_of(th);
        double nll = 0.0;
        for (std::size_t c = 0; c < cells; ++c)
          if (resp[s][c] > 0.0) nll -= resp[s][c] * std::log(std::max(values[c], 1e-300));
        return nll;
      };
      theta[s] = nelder_mead(objective, theta[s], 0.2, 200);
      pmf[s] = table_of(theta[s]);
    }
  }

  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return theta[a][0] < theta[b][0]; });
  for (int s = 0; s < S; ++s) {
    const auto& th = theta[order[s]];
    for (int k = 0; k < m; ++k) p.rate(s, k) = std::exp(std::clamp(th[k], -5.0, 5.0));
    if (s > 0) p.rate(s, 0) = std::max(p.rate(s, 0), p.rate(s - 1, 0) * 1.05 + 0.01);
    if (has_copula) p.copula_params[s] = copula_from_free(config.copula_family, th[m]);
  }
  p.validate(config);
  return p;
}

double log_posterior(std::span<const double> v, const std::vector<SequenceData>& cohort, const ModelConfig& config,
                     const PriorSpec& priors, const CovariateBasis* basis, int threads,
                     const CovariateIndex* index) {
  return log_posterior_terms(v, cohort, config, priors, basis, threads, index).log_posterior;
}

namespace {

struct LaplaceFit {
  std::vector<double> mode;
  Eigen::MatrixXd precision;  // positive definite
  double log_posterior = kNegInf;
};

// Posterior mode by BFGS with forward-difference gradients, then a
// finite-difference Hessian whose eigenvalues are floored at `min_eigen`.
LaplaceFit laplace_fit(const std::function<double(const std::vector<double>&)>& log_post, std::vector<double> x,
                       int max_iterations, double min_eigen) {
  const int d = static_cast<int>(x.size());
  auto objective = [&](const std::vector<double>& at) { return -log_post(at); };
  auto gradient = [&](const std::vector<double>& at, double value) {
    Eigen::VectorXd g(d);
    std::vector<double> probe = at;
    for (int i = 0; i < d; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(at[i]));
      probe[i] = at[i] + h;
      g(i) = (objective(probe) - value) / h;
      probe[i] = at[i];
    }
    return g;
  };

  double value = objective(x);
  if (!std::isfinite(value)) throw std::runtime_error("posterior is not finite at the starting point");
  Eigen::VectorXd g = gradient(x, value);
  Eigen::MatrixXd inv_hess = Eigen::MatrixXd::Identity(d, d);
  bool scaled = false;
  int small_steps = 0;
  for (int iter = 0; iter < max_iterations && g.allFinite(); ++iter) {
    Eigen::VectorXd dir = -inv_hess * g;
    if (!(dir.dot(g) < 0.0)) {
      inv_hess.setIdentity();
      scaled = false;
      dir = -g;
    }
    if (!scaled) dir *= 1.0 / std::max(1.0, dir.norm());
    const double slope = dir.dot(g);
    std::vector<double> trial(d);
    double t = 1.0, trial_value = value;
    bool moved = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      for (int i = 0; i < d; ++i) trial[i] = x[i] + t * dir(i);
      trial_value = objective(trial);
      if (std::isfinite(trial_value) && trial_value <= value + 1e-4 * t * slope) {
        moved = true;
        break;
      }
    }
    if (!moved) break;
    const Eigen::VectorXd g_new = gradient(trial, trial_value);
    const Eigen::VectorXd step = t * dir;
    const Eigen::VectorXd dg = g_new - g;
    const double sy = step.dot(dg);
    if (sy > 1e-12) {
      if (!scaled) {
        inv_hess *= sy / dg.squaredNorm();
        scaled = true;
      }
      const Eigen::VectorXd hy = inv_hess * dg;
      inv_hess += ((sy + dg.dot(hy)) / (sy * sy)) * (step * step.transpose()) -
                  (hy * step.transpose() + step * hy.transpose()) / sy;
    }
    const double gain = value - trial_value;
    x = trial;
    value = trial_value;
    g = g_new;
    small_steps = gain < 1e-8 * (1.0 + std::abs(value)) ? small_steps + 1 : 0;
    if (small_steps >= 3) break;
  }

  // Second differences of -log posterior.
  const double h = 1e-3;
  std::vector<double> shifted(d);
  std::vector<double> probe = x;
  for (int i = 0; i < d; ++i) {
    probe[i] += h;
    shifted[i] = objective(probe);
    probe[i] = x[i];
  }
  Eigen::MatrixXd hess(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      probe[i] += h;
      probe[j] += h;
      hess(i, j) = hess(j, i) = (objective(probe) - shifted[i] - shifted[j] + value) / (h * h);
      probe[i] = x[i];
      probe[j] = x[j];
    }
  if (!hess.allFinite()) hess = Eigen::MatrixXd::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseAbs().cwiseMax(min_eigen);
  LaplaceFit fit;
  fit.precision = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  fit.mode = std::move(x);
  fit.log_posterior = -value;
  return fit;
}

}  // namespace

McmcResult run_mcmc(const std::vector<SequenceData>& cohort, const ModelConfig& config, const PriorSpec& priors,
                    const McmcConfig& mcmc) {
  config.validate();
  mcmc.validate();
  const SamplerSpace space(config, covariate_basis(config, cohort));
  const int dim = unconstrained_dim(config);
  const int C = mcmc.num_chains;
  const int kept = mcmc.retained_per_chain();
  const int N = static_cast<int>(cohort.size());

  McmcResult result;
  PosteriorDraws& draws = result.draws;
  draws.names = unconstrained_names(config);
  draws.num_chains = C;
  draws.draws_per_chain = kept;
  draws.values.assign(static_cast<std::size_t>(C) * kept * dim, 0.0);
  draws.log_posterior.assign(static_cast<std::size_t>(C) * kept, 0.0);
  draws.num_patients = N;
  draws.patient_loglik.assign(static_cast<std::size_t>(C) * kept * N, 0.0);

  const CovariateIndex index = index_covariates(config, cohort);
  std::vector<Block> block_template = make_blocks(config, mcmc);
  std::vector<std::vector<double>> acceptance(C);
  std::optional<LaplaceFit> laplace;
  Eigen::MatrixXd start_factor;
  if (mcmc.init == InitStrategy::DataInformed && !cohort.empty()) {
    auto log_post = [&](const std::vector<double>& theta) {
      return log_posterior(space.to_unconstrained(theta), cohort, config, priors, space.basis(), mcmc.threads,
                           &index);
    };
    laplace = laplace_fit(log_post, space.to_sampler(to_unconstrained(data_informed_start(config, cohort), config)),
                          mcmc.mode_iterations, 1e-2);
    start_factor = Eigen::LLT<Eigen::MatrixXd>(laplace->precision.inverse()).matrixL();
    // Each block proposes with its conditional covariance under the
    // approximation.
    for (Block& b : block_template) {
      const int d = static_cast<int>(b.index.size());
      Eigen::MatrixXd sub(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) sub(i, j) = laplace->precision(b.index[i], b.index[j]);
      b.laplace_cov = sub.inverse();
      b.chol = Eigen::LLT<Eigen::MatrixXd>(b.laplace_cov * (2.38 * 2.38 / d)).matrixL();
    }
  }

  const int outer = std::min(std::max(mcmc.threads, 1), C);
  const int inner = std::max(1, std::max(mcmc.threads, 1) / outer);

  parallel_for(C, outer, [&](std::size_t chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(mcmc.seed & 0xffffffffu), static_cast<std::uint32_t>(mcmc.seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x9e3779b9u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto evaluate = [&](const std::vector<double>& theta) {
      const auto v = space.to_unconstrained(theta);
      return log_posterior_terms(v, cohort, config, priors, space.basis(), inner, &index);
    };

    std::vector<double> theta(dim);
    PosteriorTerms current;
    current.log_posterior = kNegInf;
    for (int attempt = 0; attempt < 100 && current.log_posterior == kNegInf; ++attempt) {
      if (!laplace) {
        for (double& x : theta) x = (2.0 * unif(rng) - 1.0) * mcmc.init_radius;
      } else {
        Eigen::VectorXd u(dim);
        for (int i = 0; i < dim; ++i) u(i) = normal(rng);
        const Eigen::VectorXd offset = mcmc.init_spread * (start_factor * u);
        for (int i = 0; i < dim; ++i) theta[i] = laplace->mode[i] + offset(i);
      }
      current = evaluate(theta);
    }
    if (current.log_posterior == kNegInf)
      throw std::runtime_error("chain " + std::to_string(chain) + ": no finite initial point in 100 attempts");

    std::vector<Block> blocks = block_template;
    std::vector<double> history;  // warmup sampler-space states
    if (mcmc.warmup > 0) history.reserve(static_cast<std::size_t>(mcmc.warmup) * dim);
    int next_window = 100;

    // Single-coordinate moves: scales start at the conditional standard
    // deviation (Laplace start) or at 0.1, and adapt during warmup.
    std::vector<double> coord_log_scale(dim, std::log(0.1 * 2.4));
    std::vector<long> coord_seen(dim, 0);
    if (laplace)
      for (int i = 0; i < dim; ++i) coord_log_scale[i] = std::log(2.4 / std::sqrt(laplace->precision(i, i)));
    std::uniform_int_distribution<int> pick(0, dim - 1);

    std::vector<double> proposal(dim);
    Eigen::VectorXd z;
    for (int iter = 0; iter < mcmc.iterations; ++iter) {
      const bool warm = iter < mcmc.warmup;
      for (int move = 0; move < mcmc.coordinate_moves && dim > 0; ++move) {
        const int i = pick(rng);
        const bool wide = unif(rng) < mcmc.wide_step_prob;
        const double scale = std::exp(coord_log_scale[i]) * (wide ? mcmc.wide_step_factor : 1.0);
        proposal = theta;
        proposal[i] += scale * normal(rng);
        PosteriorTerms cand = evaluate(proposal);
        const double log_ratio = cand.log_posterior - current.log_posterior;
        const double alpha = cand.log_posterior == kNegInf ? 0.0 : (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio));
        if (unif(rng) < alpha) {
          theta.swap(proposal);
          current = std::move(cand);
        }
        if (warm && !wide) {
          ++coord_seen[i];
          coord_log_scale[i] += std::pow(static_cast<double>(coord_seen[i]) / 10.0 + 1.0, -0.6) *
                                (alpha - mcmc.target_accept_scalar);
          coord_log_scale[i] = std::clamp(coord_log_scale[i], -12.0, 6.0);
        }
      }
      for (int sweep = 0; sweep < mcmc.sweeps; ++sweep)
      for (Block& b : blocks) {
        const int d = static_cast<int>(b.index.size());
        z.resize(d);
        for (int i = 0; i < d; ++i) z(i) = normal(rng);
        // A symmetric mixture of the adapted scale and a wider one lets
        // chains cross long, weakly identified ridges.
        const bool wide = unif(rng) < mcmc.wide_step_prob;
        const double scale = std::exp(b.log_scale) * (wide ? mcmc.wide_step_factor : 1.0);
        const Eigen::VectorXd step = scale * (b.chol * z);
        proposal = theta;
        for (int i = 0; i < d; ++i) proposal[b.index[i]] += step(i);
        PosteriorTerms cand = evaluate(proposal);
        const double log_ratio = cand.log_posterior - current.log_posterior;
        const double alpha = cand.log_posterior == kNegInf ? 0.0 : (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio));
        const bool accept = unif(rng) < alpha;
        if (accept) {
          theta.swap(proposal);
          current = std::move(cand);
        }
        if (warm && !wide) {
          ++b.since_reset;
          b.log_scale += std::pow(static_cast<double>(b.since_reset) / 10.0 + 1.0, -0.6) * (alpha - b.target);
          b.log_scale = std::clamp(b.log_scale, -12.0, 6.0);
        } else if (!warm) {
          ++b.proposed;
          if (accept) ++b.accepted;
        }
      }

      if (warm) {
        history.insert(history.end(), theta.begin(), theta.end());
        const int done = iter + 1;
        // Proposal covariances are re-estimated every 50 iterations from
        // the warmup history after its first quarter; the global scale keeps
        // adapting throughout.
        if (done >= next_window && done + 25 <= mcmc.warmup) {
          next_window += 50;
          const int from = done / 4;
          const int n = done - from;
          for (Block& b : blocks) {
            const int d = static_cast<int>(b.index.size());
            Eigen::MatrixXd samples(n, d);
            for (int r = 0; r < n; ++r)
              for (int i = 0; i < d; ++i)
                samples(r, i) = history[static_cast<std::size_t>(from + r) * dim + b.index[i]];
            const Eigen::RowVectorXd mean = samples.colwise().mean();
            const Eigen::MatrixXd centered = samples.rowwise() - mean;
            Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max(1, n - 1);
            if (laplace) {
              // The Laplace covariance counts as kLaplaceWeight pseudo-draws.
              const double w = static_cast<double>(n) / (n + kLaplaceWeight);
              cov = w * cov + (1.0 - w) * b.laplace_cov;
            } else {
              // Shrink toward the diagonal to keep the factor well conditioned.
              const Eigen::MatrixXd diag = cov.diagonal().asDiagonal();
              cov = 0.9 * cov + 0.1 * diag;
            }
            cov.diagonal().array() += 1e-10;
            Eigen::LLT<Eigen::MatrixXd> llt(cov * (2.38 * 2.38 / d));
            if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite() &&
                cov.diagonal().maxCoeff() > 0.0)
              b.chol = llt.matrixL();
          }
        }
      } else {
        const int k = iter - mcmc.warmup;
        const auto v = space.to_unconstrained(theta);
        std::copy(v.begin(), v.end(), draws.values.begin() + (static_cast<std::size_t>(chain) * kept + k) * dim);
        draws.log_posterior[static_cast<std::size_t>(chain) * kept + k] = current.log_posterior;
        if (N > 0)
          std::copy(current.patient_loglik.begin(), current.patient_loglik.end(),
                    draws.patient_loglik.begin() + (static_cast<std::size_t>(chain) * kept + k) * N);
      }
    }

    std::vector<double> rates;
    for (const Block& b : blocks) {
      rates.push_back(b.proposed > 0 ? static_cast<double>(b.accepted) / b.proposed : std::nan(""));
    }
    acceptance[chain] = std::move(rates);
  });

  result.diagnostics = diagnose(draws, mcmc.rhat_threshold);
  result.diagnostics.mode_log_posterior = laplace ? laplace->log_posterior : std::nan("");
  for (const Block& b : block_template) result.diagnostics.block_names.push_back(b.name);
  for (const auto& rates : acceptance)
    for (double a : rates)
      if (a == 0.0) result.diagnostics.stuck_block = true;
  if (result.diagnostics.stuck_block) result.diagnostics.converged = false;
  result.diagnostics.acceptance = std::move(acceptance);
  return result;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) return std::nan("");
    halves.emplace_back(c.data(), h);
    halves.emplace_back(c.data() + c.size() - h, h);
  }
  const std::size_t n = halves.front().size();
  for (const auto& h : halves)
    if (h.size() != n) throw std::invalid_argument("chains must have equal length");
  const double m = static_cast<double>(halves.size());
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    const double mu = std::accumulate(h.begin(), h.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : h) ss += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(ss / (n - 1));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  if (w == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::max(1.0, std::sqrt(var_plus / w));
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m == 0) return 0.0;
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("chains must have equal length");
  if (n < 4) return std::nan("");
  std::vector<double> means(m);
  std::vector<std::vector<double>> centered(m);
  double w = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / n;
    centered[c].resize(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      centered[c][i] = chains[c][i] - means[c];
      ss += centered[c][i] * centered[c][i];
    }
    w += ss / (n - 1);
  }
  w /= m;
  double b_over_n = 0.0;
  if (m > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
    b_over_n /= (m - 1.0);
  }
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  auto acov_mean = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += centered[c][i] * centered[c][i + lag];
      total += s / n;
    }
    return total / m;
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - acov_mean(lag)) / var_plus; };

  // Geyer's initial monotone sequence on paired autocorrelations.
  double tau_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau_sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * tau_sum, 1.0 / std::log10(static_cast<double>(m * n)));
  return static_cast<double>(m * n) / tau;
}

Diagnostics diagnose(const PosteriorDraws& draws, double rhat_threshold) {
  Diagnostics d;
  const int dim = draws.dim();
  d.rhat.resize(dim);
  d.ess.resize(dim);
  std::vector<std::vector<double>> chains(draws.num_chains, std::vector<double>(draws.draws_per_chain));
  for (int p = 0; p < dim; ++p) {
    for (int c = 0; c < draws.num_chains; ++c)
      for (int k = 0; k < draws.draws_per_chain; ++k) chains[c][k] = draws.value(c, k, p);
    d.rhat[p] = split_rhat(chains);
    d.ess[p] = effective_sample_size(chains);
  }
  d.max_rhat = 1.0;
  d.converged = true;
  for (double r : d.rhat) {
    if (std::isnan(r) || r > rhat_threshold) d.converged = false;
    if (std::isnan(r) || r > d.max_rhat) d.max_rhat = std::isnan(r) ? std::numeric_limits<double>::infinity() : r;
  }
  return d;
}

std::vector<double> pointwise_loglik(const PosteriorDraws& draws, const ModelConfig& config,
                                     const std::vector<SequenceData>& cohort, int threads) {
  const int D = draws.total_draws();
  if (D == 0) throw std::invalid_argument("no posterior draws");
  if (draws.dim() != unconstrained_dim(config))
    throw std::invalid_argument("draws have " + std::to_string(draws.dim()) + " parameters but the model needs " +
                                std::to_string(unconstrained_dim(config)));
  const std::size_t N = cohort.size();
  const CovariateIndex index = index_covariates(config, cohort);
  std::vector<double> out(static_cast<std::size_t>(D) * N);
  parallel_for(D, threads, [&](std::size_t i) {
    const ParameterSet params = from_unconstrained(draws.draw(static_cast<int>(i)), config);
    const auto ll = patient_logliks(params, config, cohort, 1, &index);
    std::copy(ll.begin(), ll.end(), out.begin() + i * N);
  });
  return out;
}

double compute_lpd(std::span<const double> pointwise, int num_draws) {
  check_pointwise(pointwise, num_draws);
  const std::size_t N = pointwise.size() / num_draws;
  std::vector<double> column(num_draws);
  double lpd = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    for (int d = 0; d < num_draws; ++d) column[d] = pointwise[d * N + i];
    lpd += log_sum_exp(column) - std::log(static_cast<double>(num_draws));
  }
  return lpd;
}

double compute_waic(std::span<const double> pointwise, int num_draws) {
  check_pointwise(pointwise, num_draws);
  const std::size_t N = pointwise.size() / num_draws;
  double penalty = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double mean = 0.0;
    for (int d = 0; d < num_draws; ++d) mean += pointwise[d * N + i];
    mean /= num_draws;
    double ss = 0.0;
    for (int d = 0; d < num_draws; ++d) ss += (pointwise[d * N + i] - mean) * (pointwise[d * N + i] - mean);
    penalty += ss / (num_draws - 1);
  }
  return deviance(compute_lpd(pointwise, num_draws) - penalty);
}

LooResult compute_loo_detail(std::span<const double> pointwise, int num_draws) {
  check_pointwise(pointwise, num_draws);
  const std::size_t N = pointwise.size() / num_draws;
  LooResult out;
  std::vector<double> log_ratio(num_draws), weights(num_draws), sorted(num_draws), terms(num_draws);
  const std::size_t cut = static_cast<std::size_t>(std::floor(0.999 * (num_draws - 1)));
  for (std::size_t i = 0; i < N; ++i) {
    double top = kNegInf;
    for (int d = 0; d < num_draws; ++d) {
      log_ratio[d] = -pointwise[d * N + i];
      top = std::max(top, log_ratio[d]);
    }
    if (!std::isfinite(top)) throw std::domain_error("non-finite pointwise log-likelihood");
    for (int d = 0; d < num_draws; ++d) weights[d] = std::exp(log_ratio[d] - top);
    sorted = weights;
    std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
    const double cap = sorted[cut];
    // The degeneracy diagnostic looks at the raw weights; after the cap the
    // largest weight can never exceed the runner-up.
    double raw_total = 0.0, raw_largest = 0.0, total = 0.0;
    for (int d = 0; d < num_draws; ++d) {
      raw_total += weights[d];
      raw_largest = std::max(raw_largest, weights[d]);
      weights[d] = std::min(weights[d], cap);
      total += weights[d];
      terms[d] = std::log(weights[d]) + pointwise[d * N + i];
    }
    out.elpd += log_sum_exp(terms) - std::log(total);
    const double share = raw_largest / raw_total;
    out.max_weight_share = std::max(out.max_weight_share, share);
    if (share > 0.5) out.flagged = true;
  }
  out.deviance = deviance(out.elpd);
  return out;
}

double compute_loo(std::span<const double> pointwise, int num_draws) {
  return compute_loo_detail(pointwise, num_draws).deviance;
}

double out_of_sample_lpd(const PosteriorDraws& draws, const ModelConfig& config,
                         const std::vector<SequenceData>& heldout, const std::vector<std::string>& training_ids,
                         const std::vector<std::string>& heldout_ids, int threads) {
  if (heldout_ids.size() != heldout.size()) throw std::invalid_argument("held-out ids and sequences differ in count");
  const std::unordered_set<std::string> train(training_ids.begin(), training_ids.end());
  for (const auto& id : heldout_ids)
    if (train.count(id)) throw std::invalid_argument("patient " + id + " is in both the training and held-out sets");
  const auto pw = pointwise_loglik(draws, config, heldout, threads);
  return deviance(compute_lpd(pw, draws.total_draws()));
}

std::vector<std::string> constrained_names(const ModelConfig& config) {
  const int S = config.num_states;
  const int p = config.active_covariates();
  auto idx = [](int i) { return "[" + std::to_string(i) + "]"; };
  std::vector<std::string> names;
  for (int s = 0; s + 1 < S; ++s) names.push_back("initial_dist" + idx(s));
  for (int j = 0; j < S; ++j)
    for (int l = 0; l < S; ++l)
      if (l != j) names.push_back("intercepts" + idx(j) + idx(l));
  if (config.use_duration)
    for (int j = 0; j < S; ++j)
      for (int l = 0; l < S; ++l)
        if (l != j) names.push_back("duration_coefs" + idx(j) + idx(l));
  for (int j = 0; j < S; ++j)
    for (int l = 0; l < S; ++l)
      if (l != j)
        for (int c = 0; c < p; ++c) names.push_back("covariate_coefs" + idx(j) + idx(l) + idx(c));
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < config.num_margins; ++k) names.push_back("emission_rates" + idx(s) + idx(k));
  if (config.has_copula_params())
    for (int s = 0; s < S; ++s) names.push_back("copula_params" + idx(s));
  return names;
}

std::vector<double> constrained_values(const ParameterSet& params, const ModelConfig& config) {
  const int S = config.num_states;
  const int p = config.active_covariates();
  std::vector<double> out;
  for (int s = 0; s + 1 < S; ++s) out.push_back(params.initial_dist[s]);
  for (int j = 0; j < S; ++j)
    for (int l = 0; l < S; ++l)
      if (l != j) out.push_back(params.intercept(j, l));
  if (config.use_duration)
    for (int j = 0; j < S; ++j)
      for (int l = 0; l < S; ++l)
        if (l != j) out.push_back(params.duration_coef(j, l));
  for (int j = 0; j < S; ++j)
    for (int l = 0; l < S; ++l)
      if (l != j)
        for (int c = 0; c < p; ++c) out.push_back(params.covariate_coef(j, l)[c]);
  for (double r : params.emission_rates) out.push_back(r);
  for (double c : params.copula_params) out.push_back(c);
  return out;
}

ParameterSet draw_params(const PosteriorDraws& draws, const ModelConfig& config, int index) {
  return from_unconstrained(draws.draw(index), config);
}

std::vector<ParameterSummary> summarize_constrained(const PosteriorDraws& draws, const ModelConfig& config) {
  const auto names = constrained_names(config);
  const int D = draws.total_draws();
  std::vector<std::vector<double>> columns(names.size(), std::vector<double>(D));
  for (int i = 0; i < D; ++i) {
    const auto vals = constrained_values(draw_params(draws, config, i), config);
    for (std::size_t k = 0; k < vals.size(); ++k) columns[k][i] = vals[k];
  }
  std::vector<ParameterSummary> out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto& col = columns[k];
    ParameterSummary s;
    s.name = names[k];
    s.mean = std::accumulate(col.begin(), col.end(), 0.0) / D;
    double ss = 0.0;
    for (double x : col) ss += (x - s.mean) * (x - s.mean);
    s.sd = D > 1 ? std::sqrt(ss / (D - 1)) : 0.0;
    std::sort(col.begin(), col.end());
    s.q05 = quantile_sorted(col, 0.05);
    s.q50 = quantile_sorted(col, 0.5);
    s.q95 = quantile_sorted(col, 0.95);
    out.push_back(s);
  }
  return out;
}

ParameterSet posterior_mean(const PosteriorDraws& draws, const ModelConfig& config) {
  const int D = draws.total_draws();
  if (D == 0) throw std::invalid_argument("no posterior draws");
  ParameterSet mean = draw_params(draws, config, 0);
  auto scale_add = [](std::vector<double>& acc, const std::vector<double>& x) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
  };
  for (int i = 1; i < D; ++i) {
    const ParameterSet p = draw_params(draws, config, i);
    scale_add(mean.initial_dist, p.initial_dist);
    scale_add(mean.intercepts, p.intercepts);
    scale_add(mean.duration_coefs, p.duration_coefs);
    scale_add(mean.covariate_coefs, p.covariate_coefs);
    scale_add(mean.emission_rates, p.emission_rates);
    scale_add(mean.copula_params, p.copula_params);
  }
  for (auto* field : {&mean.initial_dist, &mean.intercepts, &mean.duration_coefs, &mean.covariate_coefs,
                      &mean.emission_rates, &mean.copula_params})
    for (double& x : *field) x /= D;
  double total = 0.0;
  for (double w : mean.initial_dist) total += w;
  for (double& w : mean.initial_dist) w /= total;
  mean.validate(config);
  return mean;
}

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws) {
  CsvRow header{"chain", "draw"};
  header.insert(header.end(), draws.names.begin(), draws.names.end());
  header.push_back("log_posterior");
  write_csv_row(out, header);
  CsvRow row(header.size());
  for (int c = 0; c < draws.num_chains; ++c) {
    for (int k = 0; k < draws.draws_per_chain; ++k) {
      row[0] = std::to_string(c);
      row[1] = std::to_string(k);
      for (int p = 0; p < draws.dim(); ++p) row[2 + p] = format_double(draws.value(c, k, p));
      row.back() = format_double(draws.log_posterior[static_cast<std::size_t>(c) * draws.draws_per_chain + k]);
      write_csv_row(out, row);
    }
  }
}

PosteriorDraws read_draws_csv(std::istream& in) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw DataError("draws file is empty");
  const CsvRow& header = rows.front();
  if (header.size() < 3 || header[0] != "chain" || header[1] != "draw" || header.back() != "log_posterior")
    throw DataError("draws file header must be chain,draw,<parameters...>,log_posterior");
  PosteriorDraws d;
  d.names.assign(header.begin() + 2, header.end() - 1);
  const int dim = d.dim();
  std::vector<int> per_chain;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size())
      throw DataError("draws row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                               " fields, expected " + std::to_string(header.size()));
    const int chain = static_cast<int>(parse_int(row[0], "chain"));
    if (chain != static_cast<int>(per_chain.size()) - 1) {
      if (chain != static_cast<int>(per_chain.size()))
        throw DataError("draws rows must be grouped by chain in order");
      per_chain.push_back(0);
    }
    ++per_chain.back();
    for (int p = 0; p < dim; ++p) d.values.push_back(parse_double(row[2 + p], d.names[p]));
    d.log_posterior.push_back(parse_double(row.back(), "log_posterior"));
  }
  if (per_chain.empty()) throw DataError("draws file has no rows");
  for (int n : per_chain)
    if (n != per_chain.front()) throw DataError("chains in the draws file differ in length");
  d.num_chains = static_cast<int>(per_chain.size());
  d.draws_per_chain = per_chain.front();
  return d;
}

}  // namespace vdc
