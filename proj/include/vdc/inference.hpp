#ifndef VDC_INFERENCE_HPP
#define VDC_INFERENCE_HPP

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdc/forward.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Chain starting points. DataInformed climbs from data_informed_start() to
// the posterior mode and takes a Laplace approximation there: every chain
// starts from an independent draw of it and every block proposes with its
// conditional covariance (scales still adapt during warmup). Uniform draws
// every sampler coordinate from [-init_radius, init_radius] and learns
// proposal covariances from the warmup history. An empty cohort always
// uses Uniform.
enum class InitStrategy { DataInformed, Uniform };

struct McmcConfig {
  int num_chains = 2;
  int iterations = 3500;  // per chain, warmup included
  int warmup = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  double target_accept = 0.234;       // blocks of two or more coordinates
  double target_accept_scalar = 0.44;  // one-coordinate blocks
  InitStrategy init = InitStrategy::DataInformed;
  double init_radius = 2.0;
  double init_spread = 1.0;  // start draws from N(mode, spread^2 * covariance)
  int mode_iterations = 300;
  int sweeps = 3;                // passes over every block per iteration
  int coordinate_moves = 8;      // single-coordinate updates per iteration, coordinates drawn at random
  double wide_step_prob = 0.2;   // share of proposals drawn at the wider scale
  double wide_step_factor = 4.0;
  double rhat_threshold = 1.02;

  void validate() const;
  int retained_per_chain() const { return iterations - warmup; }
};

// Linear change of coordinates used by the sampler: the intercept and
// covariate coefficients of each transition move in the centered,
// QR-rotated basis (delta + center . beta, R beta). Every other coordinate
// is the unconstrained vector itself.
class SamplerSpace {
 public:
  SamplerSpace(const ModelConfig& config, std::optional<CovariateBasis> basis);

  std::vector<double> to_unconstrained(std::span<const double> theta) const;
  std::vector<double> to_sampler(std::span<const double> v) const;
  const CovariateBasis* basis() const { return basis_ ? &*basis_ : nullptr; }

 private:
  ModelConfig config_;
  std::optional<CovariateBasis> basis_;
};

// Crude starting point: state rates and copula parameters from an EM fit
// of a mixture of emission tables to the fully observed weeks (time
// structure ignored), seeded by first-margin quantile groups;
// transitions start sticky (leave logits -2) without duration or covariate
// effects; the initial distribution is uniform.
ParameterSet data_informed_start(const ModelConfig& config, const std::vector<SequenceData>& cohort);

// Basis for the covariate rows that drive transitions (every week except
// the last of each sequence). Returns nothing when the config has no
// active covariates. Throws if a column is constant or collinear.
std::optional<CovariateBasis> covariate_basis(const ModelConfig& config, const std::vector<SequenceData>& cohort);

struct PosteriorTerms {
  double log_posterior = 0.0;
  std::vector<double> patient_loglik;
};

// log p(y | v) + log prior + log Jacobian at the unconstrained vector v.
// Non-finite results (including invalid parameter images) become -inf.
// `index`, when given, must come from index_covariates on the same cohort.
double log_posterior(std::span<const double> v, const std::vector<SequenceData>& cohort, const ModelConfig& config,
                     const PriorSpec& priors, const CovariateBasis* basis = nullptr, int threads = 1,
                     const CovariateIndex* index = nullptr);
PosteriorTerms log_posterior_terms(std::span<const double> v, const std::vector<SequenceData>& cohort,
                                   const ModelConfig& config, const PriorSpec& priors,
                                   const CovariateBasis* basis = nullptr, int threads = 1,
                                   const CovariateIndex* index = nullptr);

// Retained draws on the unconstrained scale, chain-major.
struct PosteriorDraws {
  std::vector<std::string> names;
  int num_chains = 0;
  int draws_per_chain = 0;
  std::vector<double> values;           // [chain][draw][param]
  std::vector<double> log_posterior;    // [chain][draw]
  int num_patients = 0;
  std::vector<double> patient_loglik;   // [chain][draw][patient], may be empty

  int dim() const { return static_cast<int>(names.size()); }
  int total_draws() const { return num_chains * draws_per_chain; }
  std::span<const double> draw(int index) const {
    return {values.data() + static_cast<std::size_t>(index) * dim(), static_cast<std::size_t>(dim())};
  }
  double value(int chain, int draw, int param) const {
    return values[(static_cast<std::size_t>(chain) * draws_per_chain + draw) * dim() + param];
  }
};

struct Diagnostics {
  std::vector<double> rhat;  // per unconstrained parameter
  std::vector<double> ess;
  std::vector<std::string> block_names;
  std::vector<std::vector<double>> acceptance;  // [chain][block], post-warmup
  double max_rhat = 1.0;
  bool stuck_block = false;  // some block accepted nothing after warmup
  double mode_log_posterior = std::nan("");  // Laplace start only
  bool converged = true;     // max_rhat below the threshold and no stuck block
};

struct McmcResult {
  PosteriorDraws draws;
  Diagnostics diagnostics;
};

// Adaptive block random-walk Metropolis. Blocks: the initial distribution;
// one block per origin state holding that row's intercepts, duration and
// covariate coefficients; the emission rates together with the copula
// parameters; all coordinates jointly. Proposal scales (and, without a
// Laplace start, covariances) adapt during warmup and are frozen
// afterwards. Chains are independent given (seed, chain index).
McmcResult run_mcmc(const std::vector<SequenceData>& cohort, const ModelConfig& config, const PriorSpec& priors,
                    const McmcConfig& mcmc);

// Split R-hat (never below 1) and multi-chain effective sample size, for
// samples laid out [chain][draw].
double split_rhat(const std::vector<std::vector<double>>& chains);
double effective_sample_size(const std::vector<std::vector<double>>& chains);
Diagnostics diagnose(const PosteriorDraws& draws, double rhat_threshold);

// Log-likelihood of every patient under every draw, [draw][patient].
std::vector<double> pointwise_loglik(const PosteriorDraws& draws, const ModelConfig& config,
                                     const std::vector<SequenceData>& cohort, int threads = 1);

// Matrices are [draw][patient] with `num_draws` rows. compute_lpd returns
// the raw log pointwise predictive density; WAIC and LOO are on the
// deviance scale (-2 x elpd, lower is better).
double compute_lpd(std::span<const double> pointwise, int num_draws);
double compute_waic(std::span<const double> pointwise, int num_draws);
struct LooResult {
  double elpd = 0.0;
  double deviance = 0.0;
  double max_weight_share = 0.0;  // largest raw importance weight / total, worst patient
  bool flagged = false;           // some patient had one raw weight carrying > 50% of the mass
};
LooResult compute_loo_detail(std::span<const double> pointwise, int num_draws);
double compute_loo(std::span<const double> pointwise, int num_draws);
inline double deviance(double elpd) { return -2.0 * elpd; }

// Held-out predictive density on the deviance scale. Throws if any id is
// shared between the training and held-out sets.
double out_of_sample_lpd(const PosteriorDraws& draws, const ModelConfig& config,
                         const std::vector<SequenceData>& heldout, const std::vector<std::string>& training_ids,
                         const std::vector<std::string>& heldout_ids, int threads = 1);

// Constrained-scale view of a parameter set: free entries only (no
// structural zeros, no last simplex coordinate).
std::vector<std::string> constrained_names(const ModelConfig& config);
std::vector<double> constrained_values(const ParameterSet& params, const ModelConfig& config);

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0;
};
std::vector<ParameterSummary> summarize_constrained(const PosteriorDraws& draws, const ModelConfig& config);
ParameterSet posterior_mean(const PosteriorDraws& draws, const ModelConfig& config);
ParameterSet draw_params(const PosteriorDraws& draws, const ModelConfig& config, int index);

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws);
PosteriorDraws read_draws_csv(std::istream& in);

}  // namespace vdc

#endif  // VDC_INFERENCE_HPP
