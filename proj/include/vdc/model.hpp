#ifndef VDC_MODEL_HPP
#define VDC_MODEL_HPP

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vdc {

enum class CopulaFamily { Independence, SurvivalGumbel, AliMikhailHaq, Clayton };

std::string to_string(CopulaFamily family);
// Accepts the enum names as well as the CLI spellings
// (independence, gumbel, amh, clayton).
CopulaFamily parse_copula_family(std::string_view name);

// Restrictions of the full model selected by which transition components
// are active.
enum class Variant { Hmm, Hmmx, VdHmm, VdcHmmx };

std::string to_string(Variant variant);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  int num_states = 3;
  int num_margins = 2;
  std::vector<int> scale_max{10, 7};
  int duration_cap = 52;
  CopulaFamily copula_family = CopulaFamily::SurvivalGumbel;
  int covariate_dim = 0;
  bool use_duration = true;
  bool use_covariates = true;

  void validate() const;
  // Number of covariates that actually enter the transition logits.
  int active_covariates() const { return use_covariates ? covariate_dim : 0; }
  bool has_copula_params() const {
    return copula_family != CopulaFamily::Independence;
  }
  Variant variant() const;
  void apply_variant(Variant v);
};

// All estimable quantities. Matrices are stored row-major; the covariate
// coefficient block is indexed [from][to][covariate].
struct ParameterSet {
  int num_states = 0;
  int num_margins = 0;
  int covariate_dim = 0;

  std::vector<double> initial_dist;
  std::vector<double> intercepts;
  std::vector<double> duration_coefs;
  std::vector<double> covariate_coefs;
  std::vector<double> emission_rates;
  std::vector<double> copula_params;

  // Zero transition coefficients, uniform initial distribution, rates
  // 1, 2, ... on every margin, copula parameters at a mild positive
  // dependence (nu = 1.5, nu' = 0.3, theta = 1).
  static ParameterSet defaults(const ModelConfig& config);

  double& intercept(int from, int to) { return intercepts[from * num_states + to]; }
  double intercept(int from, int to) const { return intercepts[from * num_states + to]; }
  double& duration_coef(int from, int to) { return duration_coefs[from * num_states + to]; }
  double duration_coef(int from, int to) const { return duration_coefs[from * num_states + to]; }
  std::span<double> covariate_coef(int from, int to) {
    return {covariate_coefs.data() + (from * num_states + to) * covariate_dim,
            static_cast<std::size_t>(covariate_dim)};
  }
  std::span<const double> covariate_coef(int from, int to) const {
    return {covariate_coefs.data() + (from * num_states + to) * covariate_dim,
            static_cast<std::size_t>(covariate_dim)};
  }
  double& rate(int state, int margin) { return emission_rates[state * num_margins + margin]; }
  double rate(int state, int margin) const { return emission_rates[state * num_margins + margin]; }

  // Throws std::invalid_argument describing the first violated invariant.
  void validate(const ModelConfig& config) const;
};

struct PriorSpec {
  double dirichlet_concentration = 1.0;
  double intercept_sd = 10.0;
  double duration_coef_sd = 1.0;
  double covariate_coef_sd = 1.0;
  double rate_sd = 5.0;
  // Half-normal scale on nu - 1 (survival Gumbel) and on theta (Clayton).
  // The AMH parameter gets a uniform prior on (-1, 1).
  double gumbel_excess_sd = 1.0;
  double clayton_sd = 2.0;
};

// Linear change of basis for the covariate coefficients: centering plus a
// scaled thin QR factor. Priors on intercepts and covariate coefficients
// apply in this basis: delta' = delta + center . beta, beta~ = R beta.
struct CovariateBasis {
  std::vector<double> center;
  std::vector<double> r;          // p x p upper triangular, row-major
  std::vector<double> r_inverse;  // p x p upper triangular, row-major

  int dim() const { return static_cast<int>(center.size()); }
  static CovariateBasis identity(int p);
};

// Log prior density of a parameter set on the constrained scale (no
// Jacobian terms). `basis` selects the coordinates on which the intercept
// and covariate priors are placed; nullptr means the raw coordinates.
double log_prior(const ParameterSet& params, const ModelConfig& config,
                 const PriorSpec& priors, const CovariateBasis* basis = nullptr);

// Offsets of each parameter group inside the unconstrained vector.
struct ParameterLayout {
  int initial = 0, initial_size = 0;
  int intercepts = 0, intercepts_size = 0;
  int duration = 0, duration_size = 0;
  int covariates = 0, covariates_size = 0;
  int rates = 0, rates_size = 0;
  int copula = 0, copula_size = 0;
  int total = 0;

  explicit ParameterLayout(const ModelConfig& config);
  // Offsets of the off-diagonal (from, to) pair among the
  // num_states * (num_states - 1) off-diagonal slots.
  static int off_diagonal_index(int from, int to, int num_states);
};

int unconstrained_dim(const ModelConfig& config);
std::vector<std::string> unconstrained_names(const ModelConfig& config);

std::vector<double> to_unconstrained(const ParameterSet& params, const ModelConfig& config);
ParameterSet from_unconstrained(std::span<const double> v, const ModelConfig& config);
// log |d constrained / d unconstrained| of from_unconstrained at v.
double log_jacobian(std::span<const double> v, const ModelConfig& config);

// JSON document {"model": {"config": ..., "params": ...}}.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ParameterSet& params);
ParameterSet params_from_json(const nlohmann::json& j, const ModelConfig& config);
nlohmann::json model_document(const ModelConfig& config, const ParameterSet& params);

}  // namespace vdc

#endif  // VDC_MODEL_HPP
