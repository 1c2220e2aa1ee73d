#ifndef VDC_SIMULATE_HPP
#define VDC_SIMULATE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdc/cohort.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Normal(mean, sd) truncated to [lo, hi] by rejection, rounded to
// `decimals` places.
struct ContinuousSpec {
  double mean = 0.0;
  double sd = 1.0;
  double lo = 0.0;
  double hi = 1.0;
  int decimals = 1;
};

// Risk-factor distributions. Defaults follow the study population summary:
// continuous factors as truncated normals, categorical factors with the
// observed level frequencies (indexed like factor_levels()).
struct CovariateGenerator {
  ContinuousSpec age{43.20, 11.44, 18.0, 65.0, 0};
  ContinuousSpec height{175.99, 8.86, 153.0, 201.0, 0};
  ContinuousSpec bmi{26.26, 4.66, 18.0, 59.0, 1};
  ContinuousSpec general_health{67.57, 20.49, 0.0, 100.0, 0};
  std::array<std::vector<double>, kNumFactors> level_probs{
      std::vector<double>{0.4593, 0.5407},
      std::vector<double>{0.4198, 0.3395, 0.2407},
      std::vector<double>{0.6255, 0.1369, 0.1068, 0.1309},
      std::vector<double>{0.1611, 0.3462, 0.4928},
      std::vector<double>{0.2403, 0.3574, 0.1993, 0.2030},
  };

  void validate() const;
};

struct CohortSpec {
  int num_patients = 100;
  int horizon = 52;
  ModelConfig config;
  ParameterSet params;
  CovariateGenerator covariates;
  std::vector<Feature> features;  // must expand to config.covariate_dim columns
  double treatment_prob = 0.0192;
  double missing_rate = 0.0;      // per margin and week, independent
  double label_flip_rate = 0.0;   // label replaced by a uniformly chosen other phase
  int first_id = 1;               // ids are P0001, P0002, ... starting here

  void validate() const;
};

// Three-phase ground truth with duration-dependent sojourns, lower-tail
// dependent symptoms (survival Gumbel, nu = 2.5) and two transition
// covariates (treatment, lagged pain).
CohortSpec reference_spec();

nlohmann::json to_json(const CohortSpec& spec);
// Missing keys keep their defaults; "model" (config and params) is required.
CohortSpec cohort_spec_from_json(const nlohmann::json& j);

std::string patient_id(int number);

// Draws a cohort from the generative model. Every patient uses its own
// random stream derived from (seed, patient index), so the result does not
// depend on `threads`.
std::vector<PatientRecord> simulate_cohort(const CohortSpec& spec, std::uint64_t seed, int threads = 1);

// Latent state paths are returned alongside when requested.
struct SimulatedCohort {
  std::vector<PatientRecord> records;
  std::vector<std::vector<int>> states;  // [patient][week]
};
SimulatedCohort simulate_cohort_with_states(const CohortSpec& spec, std::uint64_t seed, int threads = 1);

// Kendall's tau-b with tie correction for nonnegative integer pairs;
// nothing when either variable is constant or fewer than two pairs exist.
std::optional<double> kendall_tau_b(std::span<const int> x, std::span<const int> y);

struct DependenceSummary {
  long long pairs = 0;                            // weeks with both measures observed
  std::optional<double> tau_b;
  std::vector<std::vector<double>> conditional;   // [activity][pain], rows sum to 1 (NaN rows if unseen)
  std::vector<long long> row_counts;              // per activity value
};

// Dependence between pain and activity over every fully observed week.
DependenceSummary empirical_dependence(const std::vector<PatientRecord>& cohort);

}  // namespace vdc

#endif  // VDC_SIMULATE_HPP
