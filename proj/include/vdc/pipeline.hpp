#ifndef VDC_PIPELINE_HPP
#define VDC_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdc/cohort.hpp"
#include "vdc/decision.hpp"
#include "vdc/inference.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Training and evaluation steps shared by the command-line tool and the
// end-to-end checks.

struct FitRequest {
  ModelConfig config;             // covariate_dim is derived from `features`
  std::vector<Feature> features;  // ignored by variants without covariates
  McmcConfig mcmc;
  PriorSpec priors;
};

struct FitOutcome {
  ModelConfig config;
  std::vector<Feature> features;            // after dropping constant ones
  std::vector<std::string> dropped;         // features removed as constant
  std::vector<std::string> training_ids;
  McmcResult result;
  ParameterSet posterior_mean;
  double lpd = 0.0;                         // raw, in-sample
  double waic = 0.0;                        // deviance scale
  LooResult loo;
  std::optional<double> heldout_deviance;   // -2 x held-out lpd
  std::optional<RegimenMap> regimen_map;    // when training labels exist
  std::string regimen_map_error;            // why the map is missing
};

// Features whose covariate columns are constant over the transition rows of
// `cohort` (every week but the last); such columns cannot be estimated.
std::vector<Feature> constant_features(const std::vector<PatientRecord>& cohort, const std::vector<Feature>& features);

bool needs_profiles(const std::vector<Feature>& features);

// Runs the sampler and the model-comparison summaries. Constant features
// are dropped first. The regimen map uses filtered states under the
// posterior mean and needs labels on every training week.
FitOutcome fit_model(const std::vector<PatientRecord>& training, const FitRequest& request,
                     const std::vector<PatientRecord>* heldout = nullptr);

struct FitFiles {
  std::string observations, profiles, labels;
};

// summary.json content; deterministic given the inputs (no timestamps,
// no thread counts).
nlohmann::json fit_summary(const FitOutcome& fit, const FitRequest& request, const FitFiles& training,
                           const std::optional<FitFiles>& heldout);

// A fit read back from its output directory.
struct StoredFit {
  std::string dir;
  nlohmann::json summary;
  ModelConfig config;
  std::vector<Feature> features;
  ParameterSet posterior_mean;
  std::optional<RegimenMap> regimen_map;
  PosteriorDraws draws;
};

StoredFit load_fit(const std::string& dir);

// Up to `max_draws` parameter sets, evenly spaced over all retained draws.
std::vector<ParameterSet> spaced_draws(const PosteriorDraws& draws, const ModelConfig& config, int max_draws);

}  // namespace vdc

#endif  // VDC_PIPELINE_HPP
