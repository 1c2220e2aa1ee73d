#include "vdc/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vdc/csv.hpp"

namespace vdc {

namespace {

const char* const kEncodingNote =
    "categorical covariates are one-hot encoded with the first level as reference; lag_pain and lag_activity are the "
    "latest observed value up to the current week (0 before any observation); covariate row t drives the transition "
    "out of week t";

nlohmann::json file_json(const FitFiles& files) {
  return {{"observations", files.observations}, {"profiles", files.profiles}, {"labels", files.labels}};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::vector<Feature> constant_features(const std::vector<PatientRecord>& cohort, const std::vector<Feature>& features) {
  std::vector<Feature> out;
  for (Feature f : features) {
    const std::vector<Feature> single{f};
    const int width = feature_dim(single);
    std::vector<double> first;
    std::vector<bool> varies(width, false);
    for (const auto& r : cohort)
      for (int t = 0; t + 1 < r.length(); ++t) {
        const auto row = covariate_row(r, single, t);
        if (first.empty()) {
          first = row;
          continue;
        }
        for (int c = 0; c < width; ++c)
          if (row[c] != first[c]) varies[c] = true;
      }
    if (first.empty() || std::find(varies.begin(), varies.end(), false) != varies.end()) out.push_back(f);
  }
  return out;
}

bool needs_profiles(const std::vector<Feature>& features) {
  for (Feature f : features)
    if (f != Feature::Treatment && f != Feature::LagPain && f != Feature::LagActivity) return true;
  return false;
}

FitOutcome fit_model(const std::vector<PatientRecord>& training, const FitRequest& request,
                     const std::vector<PatientRecord>* heldout) {
  if (training.empty()) throw DataError("no training patients");
  FitOutcome out;
  out.config = request.config;
  std::vector<Feature> features = out.config.use_covariates ? request.features : std::vector<Feature>{};
  for (Feature f : constant_features(training, features)) {
    out.dropped.push_back(to_string(f));
    features.erase(std::find(features.begin(), features.end(), f));
  }
  out.features = features;
  out.config.covariate_dim = feature_dim(features);
  out.config.validate();

  const auto sequences = to_sequences(training, features);
  out.training_ids = patient_ids(training);
  out.result = run_mcmc(sequences, out.config, request.priors, request.mcmc);
  const PosteriorDraws& draws = out.result.draws;
  out.posterior_mean = posterior_mean(draws, out.config);
  const int n = draws.total_draws();
  out.lpd = compute_lpd(draws.patient_loglik, n);
  out.waic = compute_waic(draws.patient_loglik, n);
  out.loo = compute_loo_detail(draws.patient_loglik, n);

  if (heldout) {
    const auto held = to_sequences(*heldout, features);
    out.heldout_deviance =
        out_of_sample_lpd(draws, out.config, held, out.training_ids, patient_ids(*heldout), request.mcmc.threads);
  }

  const bool labelled = std::all_of(training.begin(), training.end(),
                                    [](const PatientRecord& r) { return static_cast<int>(r.phase.size()) == r.length(); });
  if (!labelled) {
    out.regimen_map_error = "training data has no labels for every week";
  } else {
    std::vector<int> states;
    std::vector<Regimen> labels;
    for (std::size_t i = 0; i < training.size(); ++i) {
      const auto s = filtered_states(out.posterior_mean, out.config, sequences[i]);
      states.insert(states.end(), s.begin(), s.end());
      labels.insert(labels.end(), training[i].phase.begin(), training[i].phase.end());
    }
    try {
      out.regimen_map = fit_regimen_map(states, labels, out.config.num_states);
    } catch (const DataError& e) {
      out.regimen_map_error = e.what();
    }
  }
  return out;
}

nlohmann::json fit_summary(const FitOutcome& fit, const FitRequest& request, const FitFiles& training,
                           const std::optional<FitFiles>& heldout) {
  const PosteriorDraws& draws = fit.result.draws;
  const Diagnostics& diag = fit.result.diagnostics;
  nlohmann::json j;
  j["config"] = to_json(fit.config);
  j["variant"] = to_string(fit.config.variant());
  nlohmann::json names = nlohmann::json::array();
  for (Feature f : fit.features) names.push_back(to_string(f));
  j["features"] = names;
  j["feature_columns"] = feature_columns(fit.features);
  j["dropped_features"] = fit.dropped;
  j["encoding"] = kEncodingNote;
  j["mcmc"] = {{"chains", request.mcmc.num_chains},
               {"iterations", request.mcmc.iterations},
               {"warmup", request.mcmc.warmup},
               {"seed", request.mcmc.seed},
               {"sweeps", request.mcmc.sweeps},
               {"coordinate_moves", request.mcmc.coordinate_moves},
               {"init", request.mcmc.init == InitStrategy::DataInformed ? "data-informed" : "uniform"},
               {"rhat_threshold", request.mcmc.rhat_threshold},
               {"retained_draws", draws.total_draws()}};
  nlohmann::json train = file_json(training);
  train["patients"] = fit.training_ids.size();
  train["ids"] = fit.training_ids;
  j["training"] = train;
  j["heldout"] = heldout ? file_json(*heldout) : nlohmann::json(nullptr);
  j["posterior_mean"] = to_json(fit.posterior_mean);

  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : summarize_constrained(draws, fit.config))
    params.push_back({{"name", p.name}, {"mean", p.mean}, {"sd", p.sd}, {"q05", p.q05}, {"q50", p.q50}, {"q95", p.q95}});
  j["parameters"] = params;

  j["diagnostics"] = {{"max_rhat", diag.max_rhat},
                      {"converged", diag.converged},
                      {"stuck_block", diag.stuck_block},
                      {"unconstrained_names", draws.names},
                      {"rhat", diag.rhat},
                      {"ess", diag.ess},
                      {"blocks", diag.block_names},
                      {"acceptance", diag.acceptance}};
  j["criteria"] = {{"lpd", fit.lpd},
                   {"lpd_deviance", deviance(fit.lpd)},
                   {"waic", fit.waic},
                   {"loo", fit.loo.deviance},
                   {"loo_max_weight_share", fit.loo.max_weight_share},
                   {"loo_flagged", fit.loo.flagged},
                   {"heldout_lpd_deviance",
                    fit.heldout_deviance ? nlohmann::json(*fit.heldout_deviance) : nlohmann::json(nullptr)}};
  j["regimen_map"] = fit.regimen_map ? to_json(*fit.regimen_map) : nlohmann::json(nullptr);
  if (!fit.regimen_map) j["regimen_map_note"] = fit.regimen_map_error;
  return j;
}

StoredFit load_fit(const std::string& dir) {
  namespace fs = std::filesystem;
  StoredFit fit;
  fit.dir = dir;
  const fs::path summary_path = fs::path(dir) / "summary.json";
  const fs::path draws_path = fs::path(dir) / "draws.csv";
  if (!fs::exists(summary_path)) throw DataError("fit directory " + dir + " has no summary.json");
  if (!fs::exists(draws_path)) throw DataError("fit directory " + dir + " has no draws.csv");
  try {
    fit.summary = nlohmann::json::parse(read_file(summary_path));
    fit.config = config_from_json(fit.summary.at("config"));
    for (const auto& name : fit.summary.at("features")) fit.features.push_back(parse_feature(name.get<std::string>()));
    fit.posterior_mean = params_from_json(fit.summary.at("posterior_mean"), fit.config);
    const auto& map = fit.summary.at("regimen_map");
    if (!map.is_null()) fit.regimen_map = regimen_map_from_json(map);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(summary_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(summary_path.string() + ": " + e.what());
  }
  if (feature_dim(fit.features) != fit.config.covariate_dim)
    throw DataError(summary_path.string() + ": features do not match the covariate dimension");
  std::ifstream in(draws_path, std::ios::binary);
  fit.draws = read_draws_csv(in);
  if (fit.draws.dim() != unconstrained_dim(fit.config))
    throw DataError(draws_path.string() + " has " + std::to_string(fit.draws.dim()) + " parameters, the model needs " +
                    std::to_string(unconstrained_dim(fit.config)));
  return fit;
}

std::vector<ParameterSet> spaced_draws(const PosteriorDraws& draws, const ModelConfig& config, int max_draws) {
  const int total = draws.total_draws();
  if (total == 0) throw DataError("fit has no posterior draws");
  if (max_draws < 1) throw std::invalid_argument("max_draws must be positive");
  const int k = std::min(max_draws, total);
  std::vector<ParameterSet> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i)
    out.push_back(draw_params(draws, config, static_cast<int>(static_cast<long long>(i) * total / k)));
  return out;
}

}  // namespace vdc
