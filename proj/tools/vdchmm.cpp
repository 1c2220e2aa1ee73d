#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vdc/baselines.hpp"
#include "vdc/cohort.hpp"
#include "vdc/csv.hpp"
#include "vdc/decision.hpp"
#include "vdc/inference.hpp"
#include "vdc/pipeline.hpp"
#include "vdc/simulate.hpp"

namespace fs = std::filesystem;
using namespace vdc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNotConverged = 3;

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

int fail(const char* category, const std::string& message, int code) {
  std::cerr << "error[" << category << "]: " << one_line(message) << "\n";
  return code;
}

void warn(const std::string& message) { std::cerr << "warning: " << one_line(message) << "\n"; }

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path);
}

void check_writable(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) throw UsageError("refusing to overwrite " + path.string() + " (use --force)");
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Cohort files: either a directory holding observations.csv with optional
// profiles.csv and truth_labels.csv, or explicit paths.
struct DataOptions {
  std::string dir, observations, profiles, labels;

  void add(CLI::App* cmd, const std::string& prefix, const std::string& what) {
    cmd->add_option("--" + prefix, dir, what + " directory (observations.csv, profiles.csv, truth_labels.csv)");
    if (prefix == "data") {
      cmd->add_option("--observations", observations, "observations CSV (overrides --data)");
      cmd->add_option("--profiles", profiles, "profiles CSV (overrides --data)");
      cmd->add_option("--labels", labels, "truth labels CSV (overrides --data)");
    }
  }

  bool given() const { return !dir.empty() || !observations.empty(); }

  FitFiles resolve(const std::string& what) const {
    FitFiles f{observations, profiles, labels};
    if (!dir.empty()) {
      if (!fs::is_directory(dir)) throw DataError(what + " directory not found: " + dir);
      auto pick = [&](std::string& slot, const char* name) {
        const fs::path p = fs::path(dir) / name;
        if (slot.empty() && fs::exists(p)) slot = p.string();
      };
      pick(f.observations, "observations.csv");
      pick(f.profiles, "profiles.csv");
      pick(f.labels, "truth_labels.csv");
    }
    require_file(f.observations, what + " observations");
    if (!f.profiles.empty()) require_file(f.profiles, what + " profiles");
    if (!f.labels.empty()) require_file(f.labels, what + " labels");
    return f;
  }
};

std::vector<PatientRecord> load_cohort(const FitFiles& files, const std::vector<Feature>& features,
                                       const std::string& what) {
  if (needs_profiles(features) && files.profiles.empty())
    throw DataError(what + ": the chosen covariates need a profiles file");
  auto cohort = read_cohort(files.observations, files.profiles, files.labels);
  if (cohort.empty()) throw DataError(what + " has no patients");
  return cohort;
}

std::vector<std::string> joined_ids(const std::vector<PatientRecord>& cohort) { return patient_ids(cohort); }

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string spec_path, out;
  std::optional<int> patients, weeks, first_id;
  std::optional<double> missing_rate, label_noise;
  bool print_spec = false;
  std::uint64_t seed = 1;
  int threads = 1;
  bool force = false;
};

int run_simulate(const SimulateArgs& a) {
  CohortSpec spec = reference_spec();
  if (!a.spec_path.empty()) {
    require_file(a.spec_path, "spec file");
    try {
      spec = cohort_spec_from_json(nlohmann::json::parse(read_file(a.spec_path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(a.spec_path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(a.spec_path + ": " + e.what());
    }
  }
  if (a.patients) spec.num_patients = *a.patients;
  if (a.weeks) spec.horizon = *a.weeks;
  if (a.first_id) spec.first_id = *a.first_id;
  if (a.missing_rate) spec.missing_rate = *a.missing_rate;
  if (a.label_noise) spec.label_flip_rate = *a.label_noise;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid cohort spec: ") + e.what());
  }
  if (a.print_spec) {
    std::cout << to_json(spec).dump(2) << "\n";
    return 0;
  }
  if (a.out.empty()) throw UsageError("--out is required");
  const fs::path dir(a.out);
  const fs::path files[] = {dir / "observations.csv", dir / "profiles.csv", dir / "truth_labels.csv",
                            dir / "spec.json"};
  for (const auto& f : files) check_writable(f, a.force);
  fs::create_directories(dir);
  const auto cohort = simulate_cohort(spec, a.seed, a.threads);
  write_observations_csv(files[0].string(), cohort);
  write_profiles_csv(files[1].string(), cohort);
  write_labels_csv(files[2].string(), cohort);
  nlohmann::json manifest = to_json(spec);
  manifest["seed"] = a.seed;
  write_file(files[3], manifest.dump(2) + "\n");
  std::cout << "simulated " << cohort.size() << " patients x " << spec.horizon << " weeks into " << dir.string()
            << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  DataOptions data, heldout;
  std::string out;
  std::string variant = "vdc-hmmx";
  std::string copula = "gumbel";
  int states = 3;
  int dmax = 20;
  std::string covariates = "treatment,lag_pain,lag_activity";
  int chains = 2, iters = 3500, warmup = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool allow_nonconverged = false;
  bool force = false;
};

int run_fit(const FitArgs& a) {
  if (a.out.empty()) throw UsageError("--out is required");
  FitRequest req;
  try {
    req.config.num_states = a.states;
    req.config.duration_cap = a.dmax;
    req.config.copula_family = parse_copula_family(a.copula);
    req.config.apply_variant(parse_variant(a.variant));
    req.features = parse_feature_list(a.covariates);
    req.config.covariate_dim = feature_dim(req.features);
    req.config.validate();
    req.mcmc.num_chains = a.chains;
    req.mcmc.iterations = a.iters;
    req.mcmc.warmup = a.warmup;
    req.mcmc.seed = a.seed;
    req.mcmc.threads = a.threads;
    req.mcmc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir(a.out);
  check_writable(dir / "draws.csv", a.force);
  check_writable(dir / "summary.json", a.force);

  const std::vector<Feature> used = req.config.use_covariates ? req.features : std::vector<Feature>{};
  const FitFiles train_files = a.data.resolve("training data");
  const auto training = load_cohort(train_files, used, "training data");
  std::optional<FitFiles> held_files;
  std::vector<PatientRecord> heldout;
  if (a.heldout.given()) {
    held_files = a.heldout.resolve("held-out data");
    heldout = load_cohort(*held_files, used, "held-out data");
    const auto train_ids = joined_ids(training);
    for (const auto& id : joined_ids(heldout))
      if (std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end())
        throw DataError("patient " + id + " appears in both the training and the held-out data");
  }

  for (Feature f : constant_features(training, used))
    warn("dropping covariate '" + to_string(f) + "': constant in the training data");
  const FitOutcome fit = fit_model(training, req, held_files ? &heldout : nullptr);

  fs::create_directories(dir);
  {
    std::ostringstream draws;
    write_draws_csv(draws, fit.result.draws);
    write_file(dir / "draws.csv", draws.str());
  }
  write_file(dir / "summary.json", fit_summary(fit, req, train_files, held_files).dump(2) + "\n");
  if (!fit.regimen_map) warn("no regimen map: " + fit.regimen_map_error);

  const auto& d = fit.result.diagnostics;
  std::printf("fit %s: %d states, %d patients, %d draws, max R-hat %.4f\n", to_string(fit.config.variant()).c_str(),
              fit.config.num_states, static_cast<int>(training.size()), fit.result.draws.total_draws(), d.max_rhat);
  std::printf("  in-sample lpd %.2f  WAIC %.2f  LOO %.2f (deviance scale)\n", deviance(fit.lpd), fit.waic,
              fit.loo.deviance);
  if (fit.heldout_deviance) std::printf("  held-out lpd %.2f (deviance scale)\n", *fit.heldout_deviance);
  if (!d.converged) {
    std::string why = "max R-hat " + format_double(d.max_rhat) + " exceeds " + format_double(req.mcmc.rhat_threshold);
    if (d.stuck_block) why += "; a sampler block accepted no proposal after warmup";
    if (!a.allow_nonconverged) throw NotConverged(why + " (outputs written; pass --allow-nonconverged to accept)");
    warn("not converged: " + why);
  }
  return 0;
}

// ------------------------------------------------------------------ select

struct SelectArgs {
  std::vector<std::string> fits;
  DataOptions heldout;
  std::string out;
  int threads = 1;
  bool force = false;
};

int run_select(const SelectArgs& a) {
  if (a.fits.empty()) throw UsageError("at least one --fit is required");
  if (!a.out.empty()) check_writable(a.out, a.force);
  std::optional<FitFiles> held_files;
  if (a.heldout.given()) held_files = a.heldout.resolve("held-out data");

  struct Row {
    std::string fit, variant, copula;
    int states = 0;
    double loo = 0, waic = 0, lpd_in = 0, lpd_out = 0;
  };
  std::vector<Row> rows;
  for (const auto& dir : a.fits) {
    const StoredFit fit = load_fit(dir);
    Row r;
    r.fit = dir;
    r.variant = to_string(fit.config.variant());
    r.copula = to_string(fit.config.copula_family);
    r.states = fit.config.num_states;
    const auto& crit = fit.summary.at("criteria");
    r.loo = crit.at("loo").get<double>();
    r.waic = crit.at("waic").get<double>();
    r.lpd_in = crit.at("lpd_deviance").get<double>();
    if (held_files) {
      const auto held = load_cohort(*held_files, fit.features, "held-out data");
      std::vector<std::string> train_ids;
      for (const auto& id : fit.summary.at("training").at("ids")) train_ids.push_back(id.get<std::string>());
      std::vector<SequenceData> seqs;
      try {
        seqs = to_sequences(held, fit.features);
        r.lpd_out = out_of_sample_lpd(fit.draws, fit.config, seqs, train_ids, patient_ids(held), a.threads);
      } catch (const std::invalid_argument& e) {
        throw DataError(dir + ": " + e.what());
      } catch (const std::out_of_range& e) {
        throw DataError(dir + ": " + e.what());
      }
    } else {
      const auto& stored = crit.at("heldout_lpd_deviance");
      if (stored.is_null()) throw UsageError("fit " + dir + " has no held-out lpd; pass --heldout");
      r.lpd_out = stored.get<double>();
    }
    rows.push_back(r);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].lpd_out < rows[best].lpd_out) best = i;

  std::printf("%-4s %-28s %-9s %-15s %6s %12s %12s %12s %12s\n", "best", "fit", "variant", "copula", "states", "LOO",
              "WAIC", "lpd_in", "lpd_out");
  std::ostringstream csv;
  write_csv_row(csv, {"fit", "variant", "copula", "states", "loo", "waic", "lpd_in", "lpd_out", "best"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    std::printf("%-4s %-28s %-9s %-15s %6d %12.2f %12.2f %12.2f %12.2f\n", i == best ? "*" : "", r.fit.c_str(),
                r.variant.c_str(), r.copula.c_str(), r.states, r.loo, r.waic, r.lpd_in, r.lpd_out);
    write_csv_row(csv, {r.fit, r.variant, r.copula, std::to_string(r.states), format_double(r.loo),
                        format_double(r.waic), format_double(r.lpd_in), format_double(r.lpd_out),
                        i == best ? "1" : "0"});
  }
  std::printf("(deviance scale, lower is better; * marks the lowest out-of-sample lpd)\n");
  if (!a.out.empty()) write_file(a.out, csv.str());
  return 0;
}

// ------------------------------------------------- recommend and evaluate

struct DecodeArgs {
  std::string fit;
  DataOptions data;
  std::string mode = "mean";
  int max_draws = 200;
  int threads = 1;
};

struct Recommendations {
  std::vector<std::string> ids;
  std::vector<std::vector<Regimen>> regimens;  // [patient][week]
};

Recommendations recommend_for(const DecodeArgs& a, const std::vector<PatientRecord>& cohort, const StoredFit& fit) {
  if (!fit.regimen_map)
    throw DataError("fit " + fit.dir + " has no regimen map (fit it on data with labels for every week)");
  std::optional<Recommender> rec;
  if (a.mode == "mean") {
    rec.emplace(fit.config, fit.posterior_mean, *fit.regimen_map);
  } else if (a.mode == "vote") {
    rec.emplace(fit.config, spaced_draws(fit.draws, fit.config, a.max_draws), *fit.regimen_map);
  } else {
    throw UsageError("--mode must be mean or vote");
  }
  Recommendations out;
  out.ids = patient_ids(cohort);
  try {
    out.regimens = rec->recommend_cohort(to_sequences(cohort, fit.features), a.threads);
  } catch (const std::out_of_range& e) {
    throw DataError(e.what());
  }
  return out;
}

std::string recommendations_csv(const Recommendations& r) {
  std::ostringstream out;
  write_csv_row(out, {"patient_id", "week", "regimen"});
  for (std::size_t i = 0; i < r.ids.size(); ++i)
    for (std::size_t t = 0; t < r.regimens[i].size(); ++t)
      write_csv_row(out, {r.ids[i], std::to_string(t + 1), to_string(r.regimens[i][t])});
  return out.str();
}

Recommendations read_recommendations(const std::string& path) {
  require_file(path, "recommendations file");
  const auto rows = read_csv_file(path);
  if (rows.empty()) throw DataError(path + ": empty file");
  const auto& h = rows.front();
  const std::size_t c_id = column_index(h, "patient_id"), c_week = column_index(h, "week"),
                    c_reg = column_index(h, "regimen");
  Recommendations out;
  std::map<std::string, std::size_t> slot;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path + " row " + std::to_string(r + 1) + ": ";
    if (row.size() != h.size()) throw DataError(where + "wrong number of fields");
    auto [it, fresh] = slot.try_emplace(row[c_id], out.ids.size());
    if (fresh) {
      out.ids.push_back(row[c_id]);
      out.regimens.emplace_back();
    }
    auto& weeks = out.regimens[it->second];
    const long long week = parse_int(row[c_week], where + "week");
    if (week != static_cast<long long>(weeks.size()) + 1) throw DataError(where + "weeks must be consecutive from 1");
    try {
      weeks.push_back(parse_regimen(row[c_reg]));
    } catch (const std::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

// Aligns predictions with the labels of `truth`, patient by patient.
void flatten(const Recommendations& rec, const std::vector<PatientRecord>& truth, std::vector<Regimen>& predicted,
             std::vector<Regimen>& labels) {
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < rec.ids.size(); ++i) slot[rec.ids[i]] = i;
  for (const auto& r : truth) {
    if (static_cast<int>(r.phase.size()) != r.length()) throw DataError("patient " + r.id + " lacks labels");
    const auto it = slot.find(r.id);
    if (it == slot.end()) throw DataError("no recommendations for patient " + r.id);
    const auto& weeks = rec.regimens[it->second];
    if (static_cast<int>(weeks.size()) != r.length())
      throw DataError("patient " + r.id + " has " + std::to_string(weeks.size()) + " recommendations for " +
                      std::to_string(r.length()) + " weeks");
    predicted.insert(predicted.end(), weeks.begin(), weeks.end());
    labels.insert(labels.end(), r.phase.begin(), r.phase.end());
  }
}

struct RecommendArgs : DecodeArgs {
  std::string out;
  bool force = false;
};

int run_recommend(const RecommendArgs& a) {
  if (a.fit.empty()) throw UsageError("--fit is required");
  if (a.out.empty()) throw UsageError("--out is required");
  check_writable(a.out, a.force);
  const StoredFit fit = load_fit(a.fit);
  const auto cohort = load_cohort(a.data.resolve("data"), fit.features, "data");
  const auto rec = recommend_for(a, cohort, fit);
  write_file(a.out, recommendations_csv(rec));
  std::size_t weeks = 0;
  for (const auto& r : rec.regimens) weeks += r.size();
  std::cout << "wrote " << weeks << " recommendations for " << rec.ids.size() << " patients to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs : DecodeArgs {
  std::string recommendations;
  DataOptions train;
  bool baselines = false;
  std::string out, csv;
  bool force = false;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.out.empty()) throw UsageError("--out is required");
  if (a.fit.empty() == a.recommendations.empty()) throw UsageError("give exactly one of --fit and --recommendations");
  check_writable(a.out, a.force);
  if (!a.csv.empty()) check_writable(a.csv, a.force);

  std::optional<StoredFit> fit;
  if (!a.fit.empty()) fit = load_fit(a.fit);
  const FitFiles files = a.data.resolve("data");
  if (files.labels.empty()) throw DataError("evaluation needs truth labels (truth_labels.csv or --labels)");
  const std::vector<Feature> features = fit ? fit->features : std::vector<Feature>{};
  FitFiles with_profiles = files;
  const bool want_baselines = a.baselines;
  if (want_baselines && files.profiles.empty()) throw DataError("baselines need a profiles file for the risk factors");
  const auto cohort = load_cohort(with_profiles, features, "data");

  const Recommendations rec = fit ? recommend_for(a, cohort, *fit) : read_recommendations(a.recommendations);
  std::vector<Regimen> predicted, labels;
  flatten(rec, cohort, predicted, labels);
  const std::string model_name = fit ? to_string(fit->config.variant()) : "recommendations";
  std::vector<EvaluationReport> reports{evaluate(predicted, labels, CostModel{}, model_name)};

  if (want_baselines) {
    FitFiles train_files;
    if (a.train.given()) {
      train_files = a.train.resolve("baseline training data");
    } else if (fit) {
      const auto& t = fit->summary.at("training");
      train_files = {t.at("observations").get<std::string>(), t.at("profiles").get<std::string>(),
                     t.at("labels").get<std::string>()};
      require_file(train_files.observations, "baseline training observations");
    } else {
      throw UsageError("--baselines needs --train when no --fit is given");
    }
    if (train_files.profiles.empty() || train_files.labels.empty())
      throw DataError("baseline training data needs profiles and labels");
    const auto training = read_cohort(train_files.observations, train_files.profiles, train_files.labels);
    for (BaselineKind kind : kAllBaselines) {
      const BaselineClassifier clf = fit_baseline(kind, training);
      std::vector<Regimen> pred;
      for (const auto& r : cohort) {
        const auto p = clf.predict_all(r);
        pred.insert(pred.end(), p.begin(), p.end());
      }
      reports.push_back(evaluate(pred, labels, CostModel{}, to_string(kind)));
    }
  }

  nlohmann::json j;
  j["patients"] = cohort.size();
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(to_json(r));
  write_file(a.out, j.dump(2) + "\n");
  if (!a.csv.empty()) {
    std::ostringstream out;
    write_report_csv(out, reports);
    write_file(a.csv, out.str());
  }
  std::printf("%-16s %10s %10s %12s %12s %12s\n", "model", "bal.acc", "macro F1", "cost/py", "under/py", "over/py");
  for (const auto& r : reports)
    std::printf("%-16s %10.4f %10.4f %12.2f %12.2f %12.2f\n", r.model.c_str(), r.balanced_accuracy, r.macro_f1,
                r.cost_total_per_year, r.cost_under_per_year, r.cost_over_per_year);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-duration copula hidden Markov models for longitudinal symptom data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate a synthetic cohort");
  c_sim->add_option("--spec", sim.spec_path, "cohort spec JSON (default: the built-in reference cohort)");
  c_sim->add_option("--out", sim.out, "output directory");
  c_sim->add_option("--patients", sim.patients, "number of patients")->check(CLI::PositiveNumber);
  c_sim->add_option("--weeks", sim.weeks, "weeks per patient")->check(CLI::PositiveNumber);
  c_sim->add_option("--first-id", sim.first_id, "number of the first patient id")->check(CLI::NonNegativeNumber);
  c_sim->add_option("--missing-rate", sim.missing_rate, "probability that a measure is missing")
      ->check(CLI::Range(0.0, 1.0));
  c_sim->add_option("--label-noise", sim.label_noise, "probability that a week's label is replaced")
      ->check(CLI::Range(0.0, 1.0));
  c_sim->add_flag("--print-spec", sim.print_spec, "print the effective spec as JSON and exit");
  c_sim->add_option("--seed", sim.seed, "random seed");
  c_sim->add_option("--threads", sim.threads, "worker threads")->check(CLI::PositiveNumber);
  c_sim->add_flag("--force", sim.force, "overwrite existing outputs");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Sample the posterior of a model");
  fit.data.add(c_fit, "data", "training data");
  fit.heldout.add(c_fit, "heldout", "held-out data");
  c_fit->add_option("--out", fit.out, "output directory for draws.csv and summary.json");
  c_fit->add_option("--variant", fit.variant, "hmm, hmmx, vd-hmm or vdc-hmmx")->capture_default_str();
  c_fit->add_option("--copula", fit.copula, "independence, gumbel, amh or clayton")->capture_default_str();
  c_fit->add_option("--states", fit.states, "number of latent states")->check(CLI::PositiveNumber)->capture_default_str();
  c_fit->add_option("--dmax", fit.dmax, "duration cap in weeks")->check(CLI::PositiveNumber)->capture_default_str();
  c_fit->add_option("--covariates", fit.covariates, "comma-separated transition covariates, or none")
      ->capture_default_str();
  c_fit->add_option("--chains", fit.chains, "chains")->check(CLI::PositiveNumber)->capture_default_str();
  c_fit->add_option("--iters", fit.iters, "iterations per chain, warmup included")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_fit->add_option("--warmup", fit.warmup, "warmup iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
  c_fit->add_option("--seed", fit.seed, "random seed")->capture_default_str();
  c_fit->add_option("--threads", fit.threads, "worker threads")->check(CLI::PositiveNumber);
  c_fit->add_flag("--allow-nonconverged", fit.allow_nonconverged, "exit 0 even if R-hat exceeds the threshold");
  c_fit->add_flag("--force", fit.force, "overwrite existing outputs");

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select", "Compare fits by predictive criteria");
  c_sel->add_option("--fit", sel.fits, "fit directory (repeat for each model)");
  sel.heldout.add(c_sel, "heldout", "held-out data");
  c_sel->add_option("--out", sel.out, "optional CSV copy of the table");
  c_sel->add_option("--threads", sel.threads, "worker threads")->check(CLI::PositiveNumber);
  c_sel->add_flag("--force", sel.force, "overwrite existing outputs");

  RecommendArgs rec;
  auto* c_rec = app.add_subcommand("recommend", "On-line regimen recommendations for every patient-week");
  c_rec->add_option("--fit", rec.fit, "fit directory");
  rec.data.add(c_rec, "data", "cohort");
  c_rec->add_option("--out", rec.out, "recommendations CSV");
  c_rec->add_option("--mode", rec.mode, "mean (posterior-mean parameters) or vote (majority over draws)")
      ->capture_default_str();
  c_rec->add_option("--max-draws", rec.max_draws, "draws used by --mode vote")->check(CLI::PositiveNumber);
  c_rec->add_option("--threads", rec.threads, "worker threads")->check(CLI::PositiveNumber);
  c_rec->add_flag("--force", rec.force, "overwrite existing outputs");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score recommendations against labels");
  c_ev->add_option("--fit", ev.fit, "fit directory (recommendations are computed on the fly)");
  c_ev->add_option("--recommendations", ev.recommendations, "recommendations CSV instead of --fit");
  ev.data.add(c_ev, "data", "labelled cohort");
  ev.train.add(c_ev, "train", "baseline training data (default: the fit's training data)");
  c_ev->add_flag("--baselines", ev.baselines, "also score the four symptom-based baselines");
  c_ev->add_option("--out", ev.out, "report JSON");
  c_ev->add_option("--csv", ev.csv, "optional flat CSV report (model,metric,value)");
  c_ev->add_option("--mode", ev.mode, "mean or vote")->capture_default_str();
  c_ev->add_option("--max-draws", ev.max_draws, "draws used by --mode vote")->check(CLI::PositiveNumber);
  c_ev->add_option("--threads", ev.threads, "worker threads")->check(CLI::PositiveNumber);
  c_ev->add_flag("--force", ev.force, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), kExitUsage);
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_sel->parsed()) return run_select(sel);
    if (c_rec->parsed()) return run_recommend(rec);
    if (c_ev->parsed()) return run_evaluate(ev);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const DataError& e) {
    return fail("data", e.what(), kExitData);
  } catch (const NotConverged& e) {
    return fail("nonconvergence", e.what(), kExitNotConverged);
  } catch (const std::exception& e) {
    return fail("data", e.what(), kExitData);
  }
  return fail("usage", "no command given", kExitUsage);
}
