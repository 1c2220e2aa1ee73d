#include "vdc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "vdc/emissions.hpp"
#include "vdc/parallel.hpp"
#include "vdc/transitions.hpp"

namespace vdc {

namespace {

constexpr std::uint32_t kPatientStreamTag = 0x51d0c0de;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void check_continuous(const ContinuousSpec& c, const char* name) {
  require(std::isfinite(c.mean) && std::isfinite(c.sd) && c.sd > 0.0, std::string(name) + ": sd must be positive");
  require(std::isfinite(c.lo) && std::isfinite(c.hi) && c.lo < c.hi, std::string(name) + ": empty range");
  require(c.decimals >= 0 && c.decimals <= 6, std::string(name) + ": decimals must be in 0..6");
}

double draw_continuous(const ContinuousSpec& c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(c.mean, c.sd);
  const double scale = std::pow(10.0, c.decimals);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double x = std::round(normal(rng) * scale) / scale;
    if (x >= c.lo && x <= c.hi) return x;
  }
  // Range far in a tail: fall back to a uniform draw.
  std::uniform_real_distribution<double> uniform(c.lo, c.hi);
  return std::clamp(std::round(uniform(rng) * scale) / scale, c.lo, c.hi);
}

int draw_index(std::span<const double> cumulative, double u) {
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), cumulative.size() - 1));
}

ContinuousSpec continuous_from_json(const nlohmann::json& j, ContinuousSpec c) {
  c.mean = j.value("mean", c.mean);
  c.sd = j.value("sd", c.sd);
  c.lo = j.value("min", c.lo);
  c.hi = j.value("max", c.hi);
  c.decimals = j.value("decimals", c.decimals);
  return c;
}

nlohmann::json continuous_to_json(const ContinuousSpec& c) {
  return {{"mean", c.mean}, {"sd", c.sd}, {"min", c.lo}, {"max", c.hi}, {"decimals", c.decimals}};
}

constexpr Factor kFactorOrder[kNumFactors] = {Factor::Gender, Factor::LegPain, Factor::EpisodeDuration,
                                              Factor::PriorEpisodes, Factor::Workload};

}  // namespace

void CovariateGenerator::validate() const {
  check_continuous(age, "age");
  check_continuous(height, "height");
  check_continuous(bmi, "bmi");
  check_continuous(general_health, "general_health");
  for (Factor f : kFactorOrder) {
    const auto& probs = level_probs[static_cast<int>(f)];
    require(probs.size() == factor_levels(f).size(),
            factor_column(f) + ": expected " + std::to_string(factor_levels(f).size()) + " level probabilities");
    double total = 0.0;
    for (double p : probs) {
      require(std::isfinite(p) && p >= 0.0, factor_column(f) + ": level probabilities must be nonnegative");
      total += p;
    }
    require(total > 0.0, factor_column(f) + ": level probabilities sum to zero");
  }
}

void CohortSpec::validate() const {
  require(num_patients >= 1, "num_patients must be at least 1");
  require(horizon >= 1, "horizon must be at least 1");
  require(first_id >= 0, "first_id must be nonnegative");
  require(is_probability(treatment_prob), "treatment_prob must lie in [0, 1]");
  require(is_probability(missing_rate), "missing_rate must lie in [0, 1]");
  require(is_probability(label_flip_rate), "label_flip_rate must lie in [0, 1]");
  config.validate();
  require(feature_dim(features) == config.covariate_dim,
          "features expand to " + std::to_string(feature_dim(features)) + " columns but covariate_dim is " +
              std::to_string(config.covariate_dim));
  params.validate(config);
  covariates.validate();
}

CohortSpec reference_spec() {
  CohortSpec spec;
  spec.num_patients = 200;
  spec.horizon = 52;
  spec.config.num_states = 3;
  spec.config.duration_cap = 20;
  spec.config.copula_family = CopulaFamily::SurvivalGumbel;
  spec.features = {Feature::Treatment, Feature::LagPain};
  spec.config.covariate_dim = 2;
  ParameterSet& p = spec.params;
  p = ParameterSet::defaults(spec.config);
  p.initial_dist = {0.5, 0.3, 0.2};
  // Off-diagonal logits against staying; rows are stable, unstable, acute.
  const double delta[3][3] = {{0, -3.0, -4.5}, {-2.0, 0, -2.6}, {-3.5, -2.4, 0}};
  const double omega[3][3] = {{0, -0.08, 0.0}, {0.05, 0, 0.10}, {0.0, 0.20, 0}};
  const double treat[3][3] = {{0, -0.5, 0.0}, {0.6, 0, -0.4}, {0.3, 0.8, 0}};
  const double lag[3][3] = {{0, 0.15, 0.1}, {-0.1, 0, 0.12}, {-0.12, -0.05, 0}};
  for (int j = 0; j < 3; ++j)
    for (int l = 0; l < 3; ++l) {
      if (j == l) continue;
      p.intercept(j, l) = delta[j][l];
      p.duration_coef(j, l) = omega[j][l];
      p.covariate_coef(j, l)[0] = treat[j][l];
      p.covariate_coef(j, l)[1] = lag[j][l];
    }
  const double pain[3] = {1.2, 3.4, 6.0}, activity[3] = {0.7, 2.2, 4.4};
  for (int s = 0; s < 3; ++s) {
    p.rate(s, 0) = pain[s];
    p.rate(s, 1) = activity[s];
  }
  p.copula_params = {2.5, 2.5, 2.5};
  spec.validate();
  return spec;
}

nlohmann::json to_json(const CohortSpec& spec) {
  nlohmann::json features = nlohmann::json::array();
  for (Feature f : spec.features) features.push_back(to_string(f));
  nlohmann::json levels = nlohmann::json::object();
  for (Factor f : kFactorOrder) levels[factor_column(f)] = spec.covariates.level_probs[static_cast<int>(f)];
  nlohmann::json j = model_document(spec.config, spec.params);
  j["num_patients"] = spec.num_patients;
  j["horizon"] = spec.horizon;
  j["features"] = features;
  j["treatment_prob"] = spec.treatment_prob;
  j["missing_rate"] = spec.missing_rate;
  j["label_flip_rate"] = spec.label_flip_rate;
  j["first_id"] = spec.first_id;
  j["covariates"] = {{"age", continuous_to_json(spec.covariates.age)},
                     {"height", continuous_to_json(spec.covariates.height)},
                     {"bmi", continuous_to_json(spec.covariates.bmi)},
                     {"general_health", continuous_to_json(spec.covariates.general_health)},
                     {"levels", levels}};
  return j;
}

CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec spec;
  if (!j.contains("model")) throw std::invalid_argument("cohort spec needs a \"model\" object");
  const auto& model = j.at("model");
  spec.config = config_from_json(model.at("config"));
  spec.params = params_from_json(model.at("params"), spec.config);
  spec.num_patients = j.value("num_patients", spec.num_patients);
  spec.horizon = j.value("horizon", spec.horizon);
  spec.treatment_prob = j.value("treatment_prob", spec.treatment_prob);
  spec.missing_rate = j.value("missing_rate", spec.missing_rate);
  spec.label_flip_rate = j.value("label_flip_rate", spec.label_flip_rate);
  spec.first_id = j.value("first_id", spec.first_id);
  if (j.contains("features"))
    for (const auto& f : j.at("features")) spec.features.push_back(parse_feature(f.get<std::string>()));
  if (j.contains("covariates")) {
    const auto& c = j.at("covariates");
    auto& g = spec.covariates;
    if (c.contains("age")) g.age = continuous_from_json(c.at("age"), g.age);
    if (c.contains("height")) g.height = continuous_from_json(c.at("height"), g.height);
    if (c.contains("bmi")) g.bmi = continuous_from_json(c.at("bmi"), g.bmi);
    if (c.contains("general_health")) g.general_health = continuous_from_json(c.at("general_health"), g.general_health);
    if (c.contains("levels"))
      for (Factor f : kFactorOrder)
        if (c.at("levels").contains(factor_column(f)))
          g.level_probs[static_cast<int>(f)] = c.at("levels").at(factor_column(f)).get<std::vector<double>>();
  }
  spec.validate();
  return spec;
}

std::string patient_id(int number) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04d", number);
  return buf;
}

SimulatedCohort simulate_cohort_with_states(const CohortSpec& spec, std::uint64_t seed, int threads) {
  spec.validate();
  const ModelConfig& config = spec.config;
  const ParameterSet& params = spec.params;
  const int S = config.num_states;
  const int m = config.num_margins;
  const int T = spec.horizon;

  const auto tables = build_emission_tables(params, config);
  std::vector<std::vector<double>> emission_cdf(S);
  for (int s = 0; s < S; ++s) {
    auto& cdf = emission_cdf[s];
    cdf.resize(tables[s].pmf.values.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < cdf.size(); ++c) cdf[c] = acc += tables[s].pmf.values[c];
  }
  std::vector<double> init_cdf(S);
  {
    double acc = 0.0;
    for (int s = 0; s < S; ++s) init_cdf[s] = acc += params.initial_dist[s];
  }
  std::array<std::vector<double>, kNumFactors> level_cdf;
  for (int k = 0; k < kNumFactors; ++k) {
    double acc = 0.0;
    for (double p : spec.covariates.level_probs[k]) level_cdf[k].push_back(acc += p);
  }
  const auto& sizes = tables.front().pmf.sizes;

  SimulatedCohort out;
  out.records.resize(spec.num_patients);
  out.states.resize(spec.num_patients);
  parallel_for(static_cast<std::size_t>(spec.num_patients), threads, [&](std::size_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), kPatientStreamTag};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    PatientRecord& rec = out.records[i];
    rec.id = patient_id(spec.first_id + static_cast<int>(i));
    rec.num_margins = m;
    RiskProfile& prof = rec.profile;
    prof.age = draw_continuous(spec.covariates.age, rng);
    prof.height = draw_continuous(spec.covariates.height, rng);
    prof.bmi = draw_continuous(spec.covariates.bmi, rng);
    prof.general_health = draw_continuous(spec.covariates.general_health, rng);
    for (int k = 0; k < kNumFactors; ++k) prof.levels[k] = draw_index(level_cdf[k], unit(rng));

    rec.observations.reserve(static_cast<std::size_t>(T) * m);
    rec.treatment.reserve(T);
    rec.phase.reserve(T);
    auto& path = out.states[i];
    path.reserve(T);

    int state = draw_index(init_cdf, unit(rng));
    int duration = 1;
    std::vector<int> y(m);
    for (int t = 0; t < T; ++t) {
      path.push_back(state);
      int cell = draw_index(emission_cdf[state], unit(rng));
      for (int k = m - 1; k >= 0; --k) {
        y[k] = cell % sizes[k];
        cell /= sizes[k];
      }
      for (int k = 0; k < m; ++k) {
        const bool missing = spec.missing_rate > 0.0 && unit(rng) < spec.missing_rate;
        rec.observations.push_back(missing ? kMissing : y[k]);
      }
      rec.treatment.push_back(spec.treatment_prob > 0.0 && unit(rng) < spec.treatment_prob ? 1 : 0);

      Regimen label = phase_of_state(state, S);
      if (spec.label_flip_rate > 0.0 && unit(rng) < spec.label_flip_rate) {
        const int shift = 1 + static_cast<int>(unit(rng) * (kNumRegimens - 1));
        label = static_cast<Regimen>((static_cast<int>(label) + shift) % kNumRegimens);
      }
      rec.phase.push_back(label);

      if (t + 1 == T) break;
      const auto x = covariate_row(rec, spec.features, t);
      const auto row = transition_row(params, config, {state, duration, x});
      std::vector<double> cdf(S);
      double acc = 0.0;
      for (int l = 0; l < S; ++l) cdf[l] = acc += row[l];
      const int next = draw_index(cdf, unit(rng));
      duration = next == state ? std::min(duration + 1, config.duration_cap) : 1;
      state = next;
    }
  });
  return out;
}

std::vector<PatientRecord> simulate_cohort(const CohortSpec& spec, std::uint64_t seed, int threads) {
  return simulate_cohort_with_states(spec, seed, threads).records;
}

std::optional<double> kendall_tau_b(std::span<const int> x, std::span<const int> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kendall_tau_b: length mismatch");
  if (x.size() < 2) return std::nullopt;
  int nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || y[i] < 0) throw std::invalid_argument("kendall_tau_b: values must be nonnegative");
    nx = std::max(nx, x[i] + 1);
    ny = std::max(ny, y[i] + 1);
  }
  std::vector<double> table(static_cast<std::size_t>(nx) * ny, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) table[static_cast<std::size_t>(x[i]) * ny + y[i]] += 1.0;

  // Suffix counts over the contingency table.
  std::vector<double> gt(static_cast<std::size_t>(nx + 1) * (ny + 1), 0.0);  // x >= a, y >= b
  std::vector<double> gl(static_cast<std::size_t>(nx + 1) * (ny + 1), 0.0);  // x >= a, y <= b - 1
  auto at = [&](std::vector<double>& v, int a, int b) -> double& { return v[static_cast<std::size_t>(a) * (ny + 1) + b]; };
  for (int a = nx - 1; a >= 0; --a)
    for (int b = ny - 1; b >= 0; --b)
      at(gt, a, b) = table[static_cast<std::size_t>(a) * ny + b] + at(gt, a + 1, b) + at(gt, a, b + 1) - at(gt, a + 1, b + 1);
  for (int a = nx - 1; a >= 0; --a)
    for (int b = 1; b <= ny; ++b)
      at(gl, a, b) = table[static_cast<std::size_t>(a) * ny + (b - 1)] + at(gl, a + 1, b) + at(gl, a, b - 1) - at(gl, a + 1, b - 1);

  double concordant = 0.0, discordant = 0.0;
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < ny; ++b) {
      const double n = table[static_cast<std::size_t>(a) * ny + b];
      if (n == 0.0) continue;
      concordant += n * at(gt, a + 1, b + 1);
      discordant += n * at(gl, a + 1, b);
    }
  const double n = static_cast<double>(x.size());
  const double n0 = n * (n - 1.0) / 2.0;
  double tx = 0.0, ty = 0.0;
  for (int a = 0; a < nx; ++a) {
    double row = 0.0;
    for (int b = 0; b < ny; ++b) row += table[static_cast<std::size_t>(a) * ny + b];
    tx += row * (row - 1.0) / 2.0;
  }
  for (int b = 0; b < ny; ++b) {
    double col = 0.0;
    for (int a = 0; a < nx; ++a) col += table[static_cast<std::size_t>(a) * ny + b];
    ty += col * (col - 1.0) / 2.0;
  }
  const double denom = std::sqrt((n0 - tx) * (n0 - ty));
  if (!(denom > 0.0)) return std::nullopt;
  return (concordant - discordant) / denom;
}

DependenceSummary empirical_dependence(const std::vector<PatientRecord>& cohort) {
  std::vector<int> pain, activity;
  int max_pain = 10, max_activity = 7;
  for (const auto& r : cohort) {
    if (r.num_margins != 2) throw std::invalid_argument("empirical_dependence needs two measures per week");
    for (int t = 0; t < r.length(); ++t) {
      const int p = r.obs(t, 0), a = r.obs(t, 1);
      if (p == kMissing || a == kMissing) continue;
      pain.push_back(p);
      activity.push_back(a);
      max_pain = std::max(max_pain, p);
      max_activity = std::max(max_activity, a);
    }
  }
  DependenceSummary out;
  out.pairs = static_cast<long long>(pain.size());
  out.tau_b = kendall_tau_b(pain, activity);
  out.row_counts.assign(max_activity + 1, 0);
  std::vector<std::vector<double>> counts(max_activity + 1, std::vector<double>(max_pain + 1, 0.0));
  for (std::size_t i = 0; i < pain.size(); ++i) {
    counts[activity[i]][pain[i]] += 1.0;
    ++out.row_counts[activity[i]];
  }
  for (int a = 0; a <= max_activity; ++a) {
    const double total = static_cast<double>(out.row_counts[a]);
    for (double& c : counts[a]) c = total > 0.0 ? c / total : std::numeric_limits<double>::quiet_NaN();
  }
  out.conditional = std::move(counts);
  return out;
}

}  // namespace vdc
