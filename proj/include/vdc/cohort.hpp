#ifndef VDC_COHORT_HPP
#define VDC_COHORT_HPP

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vdc/forward.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Care programs, ordered by intensity.
enum class Regimen { Stable = 0, Unstable = 1, Acute = 2 };
inline constexpr int kNumRegimens = 3;

std::string to_string(Regimen r);
Regimen parse_regimen(std::string_view name);

// Phase name of a latent state under the first-margin rate ordering:
// lowest state stable, highest acute, anything between unstable. A single
// state model is all stable.
Regimen phase_of_state(int state, int num_states);

// Categorical risk factors and their levels; the first level is the
// reference category when one-hot encoding.
enum class Factor { Gender, LegPain, EpisodeDuration, PriorEpisodes, Workload };
inline constexpr int kNumFactors = 5;
std::string factor_column(Factor f);
const std::vector<std::string>& factor_levels(Factor f);

struct RiskProfile {
  double age = 0.0;
  double height = 0.0;
  double bmi = 0.0;
  double general_health = 0.0;
  std::array<int, kNumFactors> levels{};  // indexed by Factor

  int level(Factor f) const { return levels[static_cast<int>(f)]; }
};

// One patient's series. Observations are [week][margin] with kMissing for
// gaps (margin 0 pain, margin 1 activity). `phase` is empty when no labels
// are attached.
struct PatientRecord {
  std::string id;
  RiskProfile profile;
  int num_margins = 2;
  std::vector<int> observations;
  std::vector<int> treatment;  // 0/1 per week
  std::vector<Regimen> phase;

  int length() const { return static_cast<int>(treatment.size()); }
  int obs(int week, int margin) const { return observations[static_cast<std::size_t>(week) * num_margins + margin]; }
};

// Transition covariates.
enum class Feature {
  Treatment,
  LagPain,
  LagActivity,
  Age,
  Height,
  Bmi,
  GeneralHealth,
  Gender,
  LegPain,
  EpisodeDuration,
  PriorEpisodes,
  Workload
};

std::string to_string(Feature f);
Feature parse_feature(std::string_view name);
std::vector<Feature> parse_feature_list(std::string_view comma_separated);
// All twelve, in declaration order.
std::vector<Feature> all_features();

// Column names after one-hot expansion, e.g. "age", "gender=Male".
std::vector<std::string> feature_columns(const std::vector<Feature>& features);
int feature_dim(const std::vector<Feature>& features);

// Covariate row that drives the transition out of `week` (0-based). Lagged
// measurements are the latest observed values up to and including `week`
// (the previous measurement for the week being entered); 0 if nothing has
// been observed yet. Only weeks <= `week` are read.
std::vector<double> covariate_row(const PatientRecord& record, const std::vector<Feature>& features, int week);

// Model-ready series with the given features as covariates.
SequenceData to_sequence(const PatientRecord& record, const std::vector<Feature>& features);
std::vector<SequenceData> to_sequences(const std::vector<PatientRecord>& cohort, const std::vector<Feature>& features);
std::vector<std::string> patient_ids(const std::vector<PatientRecord>& cohort);

// CSV files. Weeks are written 1-based.
void write_observations_csv(const std::string& path, const std::vector<PatientRecord>& cohort);
void write_profiles_csv(const std::string& path, const std::vector<PatientRecord>& cohort);
void write_labels_csv(const std::string& path, const std::vector<PatientRecord>& cohort);

// Reads observations and, when the paths are non-empty, joins profiles and
// labels by patient id. Throws DataError on malformed or inconsistent files.
std::vector<PatientRecord> read_cohort(const std::string& observations_path, const std::string& profiles_path,
                                       const std::string& labels_path);

}  // namespace vdc

#endif  // VDC_COHORT_HPP
