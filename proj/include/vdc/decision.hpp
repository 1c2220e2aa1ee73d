#ifndef VDC_DECISION_HPP
#define VDC_DECISION_HPP

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdc/cohort.hpp"
#include "vdc/forward.hpp"
#include "vdc/model.hpp"

namespace vdc {

// Latent state -> regimen, from label frequencies observed alongside the
// filtered training states. Ties go to the more intensive regimen.
struct RegimenMap {
  std::vector<std::array<long long, kNumRegimens>> counts;  // [state][regimen]
  std::vector<Regimen> labels;                               // argmax per state

  int num_states() const { return static_cast<int>(labels.size()); }
  Regimen operator()(int state) const { return labels.at(state); }
  std::array<double, kNumRegimens> frequencies(int state) const;
};

// Throws DataError naming every state that never occurs in `states`.
RegimenMap fit_regimen_map(std::span<const int> states, std::span<const Regimen> labels, int num_states);

nlohmann::json to_json(const RegimenMap& map);
RegimenMap regimen_map_from_json(const nlohmann::json& j);

// Filtered MAP state of every week, computed on-line (week t uses weeks
// 1..t only).
std::vector<int> filtered_states(const ParameterSet& params, const ModelConfig& config, const SequenceData& data);

enum class DecodeMode { PosteriorMean, DrawVote };

// On-line regimen recommendations. PosteriorMean decodes under a single
// parameter set; DrawVote decodes under each draw and takes the majority
// regimen, ties to the more intensive one.
class Recommender {
 public:
  Recommender(ModelConfig config, ParameterSet point, RegimenMap map);
  Recommender(ModelConfig config, std::vector<ParameterSet> draws, RegimenMap map);

  DecodeMode mode() const { return mode_; }
  // Regimen for week `week` (1-based) from weeks 1..week only.
  Regimen recommend(const SequenceData& data, int week) const;
  // Every week of the sequence; entry t equals recommend(data, t + 1).
  std::vector<Regimen> recommend_all(const SequenceData& data) const;
  std::vector<std::vector<Regimen>> recommend_cohort(const std::vector<SequenceData>& cohort, int threads = 1) const;

 private:
  ModelConfig config_;
  std::vector<ParameterSet> params_;
  RegimenMap map_;
  DecodeMode mode_;
};

struct CostModel {
  std::array<double, kNumRegimens> annual_cost{208.57, 374.14, 464.71};  // USD, indexed by Regimen
  double weeks_per_year = 52.0;
  // Disability weight of a mis-treated week, chosen by the true phase.
  std::array<double, kNumRegimens> disability_weight{0.040, 0.040, 0.370};

  void validate() const;
  double weekly_deviation(Regimen predicted, Regimen truth) const;
};

struct ClassMetrics {
  long long support = 0;         // true weeks of this class
  double recall = 0.0;           // NaN without support
  double precision = 0.0;        // NaN without predictions
  double f1 = 0.0;               // NaN when neither
  double balanced_accuracy = 0.0;  // one-vs-rest, NaN without support or without negatives
};

struct EvaluationReport {
  std::string model;
  std::array<std::array<long long, kNumRegimens>, kNumRegimens> confusion{};  // [true][predicted]
  long long patient_weeks = 0;
  double patient_years = 0.0;
  std::array<ClassMetrics, kNumRegimens> classes{};
  double balanced_accuracy = 0.0;  // mean recall over classes with support
  double macro_f1 = 0.0;           // mean F1 over classes with a defined F1
  // Summed weekly cost deviations (USD) and the same per patient-year.
  double cost_under = 0.0, cost_over = 0.0, cost_total = 0.0;
  double cost_under_per_year = 0.0, cost_over_per_year = 0.0, cost_total_per_year = 0.0;
  // Share of the gap between the all-wrong QALY floor and perfect
  // identification that the predictions recover.
  double qaly = 0.0;
  double qaly_floor = 0.0;
  double qaly_improvement = 0.0;
};

EvaluationReport evaluate(std::span<const Regimen> predicted, std::span<const Regimen> truth,
                          const CostModel& costs = {}, std::string model = "model");

nlohmann::json to_json(const EvaluationReport& report);
// Flat rows: model,metric,value.
void write_report_csv(std::ostream& out, const std::vector<EvaluationReport>& reports);

}  // namespace vdc

#endif  // VDC_DECISION_HPP
