#include "vdc/decision.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "vdc/csv.hpp"
#include "vdc/parallel.hpp"

namespace vdc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Regimen regimen_at(int index) { return static_cast<Regimen>(index); }

// Argmax with ties to the higher index (the more intensive regimen).
template <typename T>
Regimen severe_argmax(const std::array<T, kNumRegimens>& v) {
  int best = 0;
  for (int r = 1; r < kNumRegimens; ++r)
    if (v[r] >= v[best]) best = r;
  return regimen_at(best);
}

double nan_mean(std::initializer_list<double> xs) {
  double sum = 0.0;
  int n = 0;
  for (double x : xs)
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  return n > 0 ? sum / n : kNaN;
}

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

std::array<double, kNumRegimens> RegimenMap::frequencies(int state) const {
  const auto& c = counts.at(state);
  long long total = 0;
  for (long long n : c) total += n;
  std::array<double, kNumRegimens> f{};
  for (int r = 0; r < kNumRegimens; ++r) f[r] = total > 0 ? static_cast<double>(c[r]) / total : kNaN;
  return f;
}

RegimenMap fit_regimen_map(std::span<const int> states, std::span<const Regimen> labels, int num_states) {
  if (num_states < 1) throw std::invalid_argument("num_states must be at least 1");
  if (states.size() != labels.size()) throw std::invalid_argument("states and labels must be aligned");
  if (states.empty()) throw DataError("no training weeks to fit the regimen map");
  RegimenMap map;
  map.counts.assign(num_states, {});
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] < 0 || states[i] >= num_states) throw std::invalid_argument("state index out of range");
    ++map.counts[states[i]][static_cast<int>(labels[i])];
  }
  std::string unseen;
  for (int s = 0; s < num_states; ++s) {
    const auto& c = map.counts[s];
    if (c[0] + c[1] + c[2] == 0) unseen += (unseen.empty() ? "" : ", ") + std::to_string(s);
    map.labels.push_back(severe_argmax(c));
  }
  if (!unseen.empty()) throw DataError("latent state(s) " + unseen + " never visited in the training data");
  return map;
}

nlohmann::json to_json(const RegimenMap& map) {
  nlohmann::json states = nlohmann::json::array();
  for (int s = 0; s < map.num_states(); ++s) {
    nlohmann::json counts = nlohmann::json::object();
    for (int r = 0; r < kNumRegimens; ++r) counts[to_string(regimen_at(r))] = map.counts[s][r];
    states.push_back({{"state", s}, {"regimen", to_string(map.labels[s])}, {"counts", counts}});
  }
  return states;
}

RegimenMap regimen_map_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw DataError("regimen map must be a nonempty array");
  RegimenMap map;
  for (std::size_t s = 0; s < j.size(); ++s) {
    const auto& e = j[s];
    if (!e.contains("state") || e.at("state").get<int>() != static_cast<int>(s))
      throw DataError("regimen map entries must list states 0, 1, ... in order");
    std::array<long long, kNumRegimens> c{};
    for (int r = 0; r < kNumRegimens; ++r) c[r] = e.at("counts").value(to_string(regimen_at(r)), 0LL);
    map.counts.push_back(c);
    map.labels.push_back(parse_regimen(e.at("regimen").get<std::string>()));
  }
  return map;
}

std::vector<int> filtered_states(const ParameterSet& params, const ModelConfig& config, const SequenceData& data) {
  if (data.length == 0) return {};
  return filter_sequence(params, config, data, data.length).map_states;
}

Recommender::Recommender(ModelConfig config, ParameterSet point, RegimenMap map)
    : config_(std::move(config)), params_{std::move(point)}, map_(std::move(map)), mode_(DecodeMode::PosteriorMean) {
  if (map_.num_states() != config_.num_states) throw std::invalid_argument("regimen map does not match num_states");
  params_.front().validate(config_);
}

Recommender::Recommender(ModelConfig config, std::vector<ParameterSet> draws, RegimenMap map)
    : config_(std::move(config)), params_(std::move(draws)), map_(std::move(map)), mode_(DecodeMode::DrawVote) {
  if (params_.empty()) throw std::invalid_argument("draw vote needs at least one draw");
  if (map_.num_states() != config_.num_states) throw std::invalid_argument("regimen map does not match num_states");
  for (const auto& p : params_) p.validate(config_);
}

std::vector<Regimen> Recommender::recommend_all(const SequenceData& data) const {
  const int T = data.length;
  if (mode_ == DecodeMode::PosteriorMean) {
    std::vector<Regimen> out;
    out.reserve(T);
    for (int s : filtered_states(params_.front(), config_, data)) out.push_back(map_(s));
    return out;
  }
  std::vector<std::array<int, kNumRegimens>> votes(T, std::array<int, kNumRegimens>{});
  for (const auto& p : params_) {
    const auto states = filtered_states(p, config_, data);
    for (int t = 0; t < T; ++t) ++votes[t][static_cast<int>(map_(states[t]))];
  }
  std::vector<Regimen> out;
  out.reserve(T);
  for (const auto& v : votes) out.push_back(severe_argmax(v));
  return out;
}

Regimen Recommender::recommend(const SequenceData& data, int week) const {
  if (week < 1 || week > data.length) throw std::out_of_range("week outside the observed horizon");
  SequenceData prefix;
  prefix.length = week;
  prefix.num_margins = data.num_margins;
  prefix.covariate_dim = data.covariate_dim;
  prefix.observations.assign(data.observations.begin(),
                             data.observations.begin() + static_cast<std::ptrdiff_t>(week) * data.num_margins);
  prefix.covariates.assign(data.covariates.begin(),
                           data.covariates.begin() + static_cast<std::ptrdiff_t>(week) * data.covariate_dim);
  return recommend_all(prefix).back();
}

std::vector<std::vector<Regimen>> Recommender::recommend_cohort(const std::vector<SequenceData>& cohort,
                                                                int threads) const {
  std::vector<std::vector<Regimen>> out(cohort.size());
  parallel_for(cohort.size(), threads, [&](std::size_t i) { out[i] = recommend_all(cohort[i]); });
  return out;
}

void CostModel::validate() const {
  for (double c : annual_cost)
    if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("annual costs must be finite and nonnegative");
  if (!(annual_cost[0] < annual_cost[1] && annual_cost[1] < annual_cost[2]))
    throw std::invalid_argument("annual costs must increase from stable to acute");
  if (!(weeks_per_year > 0.0)) throw std::invalid_argument("weeks_per_year must be positive");
  for (double w : disability_weight)
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("disability weights must lie in [0, 1]");
}

double CostModel::weekly_deviation(Regimen predicted, Regimen truth) const {
  return std::abs(annual_cost[static_cast<int>(predicted)] - annual_cost[static_cast<int>(truth)]) / weeks_per_year;
}

EvaluationReport evaluate(std::span<const Regimen> predicted, std::span<const Regimen> truth, const CostModel& costs,
                          std::string model) {
  costs.validate();
  if (predicted.size() != truth.size()) throw std::invalid_argument("predictions and labels must be aligned");
  EvaluationReport rep;
  rep.model = std::move(model);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = static_cast<int>(truth[i]), p = static_cast<int>(predicted[i]);
    if (t < 0 || t >= kNumRegimens || p < 0 || p >= kNumRegimens) throw DataError("regimen label out of range");
    ++rep.confusion[t][p];
  }
  const long long n = static_cast<long long>(truth.size());
  rep.patient_weeks = n;
  rep.patient_years = static_cast<double>(n) / costs.weeks_per_year;

  for (int c = 0; c < kNumRegimens; ++c) {
    ClassMetrics& m = rep.classes[c];
    long long tp = rep.confusion[c][c], predicted_c = 0;
    for (int t = 0; t < kNumRegimens; ++t) {
      m.support += rep.confusion[c][t];
      predicted_c += rep.confusion[t][c];
    }
    const long long fp = predicted_c - tp, negatives = n - m.support;
    m.recall = m.support > 0 ? static_cast<double>(tp) / m.support : kNaN;
    m.precision = predicted_c > 0 ? static_cast<double>(tp) / predicted_c : kNaN;
    if (m.support == 0 && predicted_c == 0)
      m.f1 = kNaN;
    else
      m.f1 = 2.0 * tp / static_cast<double>(m.support + predicted_c);
    const double specificity = negatives > 0 ? static_cast<double>(negatives - fp) / negatives : kNaN;
    m.balanced_accuracy = 0.5 * (m.recall + specificity);
  }
  rep.balanced_accuracy = nan_mean({rep.classes[0].recall, rep.classes[1].recall, rep.classes[2].recall});
  rep.macro_f1 = nan_mean({rep.classes[0].f1, rep.classes[1].f1, rep.classes[2].f1});

  // Deviations accumulate per (true, predicted) cell so that the split is
  // exact: total is defined as under + over.
  double qaly = 0.0, floor = 0.0;
  for (int t = 0; t < kNumRegimens; ++t) {
    for (int p = 0; p < kNumRegimens; ++p) {
      const double cell = static_cast<double>(rep.confusion[t][p]);
      const double dev = cell * costs.weekly_deviation(regimen_at(p), regimen_at(t));
      if (p < t) rep.cost_under += dev;
      if (p > t) rep.cost_over += dev;
      qaly += cell * (p == t ? 1.0 : 1.0 - costs.disability_weight[t]);
      floor += cell * (1.0 - costs.disability_weight[t]);
    }
  }
  rep.cost_total = rep.cost_under + rep.cost_over;
  if (n > 0) {
    rep.cost_under_per_year = rep.cost_under / rep.patient_years;
    rep.cost_over_per_year = rep.cost_over / rep.patient_years;
    rep.cost_total_per_year = rep.cost_under_per_year + rep.cost_over_per_year;
    rep.qaly = qaly / n;
    rep.qaly_floor = floor / n;
    rep.qaly_improvement = rep.qaly_floor < 1.0 ? (rep.qaly - rep.qaly_floor) / (1.0 - rep.qaly_floor) : kNaN;
  } else {
    rep.balanced_accuracy = rep.macro_f1 = rep.qaly = rep.qaly_floor = rep.qaly_improvement = kNaN;
  }
  return rep;
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json classes = nlohmann::json::object();
  nlohmann::json confusion = nlohmann::json::array();
  for (int c = 0; c < kNumRegimens; ++c) {
    const ClassMetrics& m = r.classes[c];
    classes[to_string(regimen_at(c))] = {{"support", m.support},
                                         {"recall", number(m.recall)},
                                         {"precision", number(m.precision)},
                                         {"f1", number(m.f1)},
                                         {"balanced_accuracy", number(m.balanced_accuracy)}};
    confusion.push_back(r.confusion[c]);
  }
  return {{"model", r.model},
          {"patient_weeks", r.patient_weeks},
          {"patient_years", r.patient_years},
          {"labels", {"stable", "unstable", "acute"}},
          {"confusion_true_by_predicted", confusion},
          {"classes", classes},
          {"balanced_accuracy", number(r.balanced_accuracy)},
          {"macro_f1", number(r.macro_f1)},
          {"cost_usd",
           {{"under", r.cost_under},
            {"over", r.cost_over},
            {"total", r.cost_total},
            {"under_per_patient_year", r.cost_under_per_year},
            {"over_per_patient_year", r.cost_over_per_year},
            {"total_per_patient_year", r.cost_total_per_year}}},
          {"qaly", {{"achieved", number(r.qaly)}, {"floor", number(r.qaly_floor)}, {"improvement", number(r.qaly_improvement)}}}};
}

void write_report_csv(std::ostream& out, const std::vector<EvaluationReport>& reports) {
  write_csv_row(out, {"model", "metric", "value"});
  for (const auto& r : reports) {
    auto row = [&](const std::string& metric, double v) { write_csv_row(out, {r.model, metric, format_double(v)}); };
    row("patient_weeks", static_cast<double>(r.patient_weeks));
    row("balanced_accuracy", r.balanced_accuracy);
    row("macro_f1", r.macro_f1);
    for (int c = 0; c < kNumRegimens; ++c) {
      const std::string name = to_string(regimen_at(c));
      row("recall_" + name, r.classes[c].recall);
      row("precision_" + name, r.classes[c].precision);
      row("f1_" + name, r.classes[c].f1);
      row("balanced_accuracy_" + name, r.classes[c].balanced_accuracy);
    }
    row("cost_under_per_patient_year", r.cost_under_per_year);
    row("cost_over_per_patient_year", r.cost_over_per_year);
    row("cost_total_per_patient_year", r.cost_total_per_year);
    row("cost_under", r.cost_under);
    row("cost_over", r.cost_over);
    row("cost_total", r.cost_total);
    row("qaly_improvement", r.qaly_improvement);
    for (int t = 0; t < kNumRegimens; ++t)
      for (int p = 0; p < kNumRegimens; ++p)
        row("confusion_" + to_string(regimen_at(t)) + "_" + to_string(regimen_at(p)),
            static_cast<double>(r.confusion[t][p]));
  }
}

}  // namespace vdc
