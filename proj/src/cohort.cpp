#include "vdc/cohort.hpp"

#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "vdc/csv.hpp"

namespace vdc {

std::string to_string(Regimen r) {
  switch (r) {
    case Regimen::Stable: return "stable";
    case Regimen::Unstable: return "unstable";
    case Regimen::Acute: return "acute";
  }
  return "?";
}

Regimen parse_regimen(std::string_view name) {
  if (name == "stable") return Regimen::Stable;
  if (name == "unstable") return Regimen::Unstable;
  if (name == "acute") return Regimen::Acute;
  throw DataError("unknown phase '" + std::string(name) + "' (expected stable, unstable or acute)");
}

Regimen phase_of_state(int state, int num_states) {
  if (state < 0 || state >= num_states) throw std::invalid_argument("state index out of range");
  if (state == 0) return Regimen::Stable;
  if (state == num_states - 1) return Regimen::Acute;
  return Regimen::Unstable;
}

std::string factor_column(Factor f) {
  switch (f) {
    case Factor::Gender: return "gender";
    case Factor::LegPain: return "leg_pain";
    case Factor::EpisodeDuration: return "episode_duration";
    case Factor::PriorEpisodes: return "prior_episodes";
    case Factor::Workload: return "workload";
  }
  return "?";
}

const std::vector<std::string>& factor_levels(Factor f) {
  static const std::vector<std::string> gender{"Female", "Male"};
  static const std::vector<std::string> leg{"No pain", "Mild pain", "Moderate-severe pain"};
  static const std::vector<std::string> episode{"0-2 weeks", "2-4 weeks", "1-3 months", "More than 3 months"};
  static const std::vector<std::string> prior{"None", "1-3", "More than 3"};
  static const std::vector<std::string> work{"Sitting", "Sitting and walking", "Light physical work",
                                             "Heavy physical work"};
  switch (f) {
    case Factor::Gender: return gender;
    case Factor::LegPain: return leg;
    case Factor::EpisodeDuration: return episode;
    case Factor::PriorEpisodes: return prior;
    case Factor::Workload: return work;
  }
  throw std::invalid_argument("unknown factor");
}

namespace {

constexpr Factor kFactors[kNumFactors] = {Factor::Gender, Factor::LegPain, Factor::EpisodeDuration,
                                          Factor::PriorEpisodes, Factor::Workload};

struct FeatureInfo {
  Feature feature;
  const char* name;
  bool categorical;
  Factor factor;
};

constexpr FeatureInfo kFeatures[] = {
    {Feature::Treatment, "treatment", false, Factor::Gender},
    {Feature::LagPain, "lag_pain", false, Factor::Gender},
    {Feature::LagActivity, "lag_activity", false, Factor::Gender},
    {Feature::Age, "age", false, Factor::Gender},
    {Feature::Height, "height", false, Factor::Gender},
    {Feature::Bmi, "bmi", false, Factor::Gender},
    {Feature::GeneralHealth, "general_health", false, Factor::Gender},
    {Feature::Gender, "gender", true, Factor::Gender},
    {Feature::LegPain, "leg_pain", true, Factor::LegPain},
    {Feature::EpisodeDuration, "episode_duration", true, Factor::EpisodeDuration},
    {Feature::PriorEpisodes, "prior_episodes", true, Factor::PriorEpisodes},
    {Feature::Workload, "workload", true, Factor::Workload},
};

const FeatureInfo& info(Feature f) {
  for (const auto& i : kFeatures)
    if (i.feature == f) return i;
  throw std::invalid_argument("unknown feature");
}

int latest_observed(const PatientRecord& r, int margin, int week) {
  if (margin >= r.num_margins) return 0;
  for (int t = week; t >= 0; --t) {
    const int y = r.obs(t, margin);
    if (y != kMissing) return y;
  }
  return 0;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

bool parse_flag(const std::string& text, const std::string& what) {
  if (text == "0") return false;
  if (text == "1") return true;
  throw DataError("invalid " + what + " flag '" + text + "' (expected 0 or 1)");
}

int level_index(Factor f, const std::string& value) {
  const auto& levels = factor_levels(f);
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i] == value) return static_cast<int>(i);
  throw DataError("unknown " + factor_column(f) + " level '" + value + "'");
}

}  // namespace

std::string to_string(Feature f) { return info(f).name; }

Feature parse_feature(std::string_view name) {
  for (const auto& i : kFeatures)
    if (name == i.name) return i.feature;
  throw std::invalid_argument("unknown covariate '" + std::string(name) + "'");
}

std::vector<Feature> parse_feature_list(std::string_view text) {
  std::vector<Feature> out;
  if (text.empty() || text == "none") return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string_view item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    if (!item.empty()) out.push_back(parse_feature(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<Feature> all_features() {
  std::vector<Feature> out;
  for (const auto& i : kFeatures) out.push_back(i.feature);
  return out;
}

std::vector<std::string> feature_columns(const std::vector<Feature>& features) {
  std::vector<std::string> cols;
  for (Feature f : features) {
    const auto& i = info(f);
    if (!i.categorical) {
      cols.emplace_back(i.name);
      continue;
    }
    const auto& levels = factor_levels(i.factor);
    for (std::size_t l = 1; l < levels.size(); ++l) cols.push_back(std::string(i.name) + "=" + levels[l]);
  }
  return cols;
}

int feature_dim(const std::vector<Feature>& features) { return static_cast<int>(feature_columns(features).size()); }

std::vector<double> covariate_row(const PatientRecord& r, const std::vector<Feature>& features, int week) {
  if (week < 0 || week >= r.length()) throw std::out_of_range("week outside the record");
  std::vector<double> row;
  for (Feature f : features) {
    switch (f) {
      case Feature::Treatment: row.push_back(r.treatment[week]); break;
      case Feature::LagPain: row.push_back(latest_observed(r, 0, week)); break;
      case Feature::LagActivity: row.push_back(latest_observed(r, 1, week)); break;
      case Feature::Age: row.push_back(r.profile.age); break;
      case Feature::Height: row.push_back(r.profile.height); break;
      case Feature::Bmi: row.push_back(r.profile.bmi); break;
      case Feature::GeneralHealth: row.push_back(r.profile.general_health); break;
      default: {
        const Factor factor = info(f).factor;
        const int levels = static_cast<int>(factor_levels(factor).size());
        for (int l = 1; l < levels; ++l) row.push_back(r.profile.level(factor) == l ? 1.0 : 0.0);
      }
    }
  }
  return row;
}

SequenceData to_sequence(const PatientRecord& r, const std::vector<Feature>& features) {
  SequenceData s;
  s.length = r.length();
  s.num_margins = r.num_margins;
  s.covariate_dim = feature_dim(features);
  s.observations = r.observations;
  s.covariates.reserve(static_cast<std::size_t>(s.length) * s.covariate_dim);
  for (int t = 0; t < s.length; ++t) {
    const auto row = covariate_row(r, features, t);
    s.covariates.insert(s.covariates.end(), row.begin(), row.end());
  }
  return s;
}

std::vector<SequenceData> to_sequences(const std::vector<PatientRecord>& cohort, const std::vector<Feature>& features) {
  std::vector<SequenceData> out;
  out.reserve(cohort.size());
  for (const auto& r : cohort) out.push_back(to_sequence(r, features));
  return out;
}

std::vector<std::string> patient_ids(const std::vector<PatientRecord>& cohort) {
  std::vector<std::string> ids;
  for (const auto& r : cohort) ids.push_back(r.id);
  return ids;
}

void write_observations_csv(const std::string& path, const std::vector<PatientRecord>& cohort) {
  auto out = open_output(path);
  write_csv_row(out, {"patient_id", "week", "pain", "activity", "treatment", "missing_pain", "missing_activity"});
  for (const auto& r : cohort) {
    if (r.num_margins != 2) throw std::invalid_argument("observation files hold exactly two measures");
    for (int t = 0; t < r.length(); ++t) {
      const int pain = r.obs(t, 0), act = r.obs(t, 1);
      write_csv_row(out, {r.id, std::to_string(t + 1), pain == kMissing ? "" : std::to_string(pain),
                          act == kMissing ? "" : std::to_string(act), std::to_string(r.treatment[t]),
                          pain == kMissing ? "1" : "0", act == kMissing ? "1" : "0"});
    }
  }
}

void write_profiles_csv(const std::string& path, const std::vector<PatientRecord>& cohort) {
  auto out = open_output(path);
  CsvRow header{"patient_id", "age", "height", "bmi", "general_health"};
  for (Factor f : kFactors) header.push_back(factor_column(f));
  write_csv_row(out, header);
  for (const auto& r : cohort) {
    CsvRow row{r.id, format_double(r.profile.age), format_double(r.profile.height), format_double(r.profile.bmi),
               format_double(r.profile.general_health)};
    for (Factor f : kFactors) row.push_back(factor_levels(f).at(r.profile.level(f)));
    write_csv_row(out, row);
  }
}

void write_labels_csv(const std::string& path, const std::vector<PatientRecord>& cohort) {
  auto out = open_output(path);
  write_csv_row(out, {"patient_id", "week", "phase"});
  for (const auto& r : cohort)
    for (std::size_t t = 0; t < r.phase.size(); ++t) write_csv_row(out, {r.id, std::to_string(t + 1), to_string(r.phase[t])});
}

std::vector<PatientRecord> read_cohort(const std::string& observations_path, const std::string& profiles_path,
                                       const std::string& labels_path) {
  const auto rows = read_csv_file(observations_path);
  if (rows.empty()) throw DataError(observations_path + ": missing header row");
  const CsvRow& h = rows.front();
  const std::size_t c_id = column_index(h, "patient_id"), c_week = column_index(h, "week"),
                    c_pain = column_index(h, "pain"), c_act = column_index(h, "activity"),
                    c_treat = column_index(h, "treatment"), c_mp = column_index(h, "missing_pain"),
                    c_ma = column_index(h, "missing_activity");

  std::vector<PatientRecord> cohort;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string at = observations_path + " row " + std::to_string(r + 1) + ": ";
    if (row.size() != h.size()) throw DataError(at + "expected " + std::to_string(h.size()) + " fields");
    try {
      auto [it, fresh] = where.emplace(row[c_id], cohort.size());
      if (fresh) {
        cohort.emplace_back();
        cohort.back().id = row[c_id];
      }
      PatientRecord& rec = cohort[it->second];
      const long long week = parse_int(row[c_week], "week");
      if (week != rec.length() + 1)
        throw DataError("week " + std::to_string(week) + " out of order for patient " + rec.id + " (expected " +
                        std::to_string(rec.length() + 1) + ")");
      const bool mp = parse_flag(row[c_mp], "missing_pain"), ma = parse_flag(row[c_ma], "missing_activity");
      auto value = [&](std::size_t col, bool missing, int hi, const char* what) {
        if (missing) return kMissing;
        const long long v = parse_int(row[col], what);
        if (v < 0 || v > hi)
          throw DataError(std::string(what) + " value " + std::to_string(v) + " outside 0.." + std::to_string(hi));
        return static_cast<int>(v);
      };
      rec.observations.push_back(value(c_pain, mp, 10, "pain"));
      rec.observations.push_back(value(c_act, ma, 7, "activity"));
      rec.treatment.push_back(parse_flag(row[c_treat], "treatment") ? 1 : 0);
    } catch (const DataError& e) {
      throw DataError(at + e.what());
    }
  }
  if (cohort.empty()) throw DataError(observations_path + ": no observations");

  if (!profiles_path.empty()) {
    const auto prow = read_csv_file(profiles_path);
    if (prow.empty()) throw DataError(profiles_path + ": missing header row");
    const CsvRow& ph = prow.front();
    const std::size_t p_id = column_index(ph, "patient_id");
    const std::size_t p_num[4] = {column_index(ph, "age"), column_index(ph, "height"), column_index(ph, "bmi"),
                                  column_index(ph, "general_health")};
    std::size_t p_fac[kNumFactors];
    for (int k = 0; k < kNumFactors; ++k) p_fac[k] = column_index(ph, factor_column(kFactors[k]));
    std::vector<bool> seen(cohort.size(), false);
    for (std::size_t r = 1; r < prow.size(); ++r) {
      const CsvRow& row = prow[r];
      if (row.size() == 1 && row[0].empty()) continue;
      const std::string at = profiles_path + " row " + std::to_string(r + 1) + ": ";
      if (row.size() != ph.size()) throw DataError(at + "expected " + std::to_string(ph.size()) + " fields");
      auto it = where.find(row[p_id]);
      if (it == where.end()) continue;  // profile without observations
      try {
        RiskProfile& prof = cohort[it->second].profile;
        prof.age = parse_double(row[p_num[0]], "age");
        prof.height = parse_double(row[p_num[1]], "height");
        prof.bmi = parse_double(row[p_num[2]], "bmi");
        prof.general_health = parse_double(row[p_num[3]], "general_health");
        for (int k = 0; k < kNumFactors; ++k) prof.levels[k] = level_index(kFactors[k], row[p_fac[k]]);
      } catch (const DataError& e) {
        throw DataError(at + e.what());
      }
      seen[it->second] = true;
    }
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (!seen[i]) throw DataError(profiles_path + ": no profile for patient " + cohort[i].id);
  }

  if (!labels_path.empty()) {
    const auto lrow = read_csv_file(labels_path);
    if (lrow.empty()) throw DataError(labels_path + ": missing header row");
    const CsvRow& lh = lrow.front();
    const std::size_t l_id = column_index(lh, "patient_id"), l_week = column_index(lh, "week"),
                      l_phase = column_index(lh, "phase");
    for (auto& rec : cohort) rec.phase.clear();
    for (std::size_t r = 1; r < lrow.size(); ++r) {
      const CsvRow& row = lrow[r];
      if (row.size() == 1 && row[0].empty()) continue;
      const std::string at = labels_path + " row " + std::to_string(r + 1) + ": ";
      if (row.size() != lh.size()) throw DataError(at + "expected " + std::to_string(lh.size()) + " fields");
      auto it = where.find(row[l_id]);
      if (it == where.end()) throw DataError(at + "label for unknown patient " + row[l_id]);
      PatientRecord& rec = cohort[it->second];
      try {
        const long long week = parse_int(row[l_week], "week");
        if (week != static_cast<long long>(rec.phase.size()) + 1)
          throw DataError("label week " + std::to_string(week) + " out of order for patient " + rec.id);
        rec.phase.push_back(parse_regimen(row[l_phase]));
      } catch (const DataError& e) {
        throw DataError(at + e.what());
      }
    }
    for (const auto& rec : cohort)
      if (static_cast<int>(rec.phase.size()) != rec.length())
        throw DataError(labels_path + ": patient " + rec.id + " has " + std::to_string(rec.phase.size()) +
                        " labels for " + std::to_string(rec.length()) + " weeks");
  }
  return cohort;
}

}  // namespace vdc
