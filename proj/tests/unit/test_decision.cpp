#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "unit/test_support.hpp"
#include "vdc/baselines.hpp"
#include "vdc/csv.hpp"
#include "vdc/decision.hpp"
#include "vdc/simulate.hpp"

using namespace vdc;

namespace {

constexpr Regimen S = Regimen::Stable, U = Regimen::Unstable, A = Regimen::Acute;

std::vector<Regimen> repeat(Regimen r, int n) { return std::vector<Regimen>(n, r); }

template <typename T>
void append(std::vector<T>& a, const std::vector<T>& b) {
  a.insert(a.end(), b.begin(), b.end());
}

CohortSpec three_state_spec() {
  CohortSpec spec;
  spec.config.num_states = 3;
  spec.config.duration_cap = 20;
  spec.params = ParameterSet::defaults(spec.config);
  const double pain[3] = {1.0, 4.0, 7.5}, act[3] = {0.5, 2.5, 5.0};
  for (int s = 0; s < 3; ++s) {
    spec.params.rate(s, 0) = pain[s];
    spec.params.rate(s, 1) = act[s];
    for (int l = 0; l < 3; ++l)
      if (l != s) spec.params.intercept(s, l) = -2.5;
  }
  spec.params.copula_params = {2.0, 2.0, 2.0};
  spec.num_patients = 40;
  spec.horizon = 30;
  return spec;
}

}  // namespace

TEST_CASE("regimen map from label frequencies") {
  std::vector<int> states;
  std::vector<Regimen> labels;
  auto add = [&](int s, Regimen r, int n) {
    for (int i = 0; i < n; ++i) {
      states.push_back(s);
      labels.push_back(r);
    }
  };
  add(0, S, 30);
  add(1, U, 10);
  add(2, A, 80);
  add(2, U, 15);
  add(2, S, 5);
  const RegimenMap map = fit_regimen_map(states, labels, 3);
  CHECK(map(2) == A);
  CHECK(map(0) == S);
  CHECK(map.frequencies(2)[2] == doctest::Approx(0.8));
  const auto f = map.frequencies(2);
  CHECK(f[0] + f[1] + f[2] == doctest::Approx(1.0));

  SUBCASE("ties go to the more intensive regimen") {
    const std::vector<int> st{0, 0, 0, 0, 1};
    const std::vector<Regimen> lb{U, U, A, A, S};
    CHECK(fit_regimen_map(st, lb, 2)(0) == A);
    const std::vector<int> st2{0, 0};
    const std::vector<Regimen> lb2{S, U};
    CHECK(fit_regimen_map(st2, lb2, 1)(0) == U);
  }
  SUBCASE("unvisited states are named") {
    const std::vector<int> st{0, 2};
    const std::vector<Regimen> lb{S, A};
    CHECK_THROWS_WITH_AS(fit_regimen_map(st, lb, 4), "latent state(s) 1, 3 never visited in the training data",
                         DataError);
  }
  SUBCASE("json round trip") {
    const RegimenMap back = regimen_map_from_json(nlohmann::json::parse(to_json(map).dump()));
    CHECK(back.labels == map.labels);
    CHECK(back.counts == map.counts);
  }
}

TEST_CASE("online recommendations") {
  CohortSpec spec = three_state_spec();
  RegimenMap identity;
  identity.labels = {S, U, A};
  identity.counts = {{{1, 0, 0}}, {{0, 1, 0}}, {{0, 0, 1}}};

  SUBCASE("dominant initial state at week one") {
    spec.params.initial_dist = {0.98, 0.01, 0.01};
    const Recommender rec(spec.config, spec.params, identity);
    SequenceData d;
    d.length = 1;
    d.num_margins = 2;
    d.observations = {kMissing, kMissing};
    CHECK(rec.recommend(d, 1) == S);
  }
  SUBCASE("prefix property and vote mode") {
    const auto cohort = simulate_cohort(spec, 77);
    const auto seqs = to_sequences(cohort, {});
    const Recommender rec(spec.config, spec.params, identity);
    std::vector<ParameterSet> draws(3, spec.params);
    const Recommender vote(spec.config, draws, identity);
    CHECK(vote.mode() == DecodeMode::DrawVote);
    for (int i = 0; i < 10; ++i) {
      const auto all = rec.recommend_all(seqs[i]);
      CHECK(vote.recommend_all(seqs[i]) == all);
      for (int t = 1; t <= seqs[i].length; t += 7) CHECK(rec.recommend(seqs[i], t) == all[t - 1]);
    }
    const auto by_cohort = rec.recommend_cohort(seqs, 3);
    CHECK(by_cohort[5] == rec.recommend_all(seqs[5]));

    // Filtering recovers most of the latent phases on well separated states.
    long long agree = 0, total = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const auto recs = rec.recommend_all(seqs[i]);
      for (int t = 0; t < cohort[i].length(); ++t) agree += recs[t] == cohort[i].phase[t], ++total;
    }
    CHECK(agree > 0.8 * total);
  }
  SUBCASE("map must match the state count") {
    RegimenMap two = identity;
    two.labels.pop_back();
    two.counts.pop_back();
    CHECK_THROWS_AS(Recommender(spec.config, spec.params, two), std::invalid_argument);
  }
}

TEST_CASE("evaluation metrics") {
  SUBCASE("perfect predictions") {
    std::vector<Regimen> t{S, S, U, A, A, U, S};
    const auto r = evaluate(t, t);
    CHECK(r.balanced_accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.cost_total == 0.0);
    CHECK(r.qaly_improvement == 1.0);
    for (const auto& c : r.classes) CHECK(c.balanced_accuracy == 1.0);
  }
  SUBCASE("one under-treated week") {
    const std::vector<Regimen> p{S}, t{A};
    const auto r = evaluate(p, t);
    CHECK(r.cost_under == doctest::Approx(4.9258).epsilon(1e-4));
    CHECK(r.cost_under == (464.71 - 208.57) / 52.0);
    CHECK(r.cost_over == 0.0);
    CHECK(r.cost_total == r.cost_under);
    CHECK(r.cost_total_per_year == doctest::Approx(464.71 - 208.57));
    CHECK(r.qaly_improvement == 0.0);
  }
  SUBCASE("balanced accuracy is the mean recall") {
    // recalls 1.0, 0.5, 0.75
    std::vector<Regimen> truth, pred;
    append(truth, repeat(S, 4));
    append(pred, repeat(S, 4));
    append(truth, repeat(U, 4));
    append(pred, {U, U, A, S});
    append(truth, repeat(A, 4));
    append(pred, {A, A, A, U});
    const auto r = evaluate(pred, truth);
    CHECK(r.classes[0].recall == 1.0);
    CHECK(r.classes[1].recall == 0.5);
    CHECK(r.classes[2].recall == 0.75);
    CHECK(r.balanced_accuracy == doctest::Approx(0.75).epsilon(1e-15));
    // one-vs-rest for stable: recall 1, specificity 7/8
    CHECK(r.classes[0].balanced_accuracy == doctest::Approx((1.0 + 7.0 / 8.0) / 2));
    // F1 stable: tp 4, fp 1, fn 0
    CHECK(r.classes[0].f1 == doctest::Approx(8.0 / 9.0));
    long long cells = 0;
    for (const auto& row : r.confusion)
      for (long long c : row) cells += c;
    CHECK(cells == 12);
    CHECK(r.patient_weeks == 12);
  }
  SUBCASE("cost split and qaly on random streams") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> label(0, 2);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<Regimen> p(500), t(500);
      double naive = 0.0, naive_q = 0.0, floor = 0.0;
      const CostModel cm;
      for (int i = 0; i < 500; ++i) {
        p[i] = static_cast<Regimen>(label(rng));
        t[i] = static_cast<Regimen>(label(rng));
        naive += std::abs(cm.annual_cost[int(p[i])] - cm.annual_cost[int(t[i])]) / 52.0;
        const double dw = t[i] == A ? 0.370 : 0.040;
        naive_q += p[i] == t[i] ? 1.0 : 1.0 - dw;
        floor += 1.0 - dw;
      }
      const auto r = evaluate(p, t);
      CHECK(r.cost_under + r.cost_over == r.cost_total);
      CHECK(r.cost_under_per_year + r.cost_over_per_year == r.cost_total_per_year);
      CHECK(r.cost_total == doctest::Approx(naive).epsilon(1e-12));
      CHECK(r.qaly_improvement == doctest::Approx((naive_q - floor) / (500.0 - floor)).epsilon(1e-12));
    }
  }
  SUBCASE("balanced accuracy ignores class-preserving subsampling") {
    std::vector<Regimen> truth, pred;
    for (int k = 0; k < 10; ++k) {
      append(truth, {S, S, U, U, A, A, A, A});
      append(pred, {S, U, U, A, A, A, A, S});
    }
    std::vector<Regimen> t2, p2;
    for (int k = 0; k < 3; ++k) {
      append(t2, {S, S, U, U, A, A, A, A});
      append(p2, {S, U, U, A, A, A, A, S});
    }
    append(t2, {U, U});
    append(p2, {U, A});
    CHECK(evaluate(pred, truth).balanced_accuracy == doctest::Approx(evaluate(p2, t2).balanced_accuracy).epsilon(1e-15));
  }
  SUBCASE("absent classes are skipped") {
    const std::vector<Regimen> t{S, S, A}, p{S, S, A};
    const auto r = evaluate(p, t);
    CHECK(std::isnan(r.classes[1].recall));
    CHECK(r.balanced_accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);
  }
  SUBCASE("errors") {
    const std::vector<Regimen> a{S}, b{S, S};
    CHECK_THROWS_AS(evaluate(a, b), std::invalid_argument);
    const std::vector<Regimen> bad{static_cast<Regimen>(5)};
    CHECK_THROWS_AS(evaluate(bad, a), DataError);
    CostModel cm;
    cm.annual_cost = {300, 200, 400};
    CHECK_THROWS_AS(evaluate(a, a, cm), std::invalid_argument);
  }
}

TEST_CASE("report serialization") {
  const std::vector<Regimen> t{S, U, A, A}, p{S, A, A, U};
  const auto r = evaluate(p, t, {}, "vdc-hmmx");
  const auto j = to_json(r);
  CHECK(j.at("model") == "vdc-hmmx");
  CHECK(j.at("confusion_true_by_predicted")[1][2] == 1);
  CHECK(j.at("cost_usd").at("total").get<double>() == r.cost_total);
  std::ostringstream csv;
  write_report_csv(csv, {r, evaluate(t, t, {}, "oracle")});
  std::istringstream in(csv.str());
  const auto rows = read_csv(in);
  CHECK(rows.front() == CsvRow{"model", "metric", "value"});
  int oracle_ba = 0;
  for (const auto& row : rows)
    if (row[0] == "oracle" && row[1] == "balanced_accuracy") oracle_ba = std::stoi(row[2]);
  CHECK(oracle_ba == 1);
}

TEST_CASE("baseline features") {
  PatientRecord r;
  r.id = "x";
  r.observations = {2, 1, 4, kMissing, 6, 3, 8, 5};
  r.treatment = {0, 0, 0, 0};
  r.profile.age = 50;
  CHECK(baseline_features(BaselineKind::Myopic, r, 0) == std::vector<double>{2, 1, 2});
  // activity missing at week 1: carried forward
  CHECK(baseline_features(BaselineKind::Myopic, r, 1) == std::vector<double>{4, 1, 4});
  const auto risk = baseline_features(BaselineKind::MyopicRisk, r, 2);
  CHECK(risk.size() == baseline_feature_names(BaselineKind::MyopicRisk).size());
  CHECK(risk[3] == 50);

  const auto ma0 = baseline_features(BaselineKind::MovingAverage, r, 0);
  const auto ma2 = baseline_features(BaselineKind::MovingAverage, r, 2);
  const std::size_t m = ma0.size() - 2;
  CHECK(ma0[m] == 2);  // first week: the current value
  CHECK(ma0[m + 1] == 1);
  CHECK(ma2[m] == 3);  // (2 + 4) / 2
  CHECK(ma2[m + 1] == 1);

  const auto ar = baseline_features(BaselineKind::Arma3, r, 1);
  CHECK(ar.size() == baseline_feature_names(BaselineKind::Arma3).size());
  const std::size_t a = ar.size() - 6;
  // pain lags at week 1: 2, then back-filled with the first week
  CHECK(std::vector<double>(ar.begin() + a, ar.begin() + a + 3) == std::vector<double>{2, 2, 2});
  const auto ar3 = baseline_features(BaselineKind::Arma3, r, 3);
  CHECK(std::vector<double>(ar3.begin() + a, ar3.end()) == std::vector<double>{6, 4, 2, 3, 1, 1});

  PatientRecord blank = r;
  blank.observations.assign(8, kMissing);
  CHECK(std::isnan(baseline_features(BaselineKind::Myopic, blank, 2)[0]));
  CHECK(parse_baseline("arma3") == BaselineKind::Arma3);
  CHECK_THROWS_AS(parse_baseline("lstm"), std::invalid_argument);
}

TEST_CASE("baseline classifiers") {
  // Labels determined by a pain threshold are separable for the myopic rule.
  std::vector<PatientRecord> train;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    PatientRecord r;
    r.id = "T" + std::to_string(i);
    for (int t = 0; t < 20; ++t) {
      const int pain = std::uniform_int_distribution<int>(0, 10)(rng);
      r.observations.push_back(pain);
      r.observations.push_back(std::uniform_int_distribution<int>(0, 7)(rng));
      r.treatment.push_back(0);
      r.phase.push_back(pain <= 3 ? S : pain <= 6 ? U : A);
    }
    train.push_back(r);
  }
  for (BaselineKind kind : kAllBaselines) {
    const auto clf = fit_baseline(kind, train);
    long long correct = 0, total = 0;
    for (const auto& r : train) {
      const auto pred = clf.predict_all(r);
      for (int t = 0; t < r.length(); ++t) correct += pred[t] == r.phase[t], ++total;
    }
    CHECK_MESSAGE(correct == total, to_string(kind) << ": " << correct << "/" << total);
  }

  SUBCASE("fewer than three regimens") {
    auto two = train;
    for (auto& r : two)
      for (auto& p : r.phase)
        if (p == U) p = S;
    CHECK_THROWS_AS(fit_baseline(BaselineKind::Myopic, two), DataError);
  }
}

TEST_CASE("multinomial logit reaches a stationary point") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0, 1);
  const int n = 400, d = 3, K = 3;
  Eigen::MatrixXd x(n, d);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = z(rng);
    const double e1 = 0.5 + x(i, 0) - x(i, 1), e2 = -0.3 + 0.8 * x(i, 2);
    const double u = std::uniform_real_distribution<double>(0, 1)(rng);
    const double p0 = 1 / (1 + std::exp(e1) + std::exp(e2)), p1 = std::exp(e1) * p0;
    y[i] = u < p0 ? 0 : u < p0 + p1 ? 1 : 2;
  }
  MultinomialLogit m;
  const double ridge = 0.5;
  m.fit(x, y, K, ridge);
  // Finite-difference gradient of the penalized objective at the fit.
  auto objective = [&](const Eigen::MatrixXd& B) {
    double loss = 0;
    for (int i = 0; i < n; ++i) {
      double eta[3] = {0, B(0, 0), B(0, 1)};
      for (int j = 0; j < d; ++j) eta[1] += B(j + 1, 0) * x(i, j), eta[2] += B(j + 1, 1) * x(i, j);
      loss -= eta[y[i]] - std::log(std::exp(eta[0]) + std::exp(eta[1]) + std::exp(eta[2]));
    }
    return loss + 0.5 * ridge * B.bottomRows(d).squaredNorm();
  };
  const Eigen::MatrixXd B = m.coefficients();
  for (int r = 0; r <= d; ++r)
    for (int c = 0; c < K - 1; ++c) {
      Eigen::MatrixXd hi = B, lo = B;
      hi(r, c) += 1e-5;
      lo(r, c) -= 1e-5;
      CHECK(std::abs((objective(hi) - objective(lo)) / 2e-5) < 1e-5);
    }
  CHECK(B(1, 0) > 0.5);
  CHECK(B(2, 0) < -0.5);
  CHECK(m.probabilities(Eigen::VectorXd::Zero(d)).sum() == doctest::Approx(1.0));
}
