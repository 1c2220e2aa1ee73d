#include "vdc/baselines.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vdc/csv.hpp"
#include "vdc/emissions.hpp"

namespace vdc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<Feature> kRiskFeatures{Feature::Age,    Feature::Height,          Feature::Bmi,
                                         Feature::GeneralHealth, Feature::Gender,   Feature::LegPain,
                                         Feature::EpisodeDuration, Feature::PriorEpisodes, Feature::Workload};

const char* const kMeasure[2] = {"pain", "activity"};

// Last observed value of a measure in weeks 0..week.
double carried(const PatientRecord& r, int margin, int week) {
  for (int t = week; t >= 0; --t)
    if (r.obs(t, margin) != kMissing) return r.obs(t, margin);
  return kNaN;
}

// First observed value of a measure in weeks 0..week.
double earliest(const PatientRecord& r, int margin, int week) {
  for (int t = 0; t <= week; ++t)
    if (r.obs(t, margin) != kMissing) return r.obs(t, margin);
  return kNaN;
}

Eigen::VectorXd softmax_with_reference(const Eigen::MatrixXd& coef, const Eigen::VectorXd& x1) {
  const Eigen::Index K = coef.cols() + 1;
  Eigen::VectorXd eta(K);
  eta(0) = 0.0;
  eta.tail(K - 1) = coef.transpose() * x1;
  const double mx = eta.maxCoeff();
  Eigen::VectorXd p = (eta.array() - mx).exp();
  return p / p.sum();
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Myopic: return "myopic";
    case BaselineKind::MyopicRisk: return "myopic_risk";
    case BaselineKind::MovingAverage: return "moving_average";
    case BaselineKind::Arma3: return "arma3";
  }
  return "?";
}

BaselineKind parse_baseline(std::string_view name) {
  for (BaselineKind k : kAllBaselines)
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown baseline '" + std::string(name) + "'");
}

std::vector<std::string> baseline_feature_names(BaselineKind kind) {
  std::vector<std::string> names{"pain", "activity", "pain_x_activity"};
  if (kind == BaselineKind::Myopic) return names;
  for (const auto& c : feature_columns(kRiskFeatures)) names.push_back(c);
  if (kind == BaselineKind::MyopicRisk) return names;
  for (const char* m : kMeasure) names.push_back(std::string("mean_prior_") + m);
  if (kind == BaselineKind::MovingAverage) return names;
  for (const char* m : kMeasure)
    for (int lag = 1; lag <= 3; ++lag) names.push_back(std::string(m) + "_lag" + std::to_string(lag));
  return names;
}

std::vector<double> baseline_features(BaselineKind kind, const PatientRecord& r, int week) {
  if (r.num_margins != 2) throw std::invalid_argument("baselines need pain and activity");
  if (week < 0 || week >= r.length()) throw std::out_of_range("week outside the record");
  const double pain = carried(r, 0, week), activity = carried(r, 1, week);
  std::vector<double> f{pain, activity, pain * activity};
  if (kind == BaselineKind::Myopic) return f;
  for (double v : covariate_row(r, kRiskFeatures, week)) f.push_back(v);
  if (kind == BaselineKind::MyopicRisk) return f;
  for (int k = 0; k < 2; ++k) {
    double sum = 0.0;
    int n = 0;
    for (int t = 0; t < week; ++t)
      if (r.obs(t, k) != kMissing) {
        sum += r.obs(t, k);
        ++n;
      }
    f.push_back(n > 0 ? sum / n : carried(r, k, week));
  }
  if (kind == BaselineKind::MovingAverage) return f;
  for (int k = 0; k < 2; ++k) {
    const double first = earliest(r, k, week);
    for (int lag = 1; lag <= 3; ++lag) {
      const double v = week - lag >= 0 ? carried(r, k, week - lag) : kNaN;
      f.push_back(std::isnan(v) ? first : v);
    }
  }
  return f;
}

void MultinomialLogit::fit(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, double ridge) {
  const Eigen::Index n = x.rows(), d = x.cols() + 1;
  const int K = num_classes;
  if (K < 2) throw std::invalid_argument("need at least two classes");
  if (static_cast<Eigen::Index>(y.size()) != n) throw std::invalid_argument("labels and rows must be aligned");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be nonnegative");
  if (!x.allFinite()) throw std::invalid_argument("feature matrix has non-finite entries");
  for (int c : y)
    if (c < 0 || c >= K) throw std::invalid_argument("label out of range");

  Eigen::MatrixXd x1(n, d);
  x1.col(0).setOnes();
  x1.rightCols(d - 1) = x;
  num_classes_ = K;
  const Eigen::Index P = d * (K - 1);
  coef_ = Eigen::MatrixXd::Zero(d, K - 1);

  auto objective = [&](const Eigen::MatrixXd& B) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd eta(K);
      eta(0) = 0.0;
      eta.tail(K - 1) = B.transpose() * x1.row(i).transpose();
      const double mx = eta.maxCoeff();
      loss -= eta(y[i]) - mx - std::log((eta.array() - mx).exp().sum());
    }
    return loss + 0.5 * ridge * B.bottomRows(d - 1).squaredNorm();
  };

  double current = objective(coef_);
  iterations_ = 0;
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(P);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(P, P);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd xi = x1.row(i).transpose();
      const Eigen::VectorXd p = softmax_with_reference(coef_, xi);
      const Eigen::MatrixXd outer = xi * xi.transpose();
      for (int a = 1; a < K; ++a) {
        grad.segment((a - 1) * d, d) += (p(a) - (y[i] == a ? 1.0 : 0.0)) * xi;
        for (int b = a; b < K; ++b) {
          const double w = p(a) * ((a == b ? 1.0 : 0.0) - p(b));
          hess.block((a - 1) * d, (b - 1) * d, d, d) += w * outer;
        }
      }
    }
    for (int a = 1; a < K; ++a)
      for (int b = a + 1; b < K; ++b)
        hess.block((b - 1) * d, (a - 1) * d, d, d) = hess.block((a - 1) * d, (b - 1) * d, d, d).transpose();
    for (int a = 1; a < K; ++a)
      for (Eigen::Index j = 1; j < d; ++j) {
        const Eigen::Index idx = (a - 1) * d + j;
        grad(idx) += ridge * coef_(j, a - 1);
        hess(idx, idx) += ridge;
      }
    hess.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    const double decrement = grad.dot(step);
    ++iterations_;
    if (!(decrement > 1e-16 * std::max(1.0, current))) break;

    Eigen::MatrixXd trial;
    double t = 1.0, value = current;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      trial = coef_ - t * Eigen::Map<const Eigen::MatrixXd>(step.data(), d, K - 1);
      value = objective(trial);
      if (value <= current - 1e-4 * t * decrement) break;
    }
    if (!(value <= current)) break;
    coef_ = trial;
    current = value;
  }
}

Eigen::VectorXd MultinomialLogit::probabilities(const Eigen::VectorXd& x) const {
  if (num_classes_ == 0) throw std::logic_error("classifier is not fitted");
  if (x.size() + 1 != coef_.rows()) throw std::invalid_argument("feature vector has the wrong length");
  Eigen::VectorXd x1(x.size() + 1);
  x1(0) = 1.0;
  x1.tail(x.size()) = x;
  return softmax_with_reference(coef_, x1);
}

int MultinomialLogit::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd p = probabilities(x);
  int best = 0;
  for (int c = 1; c < p.size(); ++c)
    if (p(c) >= p(best)) best = c;
  return best;
}

Eigen::VectorXd BaselineClassifier::standardize(const std::vector<double>& raw) const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(raw.size()));
  for (Eigen::Index j = 0; j < z.size(); ++j)
    z(j) = std::isnan(raw[j]) ? 0.0 : (raw[j] - mean_(j)) / scale_(j);
  return z;
}

Regimen BaselineClassifier::predict(const PatientRecord& record, int week) const {
  return static_cast<Regimen>(model_.predict(standardize(baseline_features(kind_, record, week))));
}

std::vector<Regimen> BaselineClassifier::predict_all(const PatientRecord& record) const {
  std::vector<Regimen> out;
  out.reserve(record.length());
  for (int t = 0; t < record.length(); ++t) out.push_back(predict(record, t));
  return out;
}

BaselineClassifier fit_baseline(BaselineKind kind, const std::vector<PatientRecord>& training, double ridge) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool present[kNumRegimens] = {false, false, false};
  for (const auto& r : training) {
    if (static_cast<int>(r.phase.size()) != r.length())
      throw DataError("patient " + r.id + " has no labels for every week");
    for (int t = 0; t < r.length(); ++t) {
      rows.push_back(baseline_features(kind, r, t));
      labels.push_back(static_cast<int>(r.phase[t]));
      present[labels.back()] = true;
    }
  }
  if (!(present[0] && present[1] && present[2]))
    throw DataError("baseline training needs all three regimens among the labels");

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(rows.front().size());
  BaselineClassifier clf;
  clf.kind_ = kind;
  clf.mean_ = Eigen::VectorXd::Zero(d);
  clf.scale_ = Eigen::VectorXd::Ones(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double sum = 0.0, sum2 = 0.0;
    long long count = 0;
    for (const auto& row : rows)
      if (!std::isnan(row[j])) {
        sum += row[j];
        sum2 += row[j] * row[j];
        ++count;
      }
    if (count == 0) continue;
    const double mean = sum / count;
    const double var = std::max(0.0, sum2 / count - mean * mean);
    clf.mean_(j) = mean;
    if (var > 1e-12) clf.scale_(j) = std::sqrt(var);
  }
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = clf.standardize(rows[i]).transpose();
  clf.model_.fit(x, labels, kNumRegimens, ridge);
  return clf;
}

}  // namespace vdc
