#ifndef VDC_BASELINES_HPP
#define VDC_BASELINES_HPP

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vdc/cohort.hpp"

namespace vdc {

// Symptom-based decision rules, from fewest to most inputs:
//   myopic          current pain, activity and their product
//   myopic_risk     + the nine risk factors (categoricals one-hot)
//   moving_average  + mean of all earlier measurements per measure
//   arma3           + the three previous measurements per measure
// A missing measurement carries the last observed value forward; before
// the first observation it is imputed at the training mean. Earlier
// weeks that do not exist yet are back-filled with the first week.
enum class BaselineKind { Myopic, MyopicRisk, MovingAverage, Arma3 };
inline constexpr BaselineKind kAllBaselines[] = {BaselineKind::Myopic, BaselineKind::MyopicRisk,
                                                 BaselineKind::MovingAverage, BaselineKind::Arma3};

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline(std::string_view name);

std::vector<std::string> baseline_feature_names(BaselineKind kind);
// Features for week `week` (0-based) from weeks 0..week; NaN where nothing
// has been observed.
std::vector<double> baseline_features(BaselineKind kind, const PatientRecord& record, int week);

// Ridge-penalized multinomial logistic regression with the first class as
// reference, fitted by damped Newton iterations. Rows must be fully finite.
class MultinomialLogit {
 public:
  void fit(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, double ridge);
  Eigen::VectorXd probabilities(const Eigen::VectorXd& x) const;
  int predict(const Eigen::VectorXd& x) const;
  const Eigen::MatrixXd& coefficients() const { return coef_; }  // (features + 1) x (classes - 1)
  int iterations() const { return iterations_; }

 private:
  Eigen::MatrixXd coef_;
  int num_classes_ = 0;
  int iterations_ = 0;
};

class BaselineClassifier {
 public:
  BaselineKind kind() const { return kind_; }
  Regimen predict(const PatientRecord& record, int week) const;
  std::vector<Regimen> predict_all(const PatientRecord& record) const;
  const MultinomialLogit& model() const { return model_; }

 private:
  friend BaselineClassifier fit_baseline(BaselineKind, const std::vector<PatientRecord>&, double);
  Eigen::VectorXd standardize(const std::vector<double>& raw) const;

  BaselineKind kind_ = BaselineKind::Myopic;
  Eigen::VectorXd mean_, scale_;
  MultinomialLogit model_;
};

// Trains on every labeled patient-week. Throws DataError when fewer than
// three regimens occur among the labels.
BaselineClassifier fit_baseline(BaselineKind kind, const std::vector<PatientRecord>& training, double ridge = 1e-4);

}  // namespace vdc

#endif  // VDC_BASELINES_HPP
