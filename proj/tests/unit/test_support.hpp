#ifndef VDC_TEST_SUPPORT_HPP
#define VDC_TEST_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vdc/forward.hpp"
#include "vdc/model.hpp"

namespace vdc::testing {

inline ModelConfig random_config(std::mt19937_64& rng, int max_states = 4, int max_margins = 3,
                                 int max_covariates = 3) {
  std::uniform_int_distribution<int> states(1, max_states), margins(1, max_margins),
      covs(0, max_covariates), scale(1, 10), fam(0, 3), flag(0, 1);
  ModelConfig c;
  c.num_states = states(rng);
  c.num_margins = margins(rng);
  c.scale_max.resize(c.num_margins);
  for (int& l : c.scale_max) l = scale(rng);
  c.duration_cap = std::uniform_int_distribution<int>(1, 10)(rng);
  c.copula_family = static_cast<CopulaFamily>(fam(rng));
  c.covariate_dim = covs(rng);
  c.use_duration = flag(rng);
  c.use_covariates = flag(rng);
  return c;
}

inline ParameterSet random_params(const ModelConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  ParameterSet p = ParameterSet::defaults(c);
  double total = 0.0;
  for (double& w : p.initial_dist) total += (w = u(rng));
  for (double& w : p.initial_dist) w /= total;
  for (int j = 0; j < c.num_states; ++j) {
    for (int l = 0; l < c.num_states; ++l) {
      if (l == j) continue;
      p.intercept(j, l) = 1.5 * z(rng);
      if (c.use_duration) p.duration_coef(j, l) = 0.4 * z(rng);
      if (c.use_covariates)
        for (double& b : p.covariate_coef(j, l)) b = 0.5 * z(rng);
    }
  }
  double level = 0.0;
  for (int s = 0; s < c.num_states; ++s) {
    level += std::uniform_real_distribution<double>(0.05, 3.0)(rng);
    p.rate(s, 0) = level;
    for (int k = 1; k < c.num_margins; ++k) p.rate(s, k) = std::uniform_real_distribution<double>(0.05, 6.0)(rng);
  }
  for (double& v : p.copula_params) {
    switch (c.copula_family) {
      case CopulaFamily::SurvivalGumbel: v = 1.0 + 2.5 * u(rng); break;
      case CopulaFamily::AliMikhailHaq: v = std::uniform_real_distribution<double>(-0.95, 0.95)(rng); break;
      case CopulaFamily::Clayton: v = 4.0 * u(rng); break;
      case CopulaFamily::Independence: break;
    }
  }
  return p;
}

inline SequenceData random_sequence(const ModelConfig& c, int length, std::mt19937_64& rng,
                                    double missing_rate = 0.0) {
  SequenceData d;
  d.length = length;
  d.num_margins = c.num_margins;
  d.covariate_dim = c.covariate_dim;
  std::bernoulli_distribution miss(missing_rate);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int t = 0; t < length; ++t) {
    for (int k = 0; k < c.num_margins; ++k) {
      const int y = std::uniform_int_distribution<int>(0, c.scale_max[k])(rng);
      d.observations.push_back(miss(rng) ? kMissing : y);
    }
    for (int q = 0; q < c.covariate_dim; ++q) d.covariates.push_back(z(rng));
  }
  return d;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("vdc_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace vdc::testing

#endif  // VDC_TEST_SUPPORT_HPP
