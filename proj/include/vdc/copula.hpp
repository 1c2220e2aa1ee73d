#ifndef VDC_COPULA_HPP
#define VDC_COPULA_HPP

#include <span>
#include <vector>

#include "vdc/model.hpp"

namespace vdc {

// nu >= 1 (survival Gumbel), nu' in [-1, 1) (AMH), theta > 0 (Clayton);
// `value` is ignored for the independence copula.
struct CopulaParam {
  CopulaFamily family = CopulaFamily::Independence;
  double value = 0.0;

  void validate() const;
};

double copula_cdf(const CopulaParam& param, double u, double v);

// m-variate evaluation. The survival Gumbel uses the survival copula of the
// exchangeable m-dimensional Gumbel; AMH and Clayton use their Archimedean
// generator on all arguments. AMH with nu' < 0 is only a valid copula for
// m = 2.
double copula_cdf(const CopulaParam& param, std::span<const double> u);

// Dense table over the product grid {0..L_1} x ... x {0..L_m}, stored
// row-major with the last margin varying fastest.
struct PmfTable {
  std::vector<int> sizes;
  std::vector<double> values;

  std::size_t index(std::span<const int> y) const;
  double at(std::span<const int> y) const { return values[index(y)]; }
  // Sum over every margin except `margin`.
  std::vector<double> marginal(int margin) const;
};

// Joint pmf of discrete margins coupled by the copula, by inclusion-exclusion
// over the 2^m corners of each cell with F_k(-1) = 0. Each CDF table holds
// F_k(0..L_k), must be nondecreasing, and must end at 1 within 1e-9.
// Rounding negatives down to -1e-12 are clamped to zero (and the table
// renormalized); anything more negative throws.
PmfTable joint_pmf(const CopulaParam& param, const std::vector<std::vector<double>>& marginal_cdfs);

// Same table, but with the upper tails S_k(y) = P(Y_k > y) supplied
// separately so cells where both margins sit deep in their upper tails keep
// their relative accuracy. Only the bivariate survival Gumbel uses them
// (its survival copula is the closed-form Gumbel); other cases fall back to
// the CDF form.
PmfTable joint_pmf(const CopulaParam& param, const std::vector<std::vector<double>>& marginal_cdfs,
                   const std::vector<std::vector<double>>& marginal_survivals);

}  // namespace vdc

#endif  // VDC_COPULA_HPP
