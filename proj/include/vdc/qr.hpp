#ifndef VDC_QR_HPP
#define VDC_QR_HPP

#include <Eigen/Dense>

#include "vdc/model.hpp"

namespace vdc {

struct QrResult {
  Eigen::MatrixXd transformed;  // centered covariates times R^{-1}
  CovariateBasis basis;
};

// Centers the stacked (N*T x p) covariate matrix column-wise and takes a
// thin QR factorization with a positive R diagonal. With column_scale = 1
// the transformed columns are orthonormal; column_scale = sqrt(n - 1)
// gives columns of unit sample variance. In both cases
// (x - center) . beta == transformed . (R beta).
//
// Throws std::invalid_argument naming the first column that is constant or
// collinear with the preceding ones.
QrResult qr_reparametrize(const Eigen::MatrixXd& covariates, double column_scale = 1.0);

}  // namespace vdc

#endif  // VDC_QR_HPP
