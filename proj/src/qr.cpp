#include "vdc/qr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vdc {

QrResult qr_reparametrize(const Eigen::MatrixXd& covariates, double column_scale) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = covariates.cols();
  if (n < p) throw std::invalid_argument("covariate matrix has fewer rows than columns");
  if (!(column_scale > 0.0)) throw std::invalid_argument("column_scale must be positive");

  const Eigen::RowVectorXd mean = covariates.colwise().mean();
  const Eigen::MatrixXd centered = covariates.rowwise() - mean;

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(centered);
  Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);

  const double col_norm_max = p > 0 ? centered.colwise().norm().maxCoeff() : 0.0;
  const double tol = std::max(1e-10 * col_norm_max, 1e-300) * std::sqrt(static_cast<double>(n));
  for (Eigen::Index k = 0; k < p; ++k) {
    if (std::abs(r(k, k)) <= tol) {
      throw std::invalid_argument("covariate column " + std::to_string(k) +
                                  " is constant or collinear with earlier columns");
    }
    if (r(k, k) < 0.0) {
      r.row(k) *= -1.0;
      q.col(k) *= -1.0;
    }
  }
  q *= column_scale;
  r /= column_scale;

  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));

  QrResult out;
  out.transformed = std::move(q);
  out.basis.center.assign(mean.data(), mean.data() + p);
  out.basis.r.resize(p * p);
  out.basis.r_inverse.resize(p * p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      out.basis.r[i * p + j] = j >= i ? r(i, j) : 0.0;
      out.basis.r_inverse[i * p + j] = j >= i ? r_inv(i, j) : 0.0;
    }
  }
  return out;
}

}  // namespace vdc
