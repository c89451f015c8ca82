#pragma once

#include <Eigen/Dense>
#include <string>

#include "goss/error.hpp"

namespace goss::detail {

/// Largest acceptable condition number of a (diagonally equilibrated)
/// symmetric positive-definite system.
inline constexpr double kMaxCondition = 1e12;

/// Cholesky factorisation with a conditioning guard. The reciprocal
/// condition estimate is taken on D^{-1/2} A D^{-1/2} so that covariate units
/// do not trigger false alarms.
inline Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& a, const char* module,
                                                    const std::string& what) {
  const Eigen::VectorXd d = a.diagonal();
  if ((d.array() <= 0.0).any() || !d.allFinite())
    throw SingularMatrixError(module, what + " has a non-positive diagonal entry");
  const Eigen::VectorXd inv_sqrt = d.array().rsqrt();
  const Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> scaled_llt(scaled);
  if (scaled_llt.info() != Eigen::Success || scaled_llt.rcond() < 1.0 / kMaxCondition)
    throw SingularMatrixError(module, what + " is singular or ill-conditioned (condition estimate above 1e12)");
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularMatrixError(module, what + " is not positive definite");
  return llt;
}

}  // namespace goss::detail
