#pragma once

// Straightforward serial versions of the library kernels. They trade speed
// for obviousness and serve as oracles in tests and as the baseline in the
// benchmark.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "goss/dataset.hpp"
#include "goss/lmm.hpp"

namespace goss::reference {

/// Sequential selector recomputing every candidate's loss from scratch with
/// per-coordinate sign comparisons. Same pick and pruning rules as OssSelector.
std::vector<Index> oss_select(const RowMatrix& scaled, Index target, bool eliminate);

/// Exhaustive minimiser of the discrepancy over all subsets of size `n`.
/// Returns the subset (ascending row indices) and its discrepancy.
std::pair<std::vector<Index>, double> best_subset(const RowMatrix& scaled, Index n);

/// Diagonal of X (X'X)^{-1} X' through a dense QR of X.
Eigen::VectorXd leverage(const Eigen::MatrixXd& x);

/// Pairwise-difference forms of the moment statistics:
///   U_a = sum_i 1/(2 n_i) sum_{j,k} (eta_ij - eta_ik)^2,  U_e = 1/2 sum_{all pairs} (eta - eta')^2.
VarianceComponents moment_variance_components(std::span<const double> eta, std::span<const Index> group_sizes);

/// Information matrix and GLS estimate built from the explicit n x n
/// covariance V = sigma_A^2 Z Z' + sigma_E^2 I.
struct DenseGls {
  Eigen::MatrixXd information;
  Eigen::VectorXd beta;
};
DenseGls dense_gls(const Subdata& sub, const VarianceComponents& vc);

}  // namespace goss::reference
