#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "goss/dataset.hpp"
#include "goss/exec.hpp"
#include "goss/selection.hpp"

namespace goss {

enum class VarianceSource { kKnown, kMomentEstimated };

/// Random-intercept variance sigma_A^2 and error variance sigma_E^2.
struct VarianceComponents {
  double sigma_a2 = 0.0;
  double sigma_e2 = 1.0;
  VarianceSource source = VarianceSource::kKnown;
};

/// D- and A-criteria of the information matrix M = X' V^{-1} X together with
/// the balanced-design bounds
///   |M| <= R n^p / (sigma_E^{2(p-1)} (R sigma_E^2 + n sigma_A^2)),
///   tr(M^{-1}) >= (p sigma_E^2 + (n/R) sigma_A^2) / n,
/// which hold for any subdata whose covariates lie in [-1, 1].
struct InformationSummary {
  double log_det_M = 0.0;
  double trace_Minv = 0.0;
  double log_d_bound = 0.0;
  double d_bound = 0.0;  // exp(log_d_bound); may overflow to inf for large p
  double a_bound = 0.0;
};

struct FitResult {
  Eigen::VectorXd beta;  // intercept first, then slopes
  VarianceComponents varcomps;
  InformationSummary info;
  Eigen::MatrixXd covariance;  // M^{-1}
};

/// Selected rows of one group in original units.
struct GroupData {
  RowMatrix covariates;
  Eigen::VectorXd response;

  Index size() const { return covariates.rows(); }
};

/// Subdata aligned with the dataset's groups; unselected groups are empty.
struct Subdata {
  std::vector<GroupData> groups;
  Index num_covariates = 0;

  Index total_rows() const;
  Index nonempty_groups() const;
  std::vector<Index> group_sizes() const;
  Eigen::MatrixXd design() const;  // pooled [1, Z]
  Eigen::VectorXd response() const;
};

Subdata extract_subdata(const GroupedDataset& ds, const SubsampleSelection& sel);

/// Ordinary least squares via Cholesky of X'X. `x` must already contain the
/// intercept column.
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Method-of-moments variance components from residuals laid out group by
/// group (`group_sizes` gives the lengths; zero-length groups are ignored):
///   U_a = sum_i [sum_j eta^2 - (sum_j eta)^2 / n_i]
///   U_e = n sum eta^2 - (sum eta)^2
///   sigma_E^2 = U_a / n,  sigma_A^2 = max(0, (U_e - n U_a) / (n^2 - sum n_i^2)).
VarianceComponents moment_variance_components(std::span<const double> eta, std::span<const Index> group_sizes);

/// Information matrix M = sum_i X_i' V_i^{-1} X_i and right-hand side
/// X' V^{-1} y, using V_i^{-1} = (I - (1 - gamma_i)/n_i 11') / sigma_E^2 with
/// gamma_i = sigma_E^2 / (sigma_E^2 + n_i sigma_A^2). Per-group terms are
/// reduced in group order.
struct GlsSystem {
  Eigen::MatrixXd information;
  Eigen::VectorXd rhs;
};
GlsSystem gls_system(const Subdata& sub, const VarianceComponents& vc, Exec exec = Exec::kParallel);

FitResult gls_fit(const Subdata& sub, const VarianceComponents& vc, Exec exec = Exec::kParallel);

InformationSummary information_metrics(const Subdata& sub, const VarianceComponents& vc, Exec exec = Exec::kParallel);
/// Bounds only, for a subdata of `n` rows over `groups` groups.
void fill_bounds(InformationSummary& info, Index n, Index groups, Index p, const VarianceComponents& vc);

/// BLUP of each group's random intercept:
///   a_i = sigma_A^2 / (sigma_E^2 + n_i sigma_A^2) * sum_j (y_ij - x_ij' beta).
/// Groups without selected rows get 0.
std::vector<double> blup_random_effects(const Subdata& sub, const Eigen::VectorXd& beta, const VarianceComponents& vc);

struct Prediction {
  std::vector<Eigen::VectorXd> fitted;  // per group
  double mspe = 0.0;
};

/// y_hat = x' beta + a_i over the full data and the mean squared prediction
/// error against the observed responses.
Prediction predict_full(const GroupedDataset& ds, const Eigen::VectorXd& beta, std::span<const double> effects);

/// OLS pilot on the subdata, moment variance components from its residuals
/// (unless `known` is given), then the plug-in GLS fit.
FitResult fit_lmm(const Subdata& sub, const std::optional<VarianceComponents>& known = std::nullopt,
                  Exec exec = Exec::kParallel);

}  // namespace goss
