#include "goss/lmm.hpp"

#include <cmath>
#include <string>

#include "goss/error.hpp"
#include "linalg.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "lmm_estimation";

Eigen::MatrixXd gram(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

void check_varcomps(const VarianceComponents& vc) {
  if (!(vc.sigma_e2 > 0.0) || !std::isfinite(vc.sigma_e2))
    throw NumericalError(kModule, "error variance must be positive, got " + std::to_string(vc.sigma_e2));
  if (!(vc.sigma_a2 >= 0.0) || !std::isfinite(vc.sigma_a2))
    throw NumericalError(kModule, "random-effect variance must be non-negative, got " + std::to_string(vc.sigma_a2));
}

std::string group_diagnostics(const Subdata& sub) {
  std::string out = "group sizes [";
  for (std::size_t i = 0; i < sub.groups.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(sub.groups[i].size());
  }
  return out + "], p = " + std::to_string(sub.num_covariates + 1);
}

}  // namespace

Index Subdata::total_rows() const {
  Index n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

Index Subdata::nonempty_groups() const {
  Index r = 0;
  for (const auto& g : groups) r += g.size() > 0 ? 1 : 0;
  return r;
}

std::vector<Index> Subdata::group_sizes() const {
  std::vector<Index> s;
  s.reserve(groups.size());
  for (const auto& g : groups) s.push_back(g.size());
  return s;
}

Eigen::MatrixXd Subdata::design() const {
  Eigen::MatrixXd x(total_rows(), num_covariates + 1);
  x.col(0).setOnes();
  Index off = 0;
  for (const auto& g : groups) {
    x.block(off, 1, g.size(), num_covariates) = g.covariates;
    off += g.size();
  }
  return x;
}

Eigen::VectorXd Subdata::response() const {
  Eigen::VectorXd y(total_rows());
  Index off = 0;
  for (const auto& g : groups) {
    y.segment(off, g.size()) = g.response;
    off += g.size();
  }
  return y;
}

Subdata extract_subdata(const GroupedDataset& ds, const SubsampleSelection& sel) {
  sel.validate(ds);
  Subdata sub;
  sub.num_covariates = ds.num_covariates();
  sub.groups.resize(static_cast<std::size_t>(ds.num_groups()));
  for (Index i = 0; i < ds.num_groups(); ++i) {
    const auto& rows = sel.rows[static_cast<std::size_t>(i)];
    const auto& src = ds.group(i);
    auto& dst = sub.groups[static_cast<std::size_t>(i)];
    const auto m = static_cast<Index>(rows.size());
    dst.covariates.resize(m, ds.num_covariates());
    dst.response.resize(m);
    for (Index j = 0; j < m; ++j) {
      const Index r = rows[static_cast<std::size_t>(j)];
      dst.covariates.row(j) = src.covariates.row(r);
      dst.response[j] = src.response[r];
    }
  }
  return sub;
}

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError(kModule, "design and response lengths differ");
  if (x.rows() < x.cols())
    throw SingularMatrixError(kModule, "OLS needs at least as many rows as coefficients (" +
                                           std::to_string(x.rows()) + " < " + std::to_string(x.cols()) + ")");
  const auto llt = detail::checked_cholesky(gram(x), kModule, "OLS Gram matrix");
  return llt.solve(x.transpose() * y);
}

VarianceComponents moment_variance_components(std::span<const double> eta, std::span<const Index> group_sizes) {
  Index n = 0, groups = 0, replicated = 0;
  double sum_sq_sizes = 0.0;
  for (Index ni : group_sizes) {
    if (ni < 0) throw DimensionError(kModule, "negative group size");
    n += ni;
    if (ni > 0) ++groups;
    if (ni > 1) ++replicated;
    sum_sq_sizes += static_cast<double>(ni) * static_cast<double>(ni);
  }
  if (n != static_cast<Index>(eta.size()))
    throw DimensionError(kModule, "group sizes sum to " + std::to_string(n) + " but " + std::to_string(eta.size()) +
                                      " residuals were given");
  if (replicated == 0)
    throw InsufficientReplicationError(kModule, "every group has a single observation; sigma_E^2 is not estimable");
  const double nd = static_cast<double>(n);
  if (!(nd * nd > sum_sq_sizes))
    throw InsufficientReplicationError(kModule, "all observations lie in one group; sigma_A^2 is not estimable");
  if (n < groups + 1) throw InsufficientReplicationError(kModule, "need n >= R + 1 observations");

  // Centred sums: identical to the raw U-statistic forms, fewer cancellations.
  double grand = 0.0;
  for (double v : eta) grand += v;
  grand /= nd;
  double u_e = 0.0;
  for (double v : eta) u_e += (v - grand) * (v - grand);
  u_e *= nd;

  double u_a = 0.0;
  std::size_t off = 0;
  for (Index ni : group_sizes) {
    if (ni == 0) continue;
    const auto block = eta.subspan(off, static_cast<std::size_t>(ni));
    double mean = 0.0;
    for (double v : block) mean += v;
    mean /= static_cast<double>(ni);
    for (double v : block) u_a += (v - mean) * (v - mean);
    off += static_cast<std::size_t>(ni);
  }

  VarianceComponents vc;
  vc.source = VarianceSource::kMomentEstimated;
  vc.sigma_e2 = u_a / nd;
  vc.sigma_a2 = std::max(0.0, (u_e - nd * u_a) / (nd * nd - sum_sq_sizes));
  return vc;
}

GlsSystem gls_system(const Subdata& sub, const VarianceComponents& vc, Exec exec) {
  check_varcomps(vc);
  const Index p = sub.num_covariates + 1;
  const auto r = static_cast<Index>(sub.groups.size());
  std::vector<Eigen::MatrixXd> info(static_cast<std::size_t>(r));
  std::vector<Eigen::VectorXd> rhs(static_cast<std::size_t>(r));

#pragma omp parallel for schedule(dynamic) if (is_parallel(exec) && r > 1)
  for (Index i = 0; i < r; ++i) {
    const auto& g = sub.groups[static_cast<std::size_t>(i)];
    const Index ni = g.size();
    auto& m = info[static_cast<std::size_t>(i)];
    auto& b = rhs[static_cast<std::size_t>(i)];
    m = Eigen::MatrixXd::Zero(p, p);
    b = Eigen::VectorXd::Zero(p);
    if (ni == 0) continue;

    const double nd = static_cast<double>(ni);
    const double gamma = vc.sigma_e2 / (vc.sigma_e2 + nd * vc.sigma_a2);
    const double shrink = (1.0 - gamma) / nd;

    // X_i' X_i and X_i' y_i with the implicit intercept column.
    Eigen::VectorXd colsum(p);
    colsum[0] = nd;
    colsum.tail(p - 1) = g.covariates.colwise().sum().transpose();
    m(0, 0) = nd;
    m.block(1, 0, p - 1, 1) = colsum.tail(p - 1);
    m.block(0, 1, 1, p - 1) = colsum.tail(p - 1).transpose();
    m.bottomRightCorner(p - 1, p - 1).selfadjointView<Eigen::Lower>().rankUpdate(g.covariates.transpose());
    m.bottomRightCorner(p - 1, p - 1).triangularView<Eigen::StrictlyUpper>() =
        m.bottomRightCorner(p - 1, p - 1).transpose();
    const double ysum = g.response.sum();
    b[0] = ysum;
    b.tail(p - 1) = g.covariates.transpose() * g.response;

    m.noalias() -= shrink * colsum * colsum.transpose();
    b.noalias() -= (shrink * ysum) * colsum;
    m /= vc.sigma_e2;
    b /= vc.sigma_e2;
  }

  GlsSystem sys{Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p)};
  for (Index i = 0; i < r; ++i) {
    sys.information += info[static_cast<std::size_t>(i)];
    sys.rhs += rhs[static_cast<std::size_t>(i)];
  }
  return sys;
}

void fill_bounds(InformationSummary& info, Index n, Index groups, Index p, const VarianceComponents& vc) {
  const double nd = static_cast<double>(n), rd = static_cast<double>(groups), pd = static_cast<double>(p);
  info.log_d_bound = std::log(rd) + pd * std::log(nd) - (pd - 1.0) * std::log(vc.sigma_e2) -
                     std::log(rd * vc.sigma_e2 + nd * vc.sigma_a2);
  info.d_bound = std::exp(info.log_d_bound);
  info.a_bound = (pd * vc.sigma_e2 + nd / rd * vc.sigma_a2) / nd;
}

namespace {

struct Factored {
  Eigen::LLT<Eigen::MatrixXd> llt;
  InformationSummary info;
  Eigen::MatrixXd covariance;
};

Factored factor(const Subdata& sub, const VarianceComponents& vc, const GlsSystem& sys) {
  const Index p = sub.num_covariates + 1;
  if (sub.total_rows() < p)
    throw SingularMatrixError(kModule, "subdata has fewer rows than coefficients; " + group_diagnostics(sub));
  Eigen::LLT<Eigen::MatrixXd> llt;
  try {
    llt = detail::checked_cholesky(sys.information, kModule, "information matrix");
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError(kModule, std::string(e.what()) + "; " + group_diagnostics(sub));
  }
  Factored f{llt, {}, llt.solve(Eigen::MatrixXd::Identity(p, p))};
  f.info.log_det_M = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  f.info.trace_Minv = f.covariance.trace();
  fill_bounds(f.info, sub.total_rows(), sub.nonempty_groups(), p, vc);
  return f;
}

}  // namespace

FitResult gls_fit(const Subdata& sub, const VarianceComponents& vc, Exec exec) {
  const auto sys = gls_system(sub, vc, exec);
  auto f = factor(sub, vc, sys);
  FitResult fit;
  fit.beta = f.llt.solve(sys.rhs);
  fit.varcomps = vc;
  fit.info = f.info;
  fit.covariance = std::move(f.covariance);
  return fit;
}

InformationSummary information_metrics(const Subdata& sub, const VarianceComponents& vc, Exec exec) {
  return factor(sub, vc, gls_system(sub, vc, exec)).info;
}

std::vector<double> blup_random_effects(const Subdata& sub, const Eigen::VectorXd& beta,
                                        const VarianceComponents& vc) {
  if (beta.size() != sub.num_covariates + 1) throw DimensionError(kModule, "coefficient length does not match subdata");
  std::vector<double> effects(sub.groups.size(), 0.0);
  for (std::size_t i = 0; i < sub.groups.size(); ++i) {
    const auto& g = sub.groups[i];
    if (g.size() == 0) continue;
    const double denom = vc.sigma_e2 + static_cast<double>(g.size()) * vc.sigma_a2;
    if (!(denom > 0.0) || vc.sigma_a2 == 0.0) continue;
    const double resid_sum = (g.response.array() - beta[0] - (g.covariates * beta.tail(beta.size() - 1)).array()).sum();
    effects[i] = vc.sigma_a2 / denom * resid_sum;
  }
  return effects;
}

Prediction predict_full(const GroupedDataset& ds, const Eigen::VectorXd& beta, std::span<const double> effects) {
  if (beta.size() != ds.num_params()) throw DimensionError(kModule, "coefficient length does not match dataset");
  if (static_cast<Index>(effects.size()) != ds.num_groups())
    throw DimensionError(kModule, "one random effect per group is required");
  Prediction pred;
  pred.fitted.reserve(static_cast<std::size_t>(ds.num_groups()));
  double sse = 0.0;
  for (Index i = 0; i < ds.num_groups(); ++i) {
    const auto& g = ds.group(i);
    Eigen::VectorXd yhat = (g.covariates * beta.tail(beta.size() - 1)).array() + beta[0] +
                           effects[static_cast<std::size_t>(i)];
    sse += (g.response - yhat).squaredNorm();
    pred.fitted.push_back(std::move(yhat));
  }
  pred.mspe = sse / static_cast<double>(ds.total_rows());
  return pred;
}

FitResult fit_lmm(const Subdata& sub, const std::optional<VarianceComponents>& known, Exec exec) {
  VarianceComponents vc;
  if (known) {
    vc = *known;
    vc.source = VarianceSource::kKnown;
  } else {
    const Eigen::MatrixXd x = sub.design();
    const Eigen::VectorXd y = sub.response();
    const Eigen::VectorXd pilot = ols_fit(x, y);
    const Eigen::VectorXd resid = y - x * pilot;
    const auto sizes = sub.group_sizes();
    vc = moment_variance_components({resid.data(), static_cast<std::size_t>(resid.size())}, sizes);
  }
  return gls_fit(sub, vc, exec);
}

}  // namespace goss
