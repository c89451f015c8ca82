#include "reference/reference.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "goss/error.hpp"
#include "goss/oss.hpp"

namespace goss::reference {

namespace {

double pair_loss(const RowMatrix& z, Index a, Index b) {
  const Index q = z.cols();
  double na = 0.0, nb = 0.0;
  int agree = 0;
  for (Index k = 0; k < q; ++k) {
    na += z(a, k) * z(a, k);
    nb += z(b, k) * z(b, k);
    const bool sa = z(a, k) >= 0.0;
    const bool sb = z(b, k) >= 0.0;
    if (sa == sb) ++agree;
  }
  const double t = static_cast<double>(q) - na / 2.0 - nb / 2.0 + agree;
  return t * t;
}

}  // namespace

std::vector<Index> oss_select(const RowMatrix& scaled, Index target, bool eliminate) {
  const Index rows = scaled.rows();
  if (target > rows) throw InfeasibleError("reference", "target exceeds block size");
  std::vector<Index> selected;
  if (target <= 0) return selected;

  Index first = 0;
  double best_norm = -1.0;
  for (Index r = 0; r < rows; ++r) {
    const double norm = scaled.row(r).squaredNorm();
    if (norm > best_norm) {
      best_norm = norm;
      first = r;
    }
  }
  selected.push_back(first);
  std::vector<Index> alive;
  for (Index r = 0; r < rows; ++r)
    if (r != first) alive.push_back(r);

  while (static_cast<Index>(selected.size()) < target) {
    const Index j = static_cast<Index>(selected.size());
    std::vector<double> loss(alive.size(), 0.0);
    for (std::size_t a = 0; a < alive.size(); ++a)
      for (Index s : selected) loss[a] += pair_loss(scaled, s, alive[a]);

    std::size_t pick = 0;
    for (std::size_t a = 1; a < alive.size(); ++a)
      if (loss[a] < loss[pick] || (loss[a] == loss[pick] && alive[a] < alive[pick])) pick = a;
    selected.push_back(alive[pick]);

    std::vector<std::pair<double, Index>> rest;
    for (std::size_t a = 0; a < alive.size(); ++a)
      if (a != pick) rest.emplace_back(loss[a], alive[a]);
    if (eliminate && static_cast<Index>(selected.size()) < target) {
      std::sort(rest.begin(), rest.end());
      const auto quota = static_cast<std::size_t>(elimination_quota(rows, target, j));
      if (rest.size() > quota) rest.resize(quota);
    }
    alive.clear();
    for (const auto& [l, r] : rest) alive.push_back(r);
    std::sort(alive.begin(), alive.end());
  }
  return selected;
}

std::pair<std::vector<Index>, double> best_subset(const RowMatrix& scaled, Index n) {
  const Index rows = scaled.rows();
  if (n < 1 || n > rows) throw InfeasibleError("reference", "subset size out of range");
  std::vector<char> mask(static_cast<std::size_t>(rows), 0);
  std::fill(mask.begin(), mask.begin() + n, 1);
  std::vector<Index> best;
  double best_value = std::numeric_limits<double>::infinity();
  do {
    std::vector<Index> subset;
    for (Index r = 0; r < rows; ++r)
      if (mask[static_cast<std::size_t>(r)]) subset.push_back(r);
    double value = 0.0;
    for (std::size_t a = 0; a < subset.size(); ++a)
      for (std::size_t b = a + 1; b < subset.size(); ++b) value += pair_loss(scaled, subset[a], subset[b]);
    if (value < best_value) {
      best_value = value;
      best = std::move(subset);
    }
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return {best, best_value};
}

Eigen::VectorXd leverage(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
  return q.rowwise().squaredNorm();
}

VarianceComponents moment_variance_components(std::span<const double> eta, std::span<const Index> group_sizes) {
  double u_a = 0.0;
  double sum_sq_sizes = 0.0;
  std::size_t offset = 0;
  for (Index size : group_sizes) {
    if (size == 0) continue;
    double s = 0.0;
    for (Index j = 0; j < size; ++j)
      for (Index k = 0; k < size; ++k) {
        const double d = eta[offset + static_cast<std::size_t>(j)] - eta[offset + static_cast<std::size_t>(k)];
        s += d * d;
      }
    u_a += s / (2.0 * static_cast<double>(size));
    sum_sq_sizes += static_cast<double>(size) * static_cast<double>(size);
    offset += static_cast<std::size_t>(size);
  }
  double u_e = 0.0;
  for (std::size_t j = 0; j < offset; ++j)
    for (std::size_t k = j + 1; k < offset; ++k) u_e += (eta[j] - eta[k]) * (eta[j] - eta[k]);

  const double n = static_cast<double>(offset);
  VarianceComponents vc;
  vc.source = VarianceSource::kMomentEstimated;
  vc.sigma_e2 = u_a / n;
  vc.sigma_a2 = std::max(0.0, (u_e - n * u_a) / (n * n - sum_sq_sizes));
  return vc;
}

DenseGls dense_gls(const Subdata& sub, const VarianceComponents& vc) {
  const Eigen::MatrixXd x = sub.design();
  const Eigen::VectorXd y = sub.response();
  const Index n = x.rows();
  Eigen::MatrixXd v = vc.sigma_e2 * Eigen::MatrixXd::Identity(n, n);
  Index offset = 0;
  for (const auto& g : sub.groups) {
    v.block(offset, offset, g.size(), g.size()).array() += vc.sigma_a2;
    offset += g.size();
  }
  const Eigen::MatrixXd v_inv = v.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
  DenseGls out;
  out.information = x.transpose() * v_inv * x;
  out.beta = out.information.ldlt().solve(x.transpose() * v_inv * y);
  return out;
}

}  // namespace goss::reference
