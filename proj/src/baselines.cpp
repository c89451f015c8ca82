#include "goss/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "goss/error.hpp"
#include "linalg.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "baselines";

std::vector<Index> uniform_rows(Index population, Index n, std::mt19937_64& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(population));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, population - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Weighted sampling without replacement via exponential keys log(u)/w: the n
// largest keys form a draw with inclusion order proportional to the weights.
std::vector<Index> weighted_rows(const Eigen::VectorXd& weights, Index n, std::mt19937_64& rng) {
  const Index population = weights.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> key(static_cast<std::size_t>(population));
  for (Index i = 0; i < population; ++i) {
    double u = unit(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    key[static_cast<std::size_t>(i)] = std::log(u) / weights[i];
  }
  std::vector<Index> idx(static_cast<std::size_t>(population));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto cmp = [&](Index a, Index b) {
    const double ka = key[static_cast<std::size_t>(a)], kb = key[static_cast<std::size_t>(b)];
    return ka > kb || (ka == kb && a < b);
  };
  if (n < population) std::nth_element(idx.begin(), idx.begin() + n, idx.end(), cmp);
  idx.resize(static_cast<std::size_t>(n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Eigen::MatrixXd with_intercept(const RowMatrix& z) {
  Eigen::MatrixXd x(z.rows(), z.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(z.cols()) = z;
  return x;
}

void check_total(const GroupedDataset& ds, Index n) {
  if (n < 1) throw InfeasibleError(kModule, "subdata size must be at least 1");
  if (n > ds.total_rows())
    throw InfeasibleError(kModule, "subdata size " + std::to_string(n) + " exceeds full data size " +
                                       std::to_string(ds.total_rows()));
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kUnif: return "unif";
    case Method::kGunif: return "gunif";
    case Method::kLev: return "lev";
    case Method::kGlev: return "glev";
    case Method::kIboss: return "iboss";
    case Method::kGiboss: return "giboss";
    case Method::kOss: return "oss";
    case Method::kGoss: return "goss";
    case Method::kFull: return "full";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kUnif, Method::kGunif, Method::kLev, Method::kGlev, Method::kIboss, Method::kGiboss,
                   Method::kOss, Method::kGoss, Method::kFull}) {
    if (to_string(m) == name) return m;
  }
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower != name) return parse_method(lower);
  throw DataError(kModule, "unknown method '" + std::string(name) + "'");
}

bool is_grouped(Method m) {
  return m == Method::kGunif || m == Method::kGlev || m == Method::kGiboss || m == Method::kGoss;
}

bool is_randomized(Method m) {
  return m == Method::kUnif || m == Method::kGunif || m == Method::kLev || m == Method::kGlev;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(a ^ splitmix(b));
}

SubsampleSelection unif_select(const GroupedDataset& ds, Index n, std::uint64_t seed) {
  check_total(ds, n);
  std::mt19937_64 rng(seed);
  const auto rows = uniform_rows(ds.total_rows(), n, rng);
  return from_pooled_rows(ds, rows);
}

SubsampleSelection gunif_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec) {
  const auto sizes = allocate_sizes(n, ds.group_sizes());
  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(ds.num_groups()));
#pragma omp parallel for schedule(dynamic) if (is_parallel(exec))
  for (Index i = 0; i < ds.num_groups(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    sel.rows[static_cast<std::size_t>(i)] = uniform_rows(ds.group(i).size(), sizes[static_cast<std::size_t>(i)], rng);
  }
  return sel;
}

Eigen::VectorXd leverage_scores(const Eigen::MatrixXd& x, Exec exec) {
  if (x.rows() < x.cols())
    throw SingularMatrixError(kModule, "design has fewer rows (" + std::to_string(x.rows()) + ") than columns (" +
                                           std::to_string(x.cols()) + ")");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const auto llt = detail::checked_cholesky(gram, kModule, "leverage Gram matrix");

  const Index rows = x.rows();
  constexpr Index kChunk = 2048;
  const Index chunks = (rows + kChunk - 1) / kChunk;
  Eigen::VectorXd h(rows);
#pragma omp parallel for schedule(static) if (is_parallel(exec) && chunks > 1)
  for (Index c = 0; c < chunks; ++c) {
    const Index start = c * kChunk;
    const Index len = std::min(kChunk, rows - start);
    const Eigen::MatrixXd w = llt.matrixL().solve(x.middleRows(start, len).transpose());
    h.segment(start, len) = w.colwise().squaredNorm().transpose();
  }
  return h;
}

SubsampleSelection lev_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec) {
  check_total(ds, n);
  const Eigen::VectorXd h = leverage_scores(with_intercept(ds.pooled_covariates()), exec);
  std::mt19937_64 rng(seed);
  const auto rows = weighted_rows(h, n, rng);
  return from_pooled_rows(ds, rows);
}

SubsampleSelection glev_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec) {
  const auto sizes = allocate_sizes(n, ds.group_sizes());
  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(ds.num_groups()));
  const Index r = ds.num_groups();
  // Errors inside the parallel region are captured and rethrown afterwards.
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(r));
#pragma omp parallel for schedule(dynamic) if (is_parallel(exec))
  for (Index i = 0; i < r; ++i) {
    const Index ni = sizes[static_cast<std::size_t>(i)];
    auto& out = sel.rows[static_cast<std::size_t>(i)];
    try {
      if (ni == ds.group(i).size()) {
        out.resize(static_cast<std::size_t>(ni));
        std::iota(out.begin(), out.end(), Index{0});
      } else if (ni > 0) {
        const Eigen::VectorXd h = leverage_scores(with_intercept(ds.group(i).covariates), Exec::kSerial);
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        out = weighted_rows(h, ni, rng);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return sel;
}

std::vector<Index> iboss_rows(const RowMatrix& z, Index n) {
  const Index rows = z.rows();
  const Index q = z.cols();
  if (n < 0 || n > rows)
    throw InfeasibleError(kModule, "cannot take " + std::to_string(n) + " rows from " + std::to_string(rows));
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  if (n == 0) return chosen;
  const Index per_side = (n + 2 * q - 1) / (2 * q);
  std::vector<char> taken(static_cast<std::size_t>(rows), 0);
  std::vector<Index> remaining;
  remaining.reserve(static_cast<std::size_t>(rows));

  auto take = [&](Index k, Index count, bool largest) {
    if (count <= 0) return;
    remaining.clear();
    for (Index r = 0; r < rows; ++r)
      if (!taken[static_cast<std::size_t>(r)]) remaining.push_back(r);
    count = std::min<Index>(count, static_cast<Index>(remaining.size()));
    auto cmp = [&](Index a, Index b) {
      const double va = z(a, k), vb = z(b, k);
      if (va != vb) return largest ? va > vb : va < vb;
      return a < b;
    };
    std::nth_element(remaining.begin(), remaining.begin() + (count - 1), remaining.end(), cmp);
    for (Index i = 0; i < count; ++i) {
      taken[static_cast<std::size_t>(remaining[static_cast<std::size_t>(i)])] = 1;
      chosen.push_back(remaining[static_cast<std::size_t>(i)]);
    }
  };

  for (Index k = 0; static_cast<Index>(chosen.size()) < n; k = (k + 1) % q) {
    const Index need = n - static_cast<Index>(chosen.size());
    const Index small = std::min(per_side, (need + 1) / 2);
    take(k, small, false);
    const Index still = n - static_cast<Index>(chosen.size());
    take(k, std::min(per_side, still), true);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SubsampleSelection iboss_select(const GroupedDataset& ds, Index n) {
  check_total(ds, n);
  const auto rows = iboss_rows(ds.pooled_covariates(), n);
  return from_pooled_rows(ds, rows);
}

SubsampleSelection giboss_select(const GroupedDataset& ds, Index n, Exec exec) {
  const auto sizes = allocate_sizes(n, ds.group_sizes());
  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(ds.num_groups()));
#pragma omp parallel for schedule(dynamic) if (is_parallel(exec))
  for (Index i = 0; i < ds.num_groups(); ++i)
    sel.rows[static_cast<std::size_t>(i)] = iboss_rows(ds.group(i).covariates, sizes[static_cast<std::size_t>(i)]);
  return sel;
}

SubsampleSelection oss_pooled_select(const GroupedDataset& ds, Index n, const OssOptions& options) {
  check_total(ds, n);
  const RowMatrix pooled = ds.pooled_covariates();
  const auto ranges = column_ranges(pooled);
  const RowMatrix scaled = scale_columns(pooled, ranges);
  const auto rows = oss_select(scaled, n, options);
  return from_pooled_rows(ds, rows);
}

SubsampleSelection full_selection(const GroupedDataset& ds) {
  SubsampleSelection sel;
  for (const auto& g : ds.groups()) {
    std::vector<Index> idx(static_cast<std::size_t>(g.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    sel.rows.push_back(std::move(idx));
  }
  return sel;
}

SubsampleSelection select_subdata(const GroupedDataset& ds, Index n, const StrategySpec& spec) {
  const Exec exec = spec.oss.exec;
  switch (spec.method) {
    case Method::kUnif: return unif_select(ds, n, spec.seed);
    case Method::kGunif: return gunif_select(ds, n, spec.seed, exec);
    case Method::kLev: return lev_select(ds, n, spec.seed, exec);
    case Method::kGlev: return glev_select(ds, n, spec.seed, exec);
    case Method::kIboss: return iboss_select(ds, n);
    case Method::kGiboss: return giboss_select(ds, n, exec);
    case Method::kOss: return oss_pooled_select(ds, n, spec.oss);
    case Method::kGoss: return goss_select(ds, n, spec.oss);
    case Method::kFull: return full_selection(ds);
  }
  throw DataError(kModule, "unhandled method");
}

}  // namespace goss
