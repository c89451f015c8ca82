#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>

#include "goss/dataset.hpp"
#include "goss/oss.hpp"
#include "goss/selection.hpp"

namespace goss {

/// Subsampling strategies. `kFull` keeps every row and serves as the
/// full-data reference in experiments.
enum class Method { kUnif, kGunif, kLev, kGlev, kIboss, kGiboss, kOss, kGoss, kFull };

std::string_view to_string(Method m);
/// Accepts the lower-case names used on the command line ("goss", "unif", ...).
Method parse_method(std::string_view name);
bool is_grouped(Method m);
bool is_randomized(Method m);

struct StrategySpec {
  Method method = Method::kGoss;
  std::uint64_t seed = 0;
  OssOptions oss;
};

/// n rows uniformly without replacement from the pooled data.
SubsampleSelection unif_select(const GroupedDataset& ds, Index n, std::uint64_t seed);
/// Balanced allocation, then uniform draws within each group.
SubsampleSelection gunif_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec = Exec::kParallel);

/// Hat-matrix diagonal h_ii = x_i' (X'X)^{-1} x_i of a design that already
/// includes its intercept column. Throws SingularMatrixError for a
/// rank-deficient Gram matrix.
Eigen::VectorXd leverage_scores(const Eigen::MatrixXd& x, Exec exec = Exec::kParallel);

/// Draws n rows without replacement with probability proportional to the
/// pooled leverage scores.
SubsampleSelection lev_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec = Exec::kParallel);
/// Leverage draws inside each group using within-group scores and the
/// balanced allocation.
SubsampleSelection glev_select(const GroupedDataset& ds, Index n, std::uint64_t seed, Exec exec = Exec::kParallel);

/// Extreme-value selection: for each covariate in turn take the r smallest
/// and r largest remaining rows, r = ceil(n / (2 (p-1))), truncating the last
/// take so exactly n rows are chosen. Returns row indices into `z`.
std::vector<Index> iboss_rows(const RowMatrix& z, Index n);
SubsampleSelection iboss_select(const GroupedDataset& ds, Index n);
SubsampleSelection giboss_select(const GroupedDataset& ds, Index n, Exec exec = Exec::kParallel);

/// OSS applied to the pooled data (global min-max scaling, one block).
SubsampleSelection oss_pooled_select(const GroupedDataset& ds, Index n, const OssOptions& options = {});

/// Every row of the dataset.
SubsampleSelection full_selection(const GroupedDataset& ds);

/// Dispatches on `spec.method`.
SubsampleSelection select_subdata(const GroupedDataset& ds, Index n, const StrategySpec& spec);

/// Deterministic 64-bit seed mixing (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace goss
