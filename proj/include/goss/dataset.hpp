#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "goss/exec.hpp"

namespace goss {

using Index = std::int64_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One group of the hierarchical data. The intercept column is implicit and
/// never stored: `covariates` holds the C_i x (p-1) matrix Z_i.
struct GroupBlock {
  std::string group_id;
  RowMatrix covariates;
  Eigen::VectorXd response;
  /// Position of each row in the originating input (0-based data rows).
  std::vector<Index> source_rows;

  Index size() const { return covariates.rows(); }
};

/// Full-data container. Immutable once constructed; the constructor validates
/// shape, finiteness and uniqueness of group identifiers.
class GroupedDataset {
 public:
  GroupedDataset() = default;
  explicit GroupedDataset(std::vector<GroupBlock> groups,
                          std::vector<std::string> covariate_names = {});

  std::span<const GroupBlock> groups() const { return groups_; }
  const GroupBlock& group(Index i) const { return groups_[static_cast<std::size_t>(i)]; }
  Index num_groups() const { return static_cast<Index>(groups_.size()); }
  Index total_rows() const { return total_rows_; }
  /// p: number of regression coefficients including the intercept.
  Index num_params() const { return num_covariates_ + 1; }
  Index num_covariates() const { return num_covariates_; }
  std::vector<Index> group_sizes() const;
  /// Offset of group i's first row in the pooled (group-major) row order.
  Index group_offset(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  /// Pooled covariates in group-major order, N x (p-1).
  RowMatrix pooled_covariates() const;
  /// Maps a pooled row index to (group, position within group).
  std::pair<Index, Index> locate(Index pooled_row) const;

 private:
  std::vector<GroupBlock> groups_;
  std::vector<std::string> covariate_names_;
  std::vector<Index> offsets_;
  Index total_rows_ = 0;
  Index num_covariates_ = 0;
};

/// Column roles for CSV ingestion. An empty `covariate_cols` means every
/// other column is a covariate, except columns whose first data cell is not
/// numeric.
struct CsvSchema {
  std::string group_col;
  std::string response_col;
  std::vector<std::string> covariate_cols;
};

GroupedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
GroupedDataset parse_csv(std::istream& in, const CsvSchema& schema);

/// Min/max of one covariate within one group, in original units.
struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Per-group, per-covariate min-max map onto [-1, 1]. Constant columns map to 0.
class ScalingTransform {
 public:
  ScalingTransform() = default;
  explicit ScalingTransform(std::vector<std::vector<Range>> ranges) : ranges_(std::move(ranges)) {}

  double scale(Index group, Index covariate, double x) const;
  double unscale(Index group, Index covariate, double s) const;
  const Range& range(Index group, Index covariate) const;
  Index num_groups() const { return static_cast<Index>(ranges_.size()); }

 private:
  std::vector<std::vector<Range>> ranges_;
};

double scale_value(const Range& r, double x);
double unscale_value(const Range& r, double s);

/// Column ranges of a block.
std::vector<Range> column_ranges(const RowMatrix& z);
/// Applies min-max scaling column by column using the given ranges.
RowMatrix scale_columns(const RowMatrix& z, std::span<const Range> ranges);

struct ScaledGroups {
  std::vector<RowMatrix> covariates;
  ScalingTransform transform;
};

/// Scales every covariate of every group to [-1, 1] using that group's own
/// min and max. Used only for subsample selection; estimation works in
/// original units.
ScaledGroups scale_per_group(const GroupedDataset& ds, Exec exec = Exec::kParallel);

}  // namespace goss
