#pragma once

#include <span>
#include <vector>

#include "goss/dataset.hpp"
#include "goss/oss.hpp"

namespace goss {

/// Chosen subdata: for every group of the dataset, the selected positions
/// within that group (empty when the group contributes nothing).
struct SubsampleSelection {
  std::vector<std::vector<Index>> rows;

  Index total() const;
  std::vector<Index> sizes() const;
  /// Number of groups with at least one selected row.
  Index nonempty_groups() const;
  /// Throws DataError unless the selection matches `ds` (group count, index
  /// bounds, uniqueness within groups).
  void validate(const GroupedDataset& ds) const;
};

/// Builds a selection from pooled (group-major) row indices. Rows come out
/// ascending within each group.
SubsampleSelection from_pooled_rows(const GroupedDataset& ds, std::span<const Index> pooled_rows);

/// Splits a total subdata size across groups: floor/ceil of n/R with the
/// extra rows going to the earliest groups. Groups smaller than their share
/// are capped and the deficit is handed out round-robin to groups with spare
/// capacity (a warning is emitted when this happens).
std::vector<Index> allocate_sizes(Index n, std::span<const Index> group_sizes);

/// Group-balanced orthogonal subsampling: per-group min-max scaling, then the
/// sequential OSS selector inside each group with its allocated size.
SubsampleSelection goss_select(const GroupedDataset& ds, Index n, const OssOptions& options = {});

}  // namespace goss
