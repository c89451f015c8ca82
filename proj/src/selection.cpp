#include "goss/selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "goss/error.hpp"
#include "goss/log.hpp"

namespace goss {
namespace {
constexpr const char* kModule = "goss";
}

Index SubsampleSelection::total() const {
  Index t = 0;
  for (const auto& g : rows) t += static_cast<Index>(g.size());
  return t;
}

std::vector<Index> SubsampleSelection::sizes() const {
  std::vector<Index> s;
  s.reserve(rows.size());
  for (const auto& g : rows) s.push_back(static_cast<Index>(g.size()));
  return s;
}

Index SubsampleSelection::nonempty_groups() const {
  return static_cast<Index>(std::count_if(rows.begin(), rows.end(), [](const auto& g) { return !g.empty(); }));
}

void SubsampleSelection::validate(const GroupedDataset& ds) const {
  if (static_cast<Index>(rows.size()) != ds.num_groups())
    throw DataError(kModule, "selection has " + std::to_string(rows.size()) + " groups, dataset has " +
                                 std::to_string(ds.num_groups()));
  for (Index i = 0; i < ds.num_groups(); ++i) {
    auto idx = rows[static_cast<std::size_t>(i)];
    for (Index r : idx)
      if (r < 0 || r >= ds.group(i).size())
        throw DataError(kModule, "row " + std::to_string(r) + " out of range for group '" + ds.group(i).group_id + "'");
    std::sort(idx.begin(), idx.end());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end())
      throw DataError(kModule, "duplicate row in group '" + ds.group(i).group_id + "'");
  }
}

SubsampleSelection from_pooled_rows(const GroupedDataset& ds, std::span<const Index> pooled_rows) {
  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(ds.num_groups()));
  for (Index r : pooled_rows) {
    auto [g, pos] = ds.locate(r);
    sel.rows[static_cast<std::size_t>(g)].push_back(pos);
  }
  for (auto& g : sel.rows) std::sort(g.begin(), g.end());
  return sel;
}

std::vector<Index> allocate_sizes(Index n, std::span<const Index> group_sizes) {
  const auto r = static_cast<Index>(group_sizes.size());
  if (r == 0) throw DataError(kModule, "no groups to allocate over");
  const Index total = std::accumulate(group_sizes.begin(), group_sizes.end(), Index{0});
  if (n < 1) throw InfeasibleError(kModule, "subdata size must be at least 1");
  if (n > total)
    throw InfeasibleError(kModule, "subdata size " + std::to_string(n) + " exceeds full data size " +
                                       std::to_string(total));

  std::vector<Index> sizes(static_cast<std::size_t>(r), n / r);
  for (Index i = 0; i < n % r; ++i) ++sizes[static_cast<std::size_t>(i)];

  Index deficit = 0;
  for (Index i = 0; i < r; ++i) {
    auto& s = sizes[static_cast<std::size_t>(i)];
    const Index cap = group_sizes[static_cast<std::size_t>(i)];
    if (s > cap) {
      deficit += s - cap;
      s = cap;
    }
  }
  if (deficit > 0) {
    warn("group capacity below balanced share; redistributing " + std::to_string(deficit) +
         " row(s) round-robin across groups with spare capacity");
    while (deficit > 0) {
      for (Index i = 0; i < r && deficit > 0; ++i) {
        auto& s = sizes[static_cast<std::size_t>(i)];
        if (s < group_sizes[static_cast<std::size_t>(i)]) {
          ++s;
          --deficit;
        }
      }
    }
  }
  return sizes;
}

SubsampleSelection goss_select(const GroupedDataset& ds, Index n, const OssOptions& options) {
  const auto sizes = allocate_sizes(n, ds.group_sizes());
  const auto scaled = scale_per_group(ds, options.exec);
  const Index r = ds.num_groups();

  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(r));
  // Groups run concurrently; the within-group candidate loop stays serial so
  // the two levels do not oversubscribe.
  OssOptions inner = options;
  if (r > 1) inner.exec = Exec::kSerial;
  // Tracing is serialized per group so event streams stay readable.
  const bool traced = static_cast<bool>(options.trace);
#pragma omp parallel for schedule(dynamic) if (is_parallel(options.exec) && r > 1 && !traced)
  for (Index i = 0; i < r; ++i) {
    OssOptions local = inner;
    if (traced)
      local.trace = [&options, i](const OssTraceEvent& ev) {
        OssTraceEvent tagged = ev;
        tagged.group = i;
        options.trace(tagged);
      };
    sel.rows[static_cast<std::size_t>(i)] =
        oss_select(scaled.covariates[static_cast<std::size_t>(i)], sizes[static_cast<std::size_t>(i)], local);
  }
  return sel;
}

}  // namespace goss
