#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "goss/dataset.hpp"
#include "goss/lmm.hpp"
#include "goss/selection.hpp"
#include "goss/simulation.hpp"

namespace goss {

using Json = nlohmann::ordered_json;

/// Common header of every JSON output: tool, version, command, seed, config.
Json output_envelope(const std::string& command, std::uint64_t seed, const Json& config);

/// group_id, C_i and per-covariate min/max for every group.
Json dataset_summary(const GroupedDataset& ds);

/// {group_id: [source row, ...]} in group order.
Json selection_to_json(const GroupedDataset& ds, const SubsampleSelection& sel);
/// Inverse of selection_to_json. Unknown groups or rows raise SchemaError.
SubsampleSelection selection_from_json(const GroupedDataset& ds, const Json& j);

/// beta, variance components, information criteria and bounds.
Json fit_to_json(const FitResult& fit, const Subdata& sub);

Json metrics_to_json(const MetricsTable& table);

Json config_to_json(const ExperimentConfig& cfg);
/// Strict: unknown keys and wrongly typed values raise SchemaError.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One '#'-prefixed line holding the compact envelope; load_csv skips it.
void write_csv_preamble(std::ostream& out, const Json& envelope);

Json read_json_file(const std::filesystem::path& path);

/// Selected rows as CSV in the input layout: group, response, covariates.
void write_subdata_csv(std::ostream& out, const GroupedDataset& ds, const SubsampleSelection& sel,
                       const std::string& group_col = "group", const std::string& response_col = "y");

std::string_view to_string(Elimination e);
Elimination parse_elimination(std::string_view s);
std::string_view to_string(RandomEffectDist d);
std::string_view to_string(Misspecification m);

}  // namespace goss
