#include "goss/serialize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "goss/error.hpp"
#include "goss/version.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "serialize";

std::string covariate_name(const GroupedDataset& ds, Index k) {
  const auto& names = ds.covariate_names();
  if (!names.empty()) return names[static_cast<std::size_t>(k)];
  return "z" + std::to_string(k + 1);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// JSON has no infinities; non-finite values become null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// Shortest representation that round-trips.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T get_as(const Json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(kModule, std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string_view to_string(Elimination e) {
  switch (e) {
    case Elimination::kAuto: return "auto";
    case Elimination::kOn: return "on";
    case Elimination::kOff: return "off";
  }
  return "auto";
}

Elimination parse_elimination(std::string_view s) {
  const auto l = lowercase(s);
  if (l == "auto") return Elimination::kAuto;
  if (l == "on") return Elimination::kOn;
  if (l == "off") return Elimination::kOff;
  throw DataError(kModule, "unknown elimination mode '" + std::string(s) + "'");
}

std::string_view to_string(RandomEffectDist d) {
  return d == RandomEffectDist::kStudentT3 ? "t3" : "normal";
}

std::string_view to_string(Misspecification m) {
  switch (m) {
    case Misspecification::kNone: return "none";
    case Misspecification::kH1: return "h1";
    case Misspecification::kH2: return "h2";
  }
  return "none";
}

Json output_envelope(const std::string& command, std::uint64_t seed, const Json& config) {
  Json j;
  j["tool"] = kToolName;
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  return j;
}

Json dataset_summary(const GroupedDataset& ds) {
  Json groups = Json::array();
  for (const auto& g : ds.groups()) {
    Json cov = Json::object();
    const auto ranges = column_ranges(g.covariates);
    for (Index k = 0; k < ds.num_covariates(); ++k) {
      const auto& r = ranges[static_cast<std::size_t>(k)];
      cov[covariate_name(ds, k)] = Json{{"min", r.min}, {"max", r.max}};
    }
    groups.push_back(Json{{"group_id", g.group_id}, {"size", g.size()}, {"covariates", cov}});
  }
  Json j;
  j["num_groups"] = ds.num_groups();
  j["total_rows"] = ds.total_rows();
  j["num_params"] = ds.num_params();
  j["groups"] = std::move(groups);
  return j;
}

Json selection_to_json(const GroupedDataset& ds, const SubsampleSelection& sel) {
  sel.validate(ds);
  Json j = Json::object();
  for (Index i = 0; i < ds.num_groups(); ++i) {
    const auto& g = ds.group(i);
    Json rows = Json::array();
    for (Index r : sel.rows[static_cast<std::size_t>(i)]) rows.push_back(g.source_rows[static_cast<std::size_t>(r)]);
    j[g.group_id] = std::move(rows);
  }
  return j;
}

SubsampleSelection selection_from_json(const GroupedDataset& ds, const Json& j) {
  if (!j.is_object()) throw SchemaError(kModule, "selection must be a JSON object keyed by group id");
  std::unordered_map<std::string, Index> group_index;
  for (Index i = 0; i < ds.num_groups(); ++i) group_index.emplace(ds.group(i).group_id, i);

  SubsampleSelection sel;
  sel.rows.resize(static_cast<std::size_t>(ds.num_groups()));
  for (const auto& [key, value] : j.items()) {
    const auto it = group_index.find(key);
    if (it == group_index.end()) throw SchemaError(kModule, "selection names unknown group '" + key + "'");
    if (!value.is_array()) throw SchemaError(kModule, "selection for group '" + key + "' must be an array");
    const auto& g = ds.group(it->second);
    std::unordered_map<Index, Index> position;
    for (Index r = 0; r < g.size(); ++r) position.emplace(g.source_rows[static_cast<std::size_t>(r)], r);
    auto& rows = sel.rows[static_cast<std::size_t>(it->second)];
    for (const auto& v : value) {
      if (!v.is_number_integer()) throw SchemaError(kModule, "selection rows must be integers");
      const auto p = position.find(v.get<Index>());
      if (p == position.end())
        throw SchemaError(kModule, "row " + std::to_string(v.get<Index>()) + " is not in group '" + key + "'");
      rows.push_back(p->second);
    }
  }
  sel.validate(ds);
  return sel;
}

Json fit_to_json(const FitResult& fit, const Subdata& sub) {
  Json beta = Json::array();
  Json se = Json::array();
  for (Index k = 0; k < fit.beta.size(); ++k) {
    beta.push_back(fit.beta[k]);
    se.push_back(fit.covariance.size() > 0 ? number(std::sqrt(fit.covariance(k, k))) : Json(nullptr));
  }
  Json j;
  j["beta"] = std::move(beta);
  j["beta_se"] = std::move(se);
  j["sigma_a2"] = fit.varcomps.sigma_a2;
  j["sigma_e2"] = fit.varcomps.sigma_e2;
  j["variance_source"] = fit.varcomps.source == VarianceSource::kKnown ? "known" : "moment";
  j["n"] = sub.total_rows();
  j["groups"] = sub.nonempty_groups();
  j["log_det_M"] = number(fit.info.log_det_M);
  j["trace_Minv"] = number(fit.info.trace_Minv);
  j["log_d_bound"] = number(fit.info.log_d_bound);
  j["d_bound"] = number(fit.info.d_bound);
  j["a_bound"] = number(fit.info.a_bound);
  return j;
}

Json metrics_to_json(const MetricsTable& table) {
  Json cells = Json::array();
  for (const auto& c : table.cells) {
    cells.push_back(Json{{"method", to_string(c.method)},
                         {"n", c.n},
                         {"metric", to_string(c.metric)},
                         {"mean", number(c.mean)},
                         {"stderr", number(c.stderr_)},
                         {"B", c.replicates},
                         {"failed", c.failed}});
  }
  Json failures = Json::array();
  for (const auto& r : table.records) {
    if (r.ok) continue;
    failures.push_back(Json{{"replicate", r.replicate}, {"method", to_string(r.method)}, {"n", r.n}, {"error", r.error}});
  }
  return Json{{"cells", std::move(cells)}, {"failures", std::move(failures)}};
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json methods = Json::array();
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  Json j;
  j["covariate_case"] = cfg.covariate_case;
  j["groups"] = cfg.groups;
  j["first_half_size"] = cfg.first_half_size;
  j["second_half_multiplier"] = cfg.second_half_multiplier;
  j["p"] = cfg.p;
  j["beta"] = cfg.beta;
  j["random_effect"] = to_string(cfg.random_effect);
  j["sigma_a2"] = cfg.sigma_a2;
  j["sigma_e2"] = cfg.sigma_e2;
  j["misspecification"] = to_string(cfg.misspec);
  j["subdata_sizes"] = cfg.subdata_sizes;
  j["methods"] = std::move(methods);
  j["replicates"] = cfg.replicates;
  j["seed"] = cfg.seed;
  j["elimination"] = to_string(cfg.elimination);
  j["compare_to_full"] = cfg.compare_to_full;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError(kModule, "experiment config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "covariate_case") cfg.covariate_case = get_as<int>(v, k);
    else if (key == "groups") cfg.groups = get_as<Index>(v, k);
    else if (key == "first_half_size") cfg.first_half_size = get_as<Index>(v, k);
    else if (key == "second_half_multiplier") cfg.second_half_multiplier = get_as<double>(v, k);
    else if (key == "p") cfg.p = get_as<Index>(v, k);
    else if (key == "beta") cfg.beta = get_as<std::vector<double>>(v, k);
    else if (key == "random_effect") {
      const auto s = lowercase(get_as<std::string>(v, k));
      if (s == "normal") cfg.random_effect = RandomEffectDist::kNormal;
      else if (s == "t3") cfg.random_effect = RandomEffectDist::kStudentT3;
      else throw SchemaError(kModule, "random_effect must be 'normal' or 't3'");
    } else if (key == "sigma_a2") cfg.sigma_a2 = get_as<double>(v, k);
    else if (key == "sigma_e2") cfg.sigma_e2 = get_as<double>(v, k);
    else if (key == "misspecification") {
      const auto s = lowercase(get_as<std::string>(v, k));
      if (s == "none") cfg.misspec = Misspecification::kNone;
      else if (s == "h1") cfg.misspec = Misspecification::kH1;
      else if (s == "h2") cfg.misspec = Misspecification::kH2;
      else throw SchemaError(kModule, "misspecification must be 'none', 'h1' or 'h2'");
    } else if (key == "subdata_sizes") cfg.subdata_sizes = get_as<std::vector<Index>>(v, k);
    else if (key == "methods") {
      cfg.methods.clear();
      for (const auto& name : get_as<std::vector<std::string>>(v, k)) {
        try {
          cfg.methods.push_back(parse_method(name));
        } catch (const DataError& e) {
          throw SchemaError(kModule, e.what());
        }
      }
    } else if (key == "replicates") cfg.replicates = get_as<Index>(v, k);
    else if (key == "seed") cfg.seed = get_as<std::uint64_t>(v, k);
    else if (key == "elimination") {
      try {
        cfg.elimination = parse_elimination(get_as<std::string>(v, k));
      } catch (const DataError& e) {
        throw SchemaError(kModule, e.what());
      }
    } else if (key == "compare_to_full") cfg.compare_to_full = get_as<bool>(v, k);
    else throw SchemaError(kModule, "unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(kModule, path.string() + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

void write_csv_preamble(std::ostream& out, const Json& envelope) { out << "# " << envelope.dump() << '\n'; }

void write_subdata_csv(std::ostream& out, const GroupedDataset& ds, const SubsampleSelection& sel,
                       const std::string& group_col, const std::string& response_col) {
  sel.validate(ds);
  out << csv_field(group_col) << ',' << csv_field(response_col);
  for (Index k = 0; k < ds.num_covariates(); ++k) out << ',' << csv_field(covariate_name(ds, k));
  out << '\n';
  for (Index i = 0; i < ds.num_groups(); ++i) {
    const auto& g = ds.group(i);
    for (Index r : sel.rows[static_cast<std::size_t>(i)]) {
      out << csv_field(g.group_id) << ',' << format_double(g.response[r]);
      for (Index k = 0; k < ds.num_covariates(); ++k) out << ',' << format_double(g.covariates(r, k));
      out << '\n';
    }
  }
}

}  // namespace goss
