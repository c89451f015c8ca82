#include "goss/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <unordered_map>

#include "goss/error.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "data_model";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC-4180-ish split: commas separate fields, double quotes group, "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct GroupAccumulator {
  std::string id;
  std::vector<double> z;
  std::vector<double> y;
  std::vector<Index> rows;
};

}  // namespace

GroupedDataset::GroupedDataset(std::vector<GroupBlock> groups, std::vector<std::string> covariate_names)
    : groups_(std::move(groups)), covariate_names_(std::move(covariate_names)) {
  if (groups_.empty()) throw EmptyInputError(kModule, "dataset has no groups");
  num_covariates_ = groups_.front().covariates.cols();
  if (num_covariates_ < 1) throw DimensionError(kModule, "at least one covariate is required (p >= 2)");
  if (!covariate_names_.empty() && static_cast<Index>(covariate_names_.size()) != num_covariates_)
    throw DimensionError(kModule, "covariate name count does not match covariate columns");

  std::unordered_map<std::string, int> seen;
  offsets_.reserve(groups_.size());
  for (auto& g : groups_) {
    if (!seen.emplace(g.group_id, 1).second)
      throw DataError(kModule, "duplicate group identifier '" + g.group_id + "'");
    if (g.covariates.cols() != num_covariates_)
      throw DimensionError(kModule, "group '" + g.group_id + "' has inconsistent covariate count");
    if (g.covariates.rows() < 1) throw DataError(kModule, "group '" + g.group_id + "' is empty");
    if (g.response.size() != g.covariates.rows())
      throw DimensionError(kModule, "group '" + g.group_id + "' response length differs from row count");
    if (!g.covariates.allFinite() || !g.response.allFinite())
      throw DataError(kModule, "group '" + g.group_id + "' contains non-finite values");
    if (g.source_rows.empty()) {
      g.source_rows.resize(static_cast<std::size_t>(g.size()));
      for (Index j = 0; j < g.size(); ++j) g.source_rows[static_cast<std::size_t>(j)] = total_rows_ + j;
    } else if (static_cast<Index>(g.source_rows.size()) != g.size()) {
      throw DimensionError(kModule, "group '" + g.group_id + "' source row count differs from row count");
    }
    offsets_.push_back(total_rows_);
    total_rows_ += g.size();
  }
}

std::vector<Index> GroupedDataset::group_sizes() const {
  std::vector<Index> sizes;
  sizes.reserve(groups_.size());
  for (const auto& g : groups_) sizes.push_back(g.size());
  return sizes;
}

RowMatrix GroupedDataset::pooled_covariates() const {
  RowMatrix out(total_rows_, num_covariates_);
  for (std::size_t i = 0; i < groups_.size(); ++i)
    out.middleRows(offsets_[i], groups_[i].size()) = groups_[i].covariates;
  return out;
}

std::pair<Index, Index> GroupedDataset::locate(Index pooled_row) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), pooled_row);
  Index g = static_cast<Index>(it - offsets_.begin()) - 1;
  return {g, pooled_row - offsets_[static_cast<std::size_t>(g)]};
}

GroupedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open '" + path.string() + "'");
  return parse_csv(in, schema);
}

GroupedDataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    // Leading '#' lines are a metadata preamble, e.g. from exported subdata.
    const auto t = trim(line);
    if (!t.empty() && t.front() != '#') {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw EmptyInputError(kModule, "input is empty");

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(kModule, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.group_col.empty()) throw SchemaError(kModule, "no group column given");
  if (schema.response_col.empty()) throw SchemaError(kModule, "no response column given");
  const std::size_t gcol = column(schema.group_col);
  const std::size_t ycol = column(schema.response_col);

  std::vector<std::size_t> zcols;
  for (const auto& name : schema.covariate_cols) zcols.push_back(column(name));
  const bool auto_covariates = schema.covariate_cols.empty();

  std::vector<GroupAccumulator> accs;
  std::unordered_map<std::string, std::size_t> index_of;
  Index data_row = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError(kModule,
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    if (auto_covariates && data_row == 0) {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == gcol || c == ycol) continue;
        if (parse_number(fields[c])) zcols.push_back(c);
      }
      if (zcols.empty()) throw SchemaError(kModule, "no numeric covariate columns found");
    }

    auto cell = [&](std::size_t c) {
      auto v = parse_number(fields[c]);
      if (!v) throw ParseError(kModule, "non-numeric value '" + fields[c] + "' in column '" + header[c] + "'", line_no);
      if (!std::isfinite(*v))
        throw ParseError(kModule, "non-finite value '" + fields[c] + "' in column '" + header[c] + "'", line_no);
      return *v;
    };

    const std::string& gid = fields[gcol];
    auto [it, inserted] = index_of.emplace(gid, accs.size());
    if (inserted) accs.push_back(GroupAccumulator{gid, {}, {}, {}});
    auto& acc = accs[it->second];
    for (auto c : zcols) acc.z.push_back(cell(c));
    acc.y.push_back(cell(ycol));
    acc.rows.push_back(data_row);
    ++data_row;
  }
  if (data_row == 0) throw EmptyInputError(kModule, "input has a header but no data rows");

  const auto q = static_cast<Index>(zcols.size());
  std::vector<GroupBlock> blocks;
  blocks.reserve(accs.size());
  for (auto& acc : accs) {
    GroupBlock b;
    b.group_id = acc.id;
    const auto rows = static_cast<Index>(acc.y.size());
    b.covariates = Eigen::Map<RowMatrix>(acc.z.data(), rows, q);
    b.response = Eigen::Map<Eigen::VectorXd>(acc.y.data(), rows);
    b.source_rows = std::move(acc.rows);
    blocks.push_back(std::move(b));
  }
  std::vector<std::string> names;
  for (auto c : zcols) names.push_back(header[c]);
  return GroupedDataset(std::move(blocks), std::move(names));
}

double scale_value(const Range& r, double x) {
  if (!(r.max > r.min)) return 0.0;
  return 2.0 * (x - r.min) / (r.max - r.min) - 1.0;
}

double unscale_value(const Range& r, double s) {
  if (!(r.max > r.min)) return r.min;
  return r.min + (s + 1.0) * (r.max - r.min) / 2.0;
}

double ScalingTransform::scale(Index group, Index covariate, double x) const {
  return scale_value(range(group, covariate), x);
}

double ScalingTransform::unscale(Index group, Index covariate, double s) const {
  return unscale_value(range(group, covariate), s);
}

const Range& ScalingTransform::range(Index group, Index covariate) const {
  return ranges_.at(static_cast<std::size_t>(group)).at(static_cast<std::size_t>(covariate));
}

std::vector<Range> column_ranges(const RowMatrix& z) {
  std::vector<Range> ranges(static_cast<std::size_t>(z.cols()));
  for (Index k = 0; k < z.cols(); ++k) {
    ranges[static_cast<std::size_t>(k)] = {z.col(k).minCoeff(), z.col(k).maxCoeff()};
  }
  return ranges;
}

RowMatrix scale_columns(const RowMatrix& z, std::span<const Range> ranges) {
  RowMatrix out(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r)
    for (Index k = 0; k < z.cols(); ++k) out(r, k) = scale_value(ranges[static_cast<std::size_t>(k)], z(r, k));
  return out;
}

ScaledGroups scale_per_group(const GroupedDataset& ds, Exec exec) {
  const Index r = ds.num_groups();
  std::vector<RowMatrix> scaled(static_cast<std::size_t>(r));
  std::vector<std::vector<Range>> ranges(static_cast<std::size_t>(r));
#pragma omp parallel for schedule(dynamic) if (is_parallel(exec))
  for (Index i = 0; i < r; ++i) {
    const auto& z = ds.group(i).covariates;
    ranges[static_cast<std::size_t>(i)] = column_ranges(z);
    scaled[static_cast<std::size_t>(i)] = scale_columns(z, ranges[static_cast<std::size_t>(i)]);
  }
  return {std::move(scaled), ScalingTransform(std::move(ranges))};
}

}  // namespace goss
