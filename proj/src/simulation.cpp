#include "goss/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <exception>
#include <limits>
#include <sstream>

#include "goss/error.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "sim_bench";

// Keeps method seeds apart from the data seed of the same replicate.
constexpr std::uint64_t kMethodSalt = 0x6d657468ULL;

double evenly_spaced(Index i, Index count, double lo, double hi) {
  if (count <= 1) return lo;
  return lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(count - 1);
}

// Shortest representation that round-trips.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<Index> ExperimentConfig::group_sizes() const {
  const Index half = (groups + 1) / 2;
  const auto big = static_cast<Index>(std::llround(second_half_multiplier * static_cast<double>(first_half_size)));
  std::vector<Index> sizes(static_cast<std::size_t>(groups));
  for (Index i = 0; i < groups; ++i) sizes[static_cast<std::size_t>(i)] = i < half ? first_half_size : big;
  return sizes;
}

Eigen::VectorXd ExperimentConfig::true_beta() const {
  if (beta.empty()) return Eigen::VectorXd::Ones(p);
  return Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Index>(beta.size()));
}

double ExperimentConfig::true_sigma_a2() const {
  return random_effect == RandomEffectDist::kStudentT3 ? 3.0 : sigma_a2;
}

void ExperimentConfig::validate() const {
  if (covariate_case < 1 || covariate_case > 4)
    throw DataError(kModule, "unknown covariate case " + std::to_string(covariate_case));
  if (groups < 1) throw DataError(kModule, "need at least one group");
  if (first_half_size < 1 || second_half_multiplier <= 0.0) throw DataError(kModule, "group sizes must be positive");
  for (Index c : group_sizes())
    if (c < 1) throw DataError(kModule, "group sizes must be positive");
  if (p < 2) throw DataError(kModule, "p must be at least 2");
  if (!beta.empty() && static_cast<Index>(beta.size()) != p)
    throw DimensionError(kModule, "beta has " + std::to_string(beta.size()) + " entries, p = " + std::to_string(p));
  if (misspec != Misspecification::kNone && p < 3)
    throw DataError(kModule, "misspecification terms need at least two covariates");
  if (sigma_a2 < 0.0 || sigma_e2 < 0.0) throw DataError(kModule, "variances must be non-negative");
  if (replicates < 1) throw DataError(kModule, "need at least one replicate");
  if (subdata_sizes.empty() || methods.empty()) throw DataError(kModule, "need at least one subdata size and method");
  for (Index n : subdata_sizes)
    if (n < 1) throw DataError(kModule, "subdata sizes must be positive");
}

std::pair<double, double> shifted_uniform_support(Index group, Index groups) {
  const double centre = evenly_spaced(group, groups, -0.5, 0.45);
  return {-1.0 + centre, 1.0 + centre};
}

double shifted_normal_mean(Index group, Index groups) { return evenly_spaced(group, groups, -2.0, 1.8); }

double student_t3(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(3.0);
  const double z = normal(rng);
  return z / std::sqrt(chi2(rng) / 3.0);
}

std::vector<RowMatrix> generate_covariates(const ExperimentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const Index q = cfg.p - 1;
  const auto sizes = cfg.group_sizes();
  std::vector<RowMatrix> out;
  out.reserve(sizes.size());
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double root_half = std::sqrt(0.5);

  for (Index i = 0; i < cfg.groups; ++i) {
    RowMatrix z(sizes[static_cast<std::size_t>(i)], q);
    switch (cfg.covariate_case) {
      case 1:
        for (Index r = 0; r < z.rows(); ++r)
          for (Index k = 0; k < q; ++k) z(r, k) = unit(rng);
        break;
      case 3: {
        const auto [lo, hi] = shifted_uniform_support(i, cfg.groups);
        std::uniform_real_distribution<double> shifted(lo, hi);
        for (Index r = 0; r < z.rows(); ++r)
          for (Index k = 0; k < q; ++k) z(r, k) = shifted(rng);
        break;
      }
      case 2:
      case 4: {
        // Equicorrelation 0.5: a shared component plus an independent one.
        const double mu = cfg.covariate_case == 4 ? shifted_normal_mean(i, cfg.groups) : 0.0;
        for (Index r = 0; r < z.rows(); ++r) {
          const double shared = normal(rng);
          for (Index k = 0; k < q; ++k) z(r, k) = mu + root_half * shared + root_half * normal(rng);
        }
        break;
      }
      default:
        throw DataError(kModule, "unknown covariate case " + std::to_string(cfg.covariate_case));
    }
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<Eigen::VectorXd> generate_response(const std::vector<RowMatrix>& covariates, const ExperimentConfig& cfg,
                                               std::mt19937_64& rng) {
  const Eigen::VectorXd beta = cfg.true_beta();
  if (beta.size() != cfg.p) throw DimensionError(kModule, "beta length does not match p");
  std::normal_distribution<double> effect(0.0, std::sqrt(cfg.sigma_a2));
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.sigma_e2));

  std::vector<Eigen::VectorXd> out;
  out.reserve(covariates.size());
  for (const auto& z : covariates) {
    if (z.cols() != cfg.p - 1) throw DimensionError(kModule, "covariate block width does not match p");
    const double a = cfg.random_effect == RandomEffectDist::kStudentT3 ? student_t3(rng) : effect(rng);
    Eigen::VectorXd y = (z * beta.tail(cfg.p - 1)).array() + beta[0] + a;
    for (Index r = 0; r < z.rows(); ++r) {
      switch (cfg.misspec) {
        case Misspecification::kNone: break;
        case Misspecification::kH1: y[r] += 0.1 * z(r, 0) * z(r, 1); break;
        case Misspecification::kH2: y[r] += 0.1 * z(r, 0) * std::sin(z(r, 1)); break;
      }
      y[r] += noise(rng);
    }
    out.push_back(std::move(y));
  }
  return out;
}

GroupedDataset simulate_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto z = generate_covariates(cfg, rng);
  auto y = generate_response(z, cfg, rng);
  std::vector<GroupBlock> blocks;
  blocks.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    blocks.push_back(GroupBlock{"g" + std::to_string(i + 1), std::move(z[i]), std::move(y[i]), {}});
  return GroupedDataset(std::move(blocks));
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kMseSlope: return "MSE_slope";
    case Metric::kMseIntercept: return "MSE_intercept";
    case Metric::kMseSigmaA2: return "MSE_sigmaA2";
    case Metric::kMseSigmaE2: return "MSE_sigmaE2";
    case Metric::kMspe: return "MSPE";
    case Metric::kSeVsFull: return "SE_vs_full";
    case Metric::kCpuSeconds: return "cpu_seconds";
  }
  return "unknown";
}

const MetricCell& MetricsTable::at(Method method, Index n, Metric metric) const {
  for (const auto& c : cells)
    if (c.method == method && c.n == n && c.metric == metric) return c;
  throw DataError(kModule, "no metric cell for " + std::string(to_string(method)) + ", n = " + std::to_string(n) +
                               ", " + std::string(to_string(metric)));
}

std::string MetricsTable::to_csv() const {
  std::ostringstream out;
  out << "method,n,metric,mean,stderr,B,failed\n";
  for (const auto& c : cells)
    out << to_string(c.method) << ',' << c.n << ',' << to_string(c.metric) << ',' << format_double(c.mean) << ','
        << format_double(c.stderr_) << ',' << c.replicates << ',' << c.failed << '\n';
  return out.str();
}

MetricsTable aggregate(std::vector<ReplicateRecord> records, const std::vector<Method>& methods,
                       const std::vector<Index>& sizes, const Truth& truth) {
  MetricsTable table;
  const Index p = truth.beta.size();
  for (Method method : methods) {
    for (Index n : sizes) {
      for (Metric metric : kAllMetrics) {
        std::vector<double> values;
        Index failed = 0;
        for (const auto& r : records) {
          if (r.method != method || r.n != n) continue;
          if (!r.ok) {
            ++failed;
            continue;
          }
          double v = 0.0;
          switch (metric) {
            case Metric::kMseSlope: v = (r.beta.tail(p - 1) - truth.beta.tail(p - 1)).squaredNorm(); break;
            case Metric::kMseIntercept: v = std::pow(r.beta[0] - truth.beta[0], 2); break;
            case Metric::kMseSigmaA2: v = std::pow(r.sigma_a2 - truth.sigma_a2, 2); break;
            case Metric::kMseSigmaE2: v = std::pow(r.sigma_e2 - truth.sigma_e2, 2); break;
            case Metric::kMspe: v = r.mspe; break;
            case Metric::kSeVsFull: v = r.se_vs_full; break;
            case Metric::kCpuSeconds: v = r.seconds; break;
          }
          if (std::isfinite(v)) values.push_back(v);
        }
        MetricCell cell{method, n, metric, 0.0, 0.0, static_cast<Index>(values.size()), failed};
        if (!values.empty()) {
          double sum = 0.0;
          for (double v : values) sum += v;
          cell.mean = sum / static_cast<double>(values.size());
          if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
            cell.stderr_ = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
          }
        } else {
          cell.mean = std::numeric_limits<double>::quiet_NaN();
          cell.stderr_ = std::numeric_limits<double>::quiet_NaN();
        }
        table.cells.push_back(cell);
      }
    }
  }
  table.records = std::move(records);
  return table;
}

ReplicateRecord evaluate_method(const GroupedDataset& ds, Method method, Index n, std::uint64_t seed,
                                Elimination elimination, const std::optional<Eigen::VectorXd>& full_beta,
                                Exec exec) {
  ReplicateRecord rec;
  rec.method = method;
  rec.n = n;
  rec.se_vs_full = std::numeric_limits<double>::quiet_NaN();
  try {
    StrategySpec spec{method, seed, OssOptions{elimination, exec, {}}};
    const auto start = std::chrono::steady_clock::now();
    const auto sel = select_subdata(ds, n, spec);
    const auto sub = extract_subdata(ds, sel);
    const auto fit = fit_lmm(sub, std::nullopt, exec);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    rec.beta = fit.beta;
    rec.sigma_a2 = fit.varcomps.sigma_a2;
    rec.sigma_e2 = fit.varcomps.sigma_e2;
    const auto effects = blup_random_effects(sub, fit.beta, fit.varcomps);
    rec.mspe = predict_full(ds, fit.beta, effects).mspe;
    if (full_beta)
      rec.se_vs_full = (fit.beta.tail(fit.beta.size() - 1) - full_beta->tail(full_beta->size() - 1)).squaredNorm();
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

namespace {

std::optional<Eigen::VectorXd> full_fit_beta(const GroupedDataset& ds, Exec exec) {
  try {
    return fit_lmm(extract_subdata(ds, full_selection(ds)), std::nullopt, exec).beta;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::uint64_t method_seed(std::uint64_t replicate_seed, Method m) {
  return mix_seed(replicate_seed ^ kMethodSalt, static_cast<std::uint64_t>(m));
}

}  // namespace

MetricsTable run_experiment(const ExperimentConfig& cfg, Exec exec) {
  cfg.validate();
  const Index reps = cfg.replicates;
  const auto per_rep = cfg.methods.size() * cfg.subdata_sizes.size();
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(reps) * per_rep);
  const Exec inner = (is_parallel(exec) && reps == 1) ? Exec::kParallel : Exec::kSerial;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(reps));

#pragma omp parallel for schedule(dynamic) if (is_parallel(exec) && reps > 1)
  for (Index b = 0; b < reps; ++b) {
    try {
      const std::uint64_t rep_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(b));
      const auto ds = simulate_dataset(cfg, rep_seed);
      std::optional<Eigen::VectorXd> full;
      if (cfg.compare_to_full) full = full_fit_beta(ds, inner);
      std::size_t slot = static_cast<std::size_t>(b) * per_rep;
      for (Index n : cfg.subdata_sizes) {
        for (Method m : cfg.methods) {
          auto rec = evaluate_method(ds, m, n, method_seed(rep_seed, m), cfg.elimination, full, inner);
          rec.replicate = b;
          records[slot++] = std::move(rec);
        }
      }
    } catch (...) {
      errors[static_cast<std::size_t>(b)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Truth truth{cfg.true_beta(), cfg.true_sigma_a2(), cfg.sigma_e2};
  return aggregate(std::move(records), cfg.methods, cfg.subdata_sizes, truth);
}

MetricsTable run_on_dataset(const GroupedDataset& ds, const std::vector<Method>& methods,
                            const std::vector<Index>& sizes, Index repeats, std::uint64_t seed,
                            Elimination elimination, Exec exec) {
  const auto full_sel = full_selection(ds);
  const auto full = fit_lmm(extract_subdata(ds, full_sel), std::nullopt, exec);

  struct Job {
    Method method;
    Index n;
    Index rep;
  };
  std::vector<Job> jobs;
  for (Index n : sizes)
    for (Method m : methods) {
      const Index count = is_randomized(m) ? std::max<Index>(repeats, 1) : 1;
      for (Index r = 0; r < count; ++r) jobs.push_back({m, n, r});
    }

  std::vector<ReplicateRecord> records(jobs.size());
  const auto jobs_count = static_cast<Index>(jobs.size());
#pragma omp parallel for schedule(dynamic) if (is_parallel(exec))
  for (Index j = 0; j < jobs_count; ++j) {
    const auto& job = jobs[static_cast<std::size_t>(j)];
    const std::uint64_t rep_seed = mix_seed(seed, static_cast<std::uint64_t>(job.rep));
    auto rec = evaluate_method(ds, job.method, job.n, method_seed(rep_seed, job.method), elimination, full.beta,
                               Exec::kSerial);
    rec.replicate = job.rep;
    records[static_cast<std::size_t>(j)] = std::move(rec);
  }
  Truth truth{full.beta, full.varcomps.sigma_a2, full.varcomps.sigma_e2};
  return aggregate(std::move(records), methods, sizes, truth);
}

}  // namespace goss
