#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "goss/baselines.hpp"
#include "goss/dataset.hpp"
#include "goss/lmm.hpp"

namespace goss {

enum class RandomEffectDist { kNormal, kStudentT3 };
enum class Misspecification { kNone, kH1, kH2 };

/// Synthetic experiment description. Group sizes follow the two-block
/// pattern C_1 = ... = C_h = first_half_size and the remaining groups
/// second_half_multiplier * first_half_size, h = ceil(R / 2).
struct ExperimentConfig {
  int covariate_case = 1;  // 1..4
  Index groups = 20;
  Index first_half_size = 1000;
  double second_half_multiplier = 2.0;
  Index p = 11;
  std::vector<double> beta;  // empty -> all ones
  RandomEffectDist random_effect = RandomEffectDist::kNormal;
  double sigma_a2 = 0.5;
  double sigma_e2 = 9.0;
  Misspecification misspec = Misspecification::kNone;
  std::vector<Index> subdata_sizes{1000};
  std::vector<Method> methods{Method::kUnif, Method::kLev,   Method::kIboss,  Method::kOss,
                              Method::kGunif, Method::kGlev, Method::kGiboss, Method::kGoss};
  Index replicates = 100;
  std::uint64_t seed = 1;
  Elimination elimination = Elimination::kAuto;
  /// Fit the full data each replicate so SE against the full-data estimator
  /// can be reported.
  bool compare_to_full = true;

  std::vector<Index> group_sizes() const;
  Eigen::VectorXd true_beta() const;
  /// Variance of the random intercept implied by the chosen distribution.
  double true_sigma_a2() const;
  void validate() const;
};

/// Support [lo, hi] of group i's covariates in the shifted-uniform case:
/// centres spaced evenly over [-0.5, 0.45] (step 0.05 when R = 20).
std::pair<double, double> shifted_uniform_support(Index group, Index groups);
/// Mean of group i's covariates in the shifted-normal case: spaced evenly
/// over [-2, 1.8] (step 0.2 when R = 20).
double shifted_normal_mean(Index group, Index groups);

/// Per-group covariate blocks for the configured case.
std::vector<RowMatrix> generate_covariates(const ExperimentConfig& cfg, std::mt19937_64& rng);
/// y = x' beta + h(x) + a_i + e with one a_i per group.
std::vector<Eigen::VectorXd> generate_response(const std::vector<RowMatrix>& covariates, const ExperimentConfig& cfg,
                                               std::mt19937_64& rng);
GroupedDataset simulate_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Draw from Student's t with 3 degrees of freedom: N(0,1) / sqrt(chi2_3 / 3).
double student_t3(std::mt19937_64& rng);

enum class Metric { kMseSlope, kMseIntercept, kMseSigmaA2, kMseSigmaE2, kMspe, kSeVsFull, kCpuSeconds };
std::string_view to_string(Metric m);
inline constexpr Metric kAllMetrics[] = {Metric::kMseSlope, Metric::kMseIntercept, Metric::kMseSigmaA2,
                                         Metric::kMseSigmaE2, Metric::kMspe, Metric::kSeVsFull,
                                         Metric::kCpuSeconds};

/// Estimates from one (replicate, method, n) run.
struct ReplicateRecord {
  Index replicate = 0;
  Method method = Method::kGoss;
  Index n = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd beta;
  double sigma_a2 = 0.0;
  double sigma_e2 = 0.0;
  double mspe = 0.0;
  double se_vs_full = 0.0;
  double seconds = 0.0;
};

struct MetricCell {
  Method method = Method::kGoss;
  Index n = 0;
  Metric metric = Metric::kMseSlope;
  double mean = 0.0;
  double stderr_ = 0.0;
  Index replicates = 0;  // successful replicates used
  Index failed = 0;
};

struct MetricsTable {
  std::vector<MetricCell> cells;
  std::vector<ReplicateRecord> records;

  const MetricCell& at(Method method, Index n, Metric metric) const;
  /// Long-format CSV: method,n,metric,mean,stderr,B,failed
  std::string to_csv() const;
};

/// Reference values a replicate's estimates are scored against.
struct Truth {
  Eigen::VectorXd beta;
  double sigma_a2 = 0.0;
  double sigma_e2 = 0.0;
};

/// Turns per-replicate records into mean/standard-error cells, in the order
/// (method list, n list, metric list).
MetricsTable aggregate(std::vector<ReplicateRecord> records, const std::vector<Method>& methods,
                       const std::vector<Index>& sizes, const Truth& truth);

/// Subsample, estimate and score one dataset with one method. Never throws
/// for estimation failures: they are reported through `ok`/`error`.
ReplicateRecord evaluate_method(const GroupedDataset& ds, Method method, Index n, std::uint64_t seed,
                                Elimination elimination, const std::optional<Eigen::VectorXd>& full_beta,
                                Exec exec = Exec::kSerial);

/// Full synthetic experiment. Replicates run concurrently; each draws from
/// its own seed derived from (seed, replicate), and each method from
/// (seed, replicate, method), so neither scheduling nor method order affects
/// any draw.
MetricsTable run_experiment(const ExperimentConfig& cfg, Exec exec = Exec::kParallel);

/// Real-data workflow: scores every method against the full-data GLS fit of
/// `ds`. Randomized methods are repeated `repeats` times; deterministic ones
/// run once.
MetricsTable run_on_dataset(const GroupedDataset& ds, const std::vector<Method>& methods,
                            const std::vector<Index>& sizes, Index repeats, std::uint64_t seed,
                            Elimination elimination = Elimination::kAuto, Exec exec = Exec::kParallel);

}  // namespace goss
