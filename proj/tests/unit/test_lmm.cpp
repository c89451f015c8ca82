#include <doctest.h>

#include "goss/baselines.hpp"
#include "goss/error.hpp"
#include "goss/lmm.hpp"
#include "reference/reference.hpp"
#include "support.hpp"

using namespace goss;

namespace {

Subdata single_group(const RowMatrix& z, const Eigen::VectorXd& y) {
  Subdata s;
  s.groups.push_back({z, y});
  s.num_covariates = z.cols();
  return s;
}

Subdata random_subdata(std::mt19937_64& rng, const std::vector<Index>& sizes, Index q, double sigma_a2 = 0.5,
                       double sigma_e2 = 2.0) {
  std::normal_distribution<double> n01;
  Subdata s;
  s.num_covariates = q;
  for (Index c : sizes) {
    GroupData g;
    g.covariates = test::uniform_block(rng, c, q, -2.0, 2.0);
    const double a = std::sqrt(sigma_a2) * n01(rng);
    g.response = Eigen::VectorXd(c);
    for (Index r = 0; r < c; ++r) g.response[r] = 1.0 + g.covariates.row(r).sum() + a + std::sqrt(sigma_e2) * n01(rng);
    s.groups.push_back(std::move(g));
  }
  return s;
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("ols: exact fit") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd x(30, 4);
  x.col(0).setOnes();
  x.rightCols(3) = test::uniform_block(rng, 30, 3);
  const Eigen::Vector4d beta(0.5, -2.0, 3.0, 1.25);
  const Eigen::VectorXd y = x * beta;
  const auto b = ols_fit(x, y);
  CHECK((b - beta).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((y - x * b).norm() <= 1e-10);
}

TEST_CASE("ols: intercept only gives the mean") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 10;
  CHECK(ols_fit(x, y)[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("ols: matches the normal-equation oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 50; ++t) {
    const Index n = 20 + t, p = 2 + t % 5;
    Eigen::MatrixXd x(n, p);
    x.col(0).setOnes();
    x.rightCols(p - 1) = test::uniform_block(rng, n, p - 1, -4.0, 4.0);
    Eigen::VectorXd y(n);
    for (Index r = 0; r < n; ++r) y[r] = n01(rng);
    const Eigen::VectorXd naive = (x.transpose() * x).inverse() * (x.transpose() * y);
    CHECK((ols_fit(x, y) - naive).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("ols: singular designs are rejected") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 1,
       1, 1,
       1, 1,
       1, 1;
  CHECK_THROWS_AS(ols_fit(x, Eigen::VectorXd::Ones(4)), SingularMatrixError);
  Eigen::MatrixXd near(4, 2);
  near << 1, 1,
          1, 1 + 1e-9,
          1, 1,
          1, 1;
  CHECK_THROWS_AS(ols_fit(near, Eigen::VectorXd::Ones(4)), SingularMatrixError);
}

TEST_CASE("moments: worked example") {
  const std::vector<double> eta{1, -1, 2, 0};
  const std::vector<Index> sizes{2, 2};
  const auto vc = moment_variance_components(eta, sizes);
  CHECK(vc.sigma_e2 == 1.0);
  CHECK(vc.sigma_a2 == 0.5);
  CHECK(vc.source == VarianceSource::kMomentEstimated);
  const auto ref = reference::moment_variance_components(eta, sizes);
  CHECK(ref.sigma_e2 == 1.0);
  CHECK(ref.sigma_a2 == 0.5);
}

TEST_CASE("moments: constant residuals") {
  const std::vector<double> eta(9, 3.5);
  const auto vc = moment_variance_components(eta, std::vector<Index>{3, 3, 3});
  CHECK(vc.sigma_e2 == 0.0);
  CHECK(vc.sigma_a2 == 0.0);
}

TEST_CASE("moments: negative between-group estimate is truncated") {
  // Group means equal, strong within-group spread.
  const std::vector<double> eta{-5, 5, -5, 5, -5, 5};
  const auto vc = moment_variance_components(eta, std::vector<Index>{2, 2, 2});
  CHECK(vc.sigma_a2 == 0.0);
  CHECK(vc.sigma_e2 > 0.0);
}

TEST_CASE("moments: degenerate layouts") {
  const std::vector<double> eta{1, 2, 3};
  CHECK_THROWS_AS(moment_variance_components(eta, std::vector<Index>{1, 1, 1}), InsufficientReplicationError);
  CHECK_THROWS_AS(moment_variance_components(eta, std::vector<Index>{3}), InsufficientReplicationError);
  CHECK_THROWS_AS(moment_variance_components(eta, std::vector<Index>{2, 2}), DimensionError);
  CHECK_NOTHROW(moment_variance_components(eta, std::vector<Index>{2, 0, 1}));
}

TEST_CASE("moments: closed forms match the pairwise double sums") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    std::vector<Index> sizes;
    Index n = 0;
    while (n < 20 + 2 * t && n < 200) {
      const Index s = 1 + static_cast<Index>(rng() % 12);
      sizes.push_back(s);
      n += s;
    }
    if (sizes.size() < 2) sizes.push_back(2), n += 2;
    std::vector<double> eta(static_cast<std::size_t>(n));
    for (std::size_t i = 0, g = 0, left = static_cast<std::size_t>(sizes[0]); i < eta.size(); ++i) {
      if (left == 0) left = static_cast<std::size_t>(sizes[++g]);
      eta[i] = 3.0 * static_cast<double>(g % 4) + 5.0 + n01(rng);
      --left;
    }
    const auto fast = moment_variance_components(eta, sizes);
    const auto slow = reference::moment_variance_components(eta, sizes);
    CHECK(test::rel_err(fast.sigma_e2, slow.sigma_e2) <= 1e-9);
    if (slow.sigma_a2 > 0.0) CHECK(test::rel_err(fast.sigma_a2, slow.sigma_a2) <= 1e-9);
    else CHECK(fast.sigma_a2 <= 1e-9 * slow.sigma_e2);
  }
}

TEST_CASE("woodbury: V times the closed-form inverse is the identity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (Index n = 1; n <= 30; ++n) {
    const double sa = u(rng), se = u(rng);
    const Eigen::MatrixXd v = se * Eigen::MatrixXd::Identity(n, n) + sa * Eigen::MatrixXd::Ones(n, n);
    const double gamma = se / (se + static_cast<double>(n) * sa);
    const Eigen::MatrixXd v_inv =
        (Eigen::MatrixXd::Identity(n, n) - (1.0 - gamma) / static_cast<double>(n) * Eigen::MatrixXd::Ones(n, n)) / se;
    CHECK((v * v_inv - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("gls: structured system matches the dense-V oracle") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<Index> sizes;
    Index n = 0;
    while (n < 12 + t % 45) {
      const Index s = 1 + static_cast<Index>(rng() % 9);
      sizes.push_back(s);
      n += s;
    }
    const auto sub = random_subdata(rng, sizes, 1 + t % 4);
    const VarianceComponents vc{u(rng), u(rng), VarianceSource::kKnown};
    const auto dense = reference::dense_gls(sub, vc);
    const auto sys = gls_system(sub, vc, Exec::kSerial);
    const auto fit = gls_fit(sub, vc, Exec::kSerial);
    CHECK((fit.beta - dense.beta).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((sys.information - dense.information).cwiseAbs().maxCoeff() <= 1e-8 * dense.information.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("gls: sigma_A^2 = 0 reduces to OLS") {
  std::mt19937_64 rng(11);
  const auto sub = random_subdata(rng, {10, 14, 9}, 3);
  const auto fit = gls_fit(sub, {0.0, 2.0, VarianceSource::kKnown});
  CHECK((fit.beta - ols_fit(sub.design(), sub.response())).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("gls: non-positive error variance is rejected") {
  std::mt19937_64 rng(13);
  const auto sub = random_subdata(rng, {5, 5}, 1);
  CHECK_THROWS_AS(gls_fit(sub, {0.5, 0.0, VarianceSource::kKnown}), NumericalError);
}

TEST_CASE("gls: equal OAs per group give a diagonal information matrix") {
  const auto oa = test::oa8x4();
  const double sa = 0.5, se = 9.0;
  Subdata sub;
  sub.num_covariates = 4;
  for (int i = 0; i < 3; ++i) sub.groups.push_back({oa, Eigen::VectorXd::Zero(8)});
  const auto m = gls_system(sub, {sa, se, VarianceSource::kKnown}).information;
  const double gamma = se / (se + 8.0 * sa);
  Eigen::VectorXd diag(5);
  diag << 3.0 * gamma * 8.0 / se, 24.0 / se, 24.0 / se, 24.0 / se, 24.0 / se;
  CHECK((m - Eigen::MatrixXd(diag.asDiagonal())).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("information: single 4x3 OA") {
  const auto sub = single_group(test::oa4x3(), Eigen::VectorXd::Zero(4));
  const auto info = information_metrics(sub, {0.0, 1.0, VarianceSource::kKnown});
  CHECK(std::exp(info.log_det_M) == doctest::Approx(256.0).epsilon(1e-12));
  CHECK(info.trace_Minv == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(info.d_bound == doctest::Approx(256.0).epsilon(1e-12));
  CHECK(info.a_bound == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("information: equal OAs attain both bounds") {
  const auto oa = test::oa8x4();
  for (auto [sa, se] : {std::pair{0.0, 1.0}, std::pair{0.5, 9.0}, std::pair{3.0, 0.25}}) {
    Subdata sub;
    sub.num_covariates = 4;
    for (int i = 0; i < 5; ++i) sub.groups.push_back({oa, Eigen::VectorXd::Zero(8)});
    const auto info = information_metrics(sub, {sa, se, VarianceSource::kKnown});
    CHECK(test::rel_err(info.log_det_M, info.log_d_bound) <= 1e-10);
    CHECK(test::rel_err(info.trace_Minv, info.a_bound) <= 1e-10);

    // Bound formulas evaluated directly.
    const double r = 5, n = 40, p = 5;
    const double d = r * std::pow(n, p) / (std::pow(se, p - 1) * (r * se + n * sa));
    CHECK(test::rel_err(info.d_bound, d) <= 1e-12);
    CHECK(test::rel_err(info.a_bound, (p * se + n / r * sa) / n) <= 1e-12);
  }
}

TEST_CASE("information: random selections never beat the bounds") {
  std::mt19937_64 rng(15);
  std::vector<RowMatrix> blocks;
  for (int i = 0; i < 4; ++i) blocks.push_back(test::uniform_block(rng, 200, 4));
  const auto ds = test::make_dataset(std::move(blocks), rng);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto sel = select_subdata(ds, 32, {seed % 2 ? Method::kGunif : Method::kUnif, seed, {}});
    const auto sub = extract_subdata(ds, sel);
    for (auto [sa, se] : {std::pair{0.0, 1.0}, std::pair{0.5, 9.0}}) {
      try {
        const auto info = information_metrics(sub, {sa, se, VarianceSource::kKnown});
        CHECK(info.log_det_M <= info.log_d_bound + 1e-8);
        CHECK(info.trace_Minv >= info.a_bound - 1e-8);
        ++checked;
      } catch (const SingularMatrixError&) {
      }
    }
  }
  CHECK(checked > 350);
}

TEST_CASE("information: bounds use the number of nonempty groups") {
  InformationSummary a, b;
  fill_bounds(a, 40, 5, 5, {0.5, 9.0, VarianceSource::kKnown});
  const auto oa = test::oa8x4();
  Subdata sub;
  sub.num_covariates = 4;
  for (int i = 0; i < 5; ++i) sub.groups.push_back({oa, Eigen::VectorXd::Zero(8)});
  sub.groups.push_back({RowMatrix(0, 4), Eigen::VectorXd(0)});
  b = information_metrics(sub, {0.5, 9.0, VarianceSource::kKnown});
  CHECK(a.log_d_bound == doctest::Approx(b.log_d_bound).epsilon(1e-14));
  CHECK(a.a_bound == doctest::Approx(b.a_bound).epsilon(1e-14));
}

TEST_CASE("gls: serial and parallel are bitwise equal") {
  test::ThreadScope threads(4);
  std::mt19937_64 rng(17);
  std::vector<Index> sizes(60, 25);
  const auto sub = random_subdata(rng, sizes, 5);
  const VarianceComponents vc{0.7, 3.0, VarianceSource::kKnown};
  const auto a = gls_system(sub, vc, Exec::kSerial);
  const auto b = gls_system(sub, vc, Exec::kParallel);
  CHECK(a.information == b.information);
  CHECK(a.rhs == b.rhs);
}

TEST_CASE("gls: unbiased over repeated noise with a fixed design") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> n01;
  const std::vector<Index> sizes{6, 8, 5, 7, 9, 6};
  auto sub = random_subdata(rng, sizes, 2);
  const Eigen::Vector3d beta(1.0, -0.5, 2.0);
  const double sa = 0.8, se = 1.5;
  const int reps = 2000;
  Eigen::MatrixXd draws(reps, 3);
  for (int b = 0; b < reps; ++b) {
    for (auto& g : sub.groups) {
      const double a = std::sqrt(sa) * n01(rng);
      for (Index r = 0; r < g.size(); ++r)
        g.response[r] = beta[0] + g.covariates.row(r).dot(beta.tail(2)) + a + std::sqrt(se) * n01(rng);
    }
    draws.row(b) = gls_fit(sub, {sa, se, VarianceSource::kKnown}).beta.transpose();
  }
  for (Index k = 0; k < 3; ++k) {
    const double mean = draws.col(k).mean();
    const double sd = std::sqrt((draws.col(k).array() - mean).square().sum() / (reps - 1));
    CHECK(std::abs(mean - beta[k]) <= 3.0 * sd / std::sqrt(static_cast<double>(reps)));
  }
}

TEST_CASE("blup") {
  Subdata sub = single_group(RowMatrix::Zero(2, 1), Eigen::Vector2d(1.0, 1.0));
  const Eigen::Vector2d beta(0.0, 0.0);
  CHECK(blup_random_effects(sub, beta, {1.0, 1.0, VarianceSource::kKnown})[0] == doctest::Approx(2.0 / 3.0));
  CHECK(blup_random_effects(sub, beta, {0.0, 1.0, VarianceSource::kKnown})[0] == 0.0);
  CHECK(blup_random_effects(sub, Eigen::Vector2d(1.0, 0.0), {1.0, 1.0, VarianceSource::kKnown})[0] == 0.0);

  sub.groups.push_back({RowMatrix(0, 1), Eigen::VectorXd(0)});
  const auto effects = blup_random_effects(sub, beta, {1.0, 1.0, VarianceSource::kKnown});
  CHECK(effects.size() == 2);
  CHECK(effects[1] == 0.0);
}

TEST_CASE("predict_full: exact model and loop oracle") {
  std::mt19937_64 rng(21);
  std::vector<GroupBlock> groups;
  const Eigen::Vector3d beta(2.0, -1.0, 0.5);
  for (int i = 0; i < 3; ++i) {
    GroupBlock g;
    g.group_id = std::to_string(i);
    g.covariates = test::uniform_block(rng, 10 + i, 2);
    g.response = (g.covariates * beta.tail(2)).array() + beta[0] + 0.25 * i;
    groups.push_back(std::move(g));
  }
  const GroupedDataset ds(std::move(groups));
  const std::vector<double> exact{0.0, 0.25, 0.5};
  CHECK(predict_full(ds, beta, exact).mspe == doctest::Approx(0.0));

  const Eigen::Vector3d off(1.5, -1.0, 0.4);
  const std::vector<double> effects{0.1, -0.2, 0.3};
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < 3; ++i)
    for (Index r = 0; r < ds.group(i).size(); ++r) {
      const double pred = off[0] + ds.group(i).covariates.row(r).dot(off.tail(2)) + effects[static_cast<std::size_t>(i)];
      sum += std::pow(ds.group(i).response[r] - pred, 2);
      ++count;
    }
  const auto pred = predict_full(ds, off, effects);
  CHECK(pred.mspe == doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));

  // Shifting every effect by c: MSPE(c) = MSPE - 2 c mean(residual) + c^2.
  double resid_mean = 0.0;
  for (Index i = 0; i < 3; ++i) resid_mean += (ds.group(i).response - pred.fitted[static_cast<std::size_t>(i)]).sum();
  resid_mean /= static_cast<double>(count);
  const double c = 0.7;
  std::vector<double> shifted = effects;
  for (auto& e : shifted) e += c;
  CHECK(predict_full(ds, off, shifted).mspe ==
        doctest::Approx(pred.mspe - 2.0 * c * resid_mean + c * c).epsilon(1e-12));

  CHECK_THROWS_AS(predict_full(ds, Eigen::Vector2d(1, 1), exact), DimensionError);
  CHECK_THROWS_AS(predict_full(ds, beta, std::vector<double>{0.0}), DimensionError);
}

TEST_CASE("fit_lmm: known variances bypass the moment step") {
  std::mt19937_64 rng(23);
  const auto sub = random_subdata(rng, {12, 9, 15, 11}, 3);
  const VarianceComponents vc{0.4, 1.7, VarianceSource::kKnown};
  const auto fit = fit_lmm(sub, vc);
  CHECK(fit.varcomps.source == VarianceSource::kKnown);
  CHECK(fit.beta == gls_fit(sub, vc).beta);

  const auto est = fit_lmm(sub);
  CHECK(est.varcomps.source == VarianceSource::kMomentEstimated);
  const Eigen::VectorXd y = sub.response();
  const Eigen::MatrixXd x = sub.design();
  const Eigen::VectorXd resid = y - x * ols_fit(x, y);
  const auto sizes = sub.group_sizes();
  const auto vc2 = moment_variance_components(as_vector(resid), sizes);
  CHECK(est.varcomps.sigma_e2 == vc2.sigma_e2);
  CHECK(est.varcomps.sigma_a2 == vc2.sigma_a2);
}

TEST_CASE("fit_lmm: exact data with known variances has zero residuals") {
  std::mt19937_64 rng(25);
  Subdata sub = random_subdata(rng, {6, 7, 8}, 2);
  for (auto& g : sub.groups) g.response = (g.covariates * Eigen::Vector2d(1.0, -3.0)).array() + 4.0;
  const auto fit = fit_lmm(sub, VarianceComponents{0.5, 1.0, VarianceSource::kKnown});
  CHECK((sub.response() - sub.design() * fit.beta).norm() <= 1e-10);
}

TEST_CASE("extract_subdata keeps original units and group alignment") {
  std::mt19937_64 rng(27);
  const auto ds = test::random_dataset(rng, {5, 6}, 2);
  SubsampleSelection sel{{{4, 1}, {}}};
  const auto sub = extract_subdata(ds, sel);
  CHECK(sub.groups.size() == 2);
  CHECK(sub.total_rows() == 2);
  CHECK(sub.nonempty_groups() == 1);
  CHECK(sub.groups[0].covariates.row(0) == ds.group(0).covariates.row(4));
  CHECK(sub.groups[0].response[1] == ds.group(0).response[1]);
  CHECK(sub.groups[1].size() == 0);
}
