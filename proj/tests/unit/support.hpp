#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "goss/dataset.hpp"
#include "goss/exec.hpp"

namespace goss::test {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline RowMatrix uniform_block(std::mt19937_64& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RowMatrix z(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index k = 0; k < cols; ++k) z(r, k) = u(rng);
  return z;
}

inline RowMatrix pm_one_block(std::mt19937_64& rng, Index rows, Index cols) {
  std::bernoulli_distribution coin(0.5);
  RowMatrix z(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index k = 0; k < cols; ++k) z(r, k) = coin(rng) ? 1.0 : -1.0;
  return z;
}

/// 4 x 3 two-level orthogonal array.
inline RowMatrix oa4x3() {
  RowMatrix z(4, 3);
  z << 1, 1, 1,
       1, -1, -1,
      -1, 1, -1,
      -1, -1, 1;
  return z;
}

/// 8 x 4 two-level orthogonal array: the 2^3 factorial in A, B, C plus ABC.
inline RowMatrix oa8x4() {
  RowMatrix z(8, 4);
  Index r = 0;
  for (int a : {-1, 1})
    for (int b : {-1, 1})
      for (int c : {-1, 1}) {
        z(r, 0) = a;
        z(r, 1) = b;
        z(r, 2) = c;
        z(r, 3) = a * b * c;
        ++r;
      }
  return z;
}

/// Block holding `oa` at random positions among `filler` rows drawn from
/// (-bound, bound). `positions` receives the OA rows' indices (sorted).
inline RowMatrix embed_oa(const RowMatrix& oa, Index filler, double bound, std::mt19937_64& rng,
                          std::vector<Index>& positions) {
  const Index rows = oa.rows() + filler;
  std::vector<Index> order(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  positions.assign(order.begin(), order.begin() + oa.rows());
  RowMatrix z = uniform_block(rng, rows, oa.cols(), -bound, bound);
  for (Index k = 0; k < oa.rows(); ++k) z.row(positions[static_cast<std::size_t>(k)]) = oa.row(k);
  std::sort(positions.begin(), positions.end());
  return z;
}

inline GroupedDataset make_dataset(std::vector<RowMatrix> blocks, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<GroupBlock> groups;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    GroupBlock g;
    g.group_id = "g" + std::to_string(i);
    g.response = Eigen::VectorXd(blocks[i].rows());
    for (Index r = 0; r < blocks[i].rows(); ++r)
      g.response[r] = 1.0 + blocks[i].row(r).sum() + 0.3 * static_cast<double>(i) + noise(rng);
    g.covariates = std::move(blocks[i]);
    groups.push_back(std::move(g));
  }
  return GroupedDataset(std::move(groups));
}

inline GroupedDataset random_dataset(std::mt19937_64& rng, const std::vector<Index>& sizes, Index q) {
  std::vector<RowMatrix> blocks;
  for (Index c : sizes) blocks.push_back(uniform_block(rng, c, q));
  return make_dataset(std::move(blocks), rng);
}

/// Restores the OpenMP team size on scope exit.
struct ThreadScope {
  int saved;
  explicit ThreadScope(int threads) : saved(thread_count()) { set_thread_count(threads); }
  ~ThreadScope() { set_thread_count(saved); }
};

}  // namespace goss::test
