#include "goss/oss.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "goss/error.hpp"

namespace goss {
namespace {

constexpr const char* kModule = "oss_core";

struct Candidate {
  double loss = std::numeric_limits<double>::infinity();
  Index row = std::numeric_limits<Index>::max();
};

bool better(const Candidate& a, const Candidate& b) {
  return a.loss < b.loss || (a.loss == b.loss && a.row < b.row);
}

}  // namespace

int same_sign(double x, double y) { return (x >= 0.0) == (y >= 0.0) ? 1 : 0; }

int sign_agreement(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError(kModule, "row lengths differ (" + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()) + ")");
  int count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) count += same_sign(a[k], b[k]);
  return count;
}

double pair_discrepancy(std::span<const double> a, std::span<const double> b) {
  const int agree = sign_agreement(a, b);
  double na = 0.0, nb = 0.0;
  for (double v : a) na += v * v;
  for (double v : b) nb += v * v;
  const double t = static_cast<double>(a.size()) - na / 2.0 - nb / 2.0 + agree;
  return t * t;
}

double incremental_loss(std::span<const double> z, std::span<const double> z_new) {
  return pair_discrepancy(z, z_new);
}

double discrepancy(const RowMatrix& z) {
  double total = 0.0;
  const auto q = static_cast<std::size_t>(z.cols());
  for (Index j = 0; j < z.rows(); ++j) {
    std::span<const double> a(z.row(j).data(), q);
    for (Index k = j + 1; k < z.rows(); ++k) total += pair_discrepancy(a, {z.row(k).data(), q});
  }
  return total;
}

Index elimination_quota(Index group_size, Index target, Index iteration) {
  if (iteration < 1 || iteration >= target)
    throw DataError(kModule, "elimination quota needs 1 <= iteration < target");
  Index quota = 0;
  if (group_size >= target * target) {
    quota = group_size / iteration;
  } else {
    const double r = std::log(static_cast<double>(group_size)) / std::log(static_cast<double>(target));
    quota = static_cast<Index>(
        std::floor(static_cast<double>(group_size) / std::pow(static_cast<double>(iteration), r - 1.0)));
  }
  return std::max({quota, target - iteration, Index{1}});
}

bool elimination_enabled(Elimination mode, Index group_size, Index target) {
  switch (mode) {
    case Elimination::kOn: return true;
    case Elimination::kOff: return false;
    case Elimination::kAuto: return group_size >= target * target;
  }
  return false;
}

SignBits::SignBits(const RowMatrix& z) : q_(z.cols()), words_((z.cols() + 63) / 64) {
  bits_.assign(static_cast<std::size_t>(z.rows() * words_), 0);
  for (Index r = 0; r < z.rows(); ++r) {
    std::uint64_t* row = bits_.data() + r * words_;
    for (Index k = 0; k < q_; ++k)
      if (z(r, k) < 0.0) row[k / 64] |= std::uint64_t{1} << (k % 64);
  }
}

int SignBits::agreement(Index a, Index b) const {
  const std::uint64_t* ra = bits_.data() + a * words_;
  const std::uint64_t* rb = bits_.data() + b * words_;
  int differ = 0;
  for (Index w = 0; w < words_; ++w) differ += std::popcount(ra[w] ^ rb[w]);
  return static_cast<int>(q_) - differ;
}

OssSelector::OssSelector(const RowMatrix& scaled, Index target, bool eliminate, Exec exec)
    : z_(scaled), target_(target), eliminate_(eliminate), exec_(exec), signs_(scaled) {
  if (target < 0 || target > scaled.rows())
    throw InfeasibleError(kModule, "cannot select " + std::to_string(target) + " rows from a block of " +
                                       std::to_string(scaled.rows()));
  const Index rows = scaled.rows();
  half_norm_.resize(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) half_norm_[static_cast<std::size_t>(r)] = scaled.row(r).squaredNorm() / 2.0;
  loss_.assign(static_cast<std::size_t>(rows), 0.0);
  selected_.reserve(static_cast<std::size_t>(target));
}

void OssSelector::add_contribution(Index chosen) {
  const double base = static_cast<double>(z_.cols()) - half_norm_[static_cast<std::size_t>(chosen)];
  const auto count = static_cast<Index>(alive_.size());
#pragma omp parallel for schedule(static) if (is_parallel(exec_) && count > 4096)
  for (Index a = 0; a < count; ++a) {
    const Index c = alive_[static_cast<std::size_t>(a)];
    const double t = base - half_norm_[static_cast<std::size_t>(c)] + signs_.agreement(c, chosen);
    loss_[static_cast<std::size_t>(c)] += t * t;
  }
}

void OssSelector::prune(Index quota) {
  if (quota >= static_cast<Index>(alive_.size())) return;
  auto cmp = [this](Index a, Index b) {
    return better({loss_[static_cast<std::size_t>(a)], a}, {loss_[static_cast<std::size_t>(b)], b});
  };
  std::nth_element(alive_.begin(), alive_.begin() + quota, alive_.end(), cmp);
  alive_.resize(static_cast<std::size_t>(quota));
}

Index OssSelector::step() {
  if (done()) throw DataError(kModule, "selector already holds the target number of rows");

  if (selected_.empty()) {
    Index first = 0;
    for (Index r = 1; r < z_.rows(); ++r)
      if (half_norm_[static_cast<std::size_t>(r)] > half_norm_[static_cast<std::size_t>(first)]) first = r;
    selected_.push_back(first);
    alive_.clear();
    alive_.reserve(static_cast<std::size_t>(z_.rows() - 1));
    for (Index r = 0; r < z_.rows(); ++r)
      if (r != first) alive_.push_back(r);
    if (!done()) add_contribution(first);
    if (trace_) trace_({0, 0, first, 0.0, 0, static_cast<Index>(alive_.size())});
    return first;
  }

  const Index j = static_cast<Index>(selected_.size());
  const auto count = static_cast<Index>(alive_.size());
  Candidate best;
  if (is_parallel(exec_) && count > 4096) {
#pragma omp parallel
    {
      Candidate local;
#pragma omp for schedule(static) nowait
      for (Index a = 0; a < count; ++a) {
        const Index c = alive_[static_cast<std::size_t>(a)];
        Candidate cand{loss_[static_cast<std::size_t>(c)], c};
        if (better(cand, local)) local = cand;
      }
#pragma omp critical(goss_oss_argmin)
      if (better(local, best)) best = local;
    }
  } else {
    for (Index a = 0; a < count; ++a) {
      const Index c = alive_[static_cast<std::size_t>(a)];
      Candidate cand{loss_[static_cast<std::size_t>(c)], c};
      if (better(cand, best)) best = cand;
    }
  }

  auto pos = std::find(alive_.begin(), alive_.end(), best.row);
  *pos = alive_.back();
  alive_.pop_back();
  selected_.push_back(best.row);

  Index quota = 0;
  if (!done()) {
    if (eliminate_) {
      quota = elimination_quota(z_.rows(), target_, j);
      prune(quota);
    }
    add_contribution(best.row);
  }
  if (trace_) trace_({0, j, best.row, best.loss, quota, static_cast<Index>(alive_.size())});
  return best.row;
}

std::vector<Index> oss_select(const RowMatrix& scaled, Index target, const OssOptions& options) {
  if (target > scaled.rows())
    throw InfeasibleError(kModule, "target size " + std::to_string(target) + " exceeds group size " +
                                       std::to_string(scaled.rows()));
  if (target <= 0) return {};
  OssSelector selector(scaled, target, elimination_enabled(options.elimination, scaled.rows(), target),
                       options.exec);
  if (options.trace) selector.set_trace(options.trace);
  while (!selector.done()) selector.step();
  auto sel = selector.selected();
  return {sel.begin(), sel.end()};
}

}  // namespace goss
