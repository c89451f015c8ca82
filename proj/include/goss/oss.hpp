#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "goss/dataset.hpp"
#include "goss/exec.hpp"

namespace goss {

/// 1 when x and y lie on the same side of zero, 0 otherwise. Zero counts as
/// positive.
int same_sign(double x, double y);

/// Number of coordinates on which two scaled rows agree in sign.
int sign_agreement(std::span<const double> a, std::span<const double> b);

/// Pair term of the orthogonal-array discrepancy:
///   [q - |a|^2/2 - |b|^2/2 + sign_agreement(a, b)]^2,  q = row length.
double pair_discrepancy(std::span<const double> a, std::span<const double> b);

/// Loss added to candidate `z` when `z_new` joins the selection. Same value as
/// the pair term; named for its role in the sequential selector.
double incremental_loss(std::span<const double> z, std::span<const double> z_new);

/// Discrepancy of a whole scaled block from a two-level orthogonal array:
/// the sum of pair terms over all row pairs. Exact O(m^2 q) double loop.
double discrepancy(const RowMatrix& z);

/// Candidate-retention quota after iteration `iteration` (1-based) when
/// choosing `target` rows from a group of `group_size` rows. Never below
/// max(target - iteration, 1).
Index elimination_quota(Index group_size, Index target, Index iteration);

enum class Elimination {
  kAuto,  ///< on when group_size >= target^2
  kOn,
  kOff,
};

bool elimination_enabled(Elimination mode, Index group_size, Index target);

/// Per-iteration record for debugging the selector.
struct OssTraceEvent {
  Index group = 0;      ///< filled in by callers that select per group
  Index iteration = 0;  ///< 0 for the initial max-norm pick
  Index chosen = 0;     ///< row index within the block
  double loss = 0.0;    ///< accumulated loss of the chosen row (0 for the first pick)
  Index quota = 0;      ///< retention quota applied after the pick (0 if none)
  Index alive = 0;      ///< candidates still alive after pruning
};

using OssTrace = std::function<void(const OssTraceEvent&)>;

struct OssOptions {
  Elimination elimination = Elimination::kAuto;
  Exec exec = Exec::kParallel;
  OssTrace trace;
};

/// Sign pattern of each row packed into 64-bit words (bit set = negative).
/// sign_agreement(a, b) = q - popcount(a ^ b).
class SignBits {
 public:
  explicit SignBits(const RowMatrix& z);
  int agreement(Index a, Index b) const;
  Index words_per_row() const { return words_; }

 private:
  Index q_ = 0;
  Index words_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Greedy sequential selector state: the chosen rows, the accumulated loss
/// l(z | selected) of every alive candidate, and the alive set itself.
///
/// Each call to step() adds one row. The first row is the one with the
/// largest squared norm; later rows minimise the accumulated loss. Ties go to
/// the smallest row index. With elimination on, after every pick the alive
/// set is cut down to the `elimination_quota` candidates with the smallest
/// loss (measured before the new row's contribution is added).
class OssSelector {
 public:
  OssSelector(const RowMatrix& scaled, Index target, bool eliminate, Exec exec = Exec::kParallel);

  bool done() const { return static_cast<Index>(selected_.size()) == target_; }
  Index step();

  std::span<const Index> selected() const { return selected_; }
  std::span<const Index> alive() const { return alive_; }
  double loss(Index row) const { return loss_[static_cast<std::size_t>(row)]; }
  Index iteration() const { return static_cast<Index>(selected_.size()); }
  Index target() const { return target_; }

  void set_trace(OssTrace trace) { trace_ = std::move(trace); }

 private:
  void add_contribution(Index chosen);
  void prune(Index quota);

  const RowMatrix& z_;
  Index target_;
  bool eliminate_;
  Exec exec_;
  SignBits signs_;
  std::vector<double> half_norm_;  // |z|^2 / 2
  std::vector<double> loss_;
  std::vector<Index> alive_;
  std::vector<Index> selected_;
  OssTrace trace_;
};

/// Selects `target` rows of a scaled block. Throws InfeasibleError when
/// target exceeds the row count.
std::vector<Index> oss_select(const RowMatrix& scaled, Index target, const OssOptions& options = {});

}  // namespace goss
