#pragma once

#include <Eigen/Core>
#include <limits>
#include <utility>
#include <vector>

namespace testutil {

/// Exhaustive assignment: the most pairs over allowed cells, then the lowest
/// total cost. Returns {pairs, cost}.
inline std::pair<int, double> brute_force_assignment(const Eigen::MatrixXd& cost,
                                                     const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& masked) {
  const int r = static_cast<int>(cost.rows()), c = static_cast<int>(cost.cols());
  std::vector<char> used(static_cast<std::size_t>(c), 0);
  std::pair<int, double> best{-1, std::numeric_limits<double>::infinity()};
  auto rec = [&](auto&& self, int row, int n, double total) -> void {
    if (row == r) {
      if (n > best.first || (n == best.first && total < best.second)) best = {n, total};
      return;
    }
    self(self, row + 1, n, total);  // row left unassigned
    for (int i = 0; i < c; ++i) {
      if (used[static_cast<std::size_t>(i)] || masked(row, i)) continue;
      used[static_cast<std::size_t>(i)] = 1;
      self(self, row + 1, n + 1, total + cost(row, i));
      used[static_cast<std::size_t>(i)] = 0;
    }
  };
  rec(rec, 0, 0, 0.0);
  return best;
}

}  // namespace testutil
