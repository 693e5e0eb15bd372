#pragma once

#include <vector>

#include "cadsketch/losses.hpp"
#include "cadsketch/ops.hpp"
#include "cadsketch/tokens.hpp"

namespace cadsketch::eval {

/// Dense row-major n x n matrix.
struct CostMatrix {
  int n = 0;
  std::vector<double> values;

  CostMatrix() = default;
  explicit CostMatrix(int size, double fill = 0.0)
      : n(size), values(static_cast<std::size_t>(size) * size, fill) {}

  double& operator()(int row, int col) { return values[static_cast<std::size_t>(row) * n + col]; }
  double operator()(int row, int col) const { return values[static_cast<std::size_t>(row) * n + col]; }
};

/// perm[i] is the column (prediction slot) assigned to row i (target slot).
struct Assignment {
  std::vector<int> perm;
  double cost = 0.0;
};

/// Entry (i, j): sum over the 8 positions of -log max(p, 1e-9) of target slot
/// i's tokens under prediction slot j. Probabilities are [128, 73].
CostMatrix cost_matrix(const ad::Tensor& probabilities, const TokenGrid& target);

/// Minimum-cost perfect matching, O(n^3) shortest augmenting paths with
/// potentials. Throws NonFinite on NaN or infinite entries.
Assignment hungarian(const CostMatrix& cost);

double assignment_cost(const CostMatrix& cost, const std::vector<int>& perm);

nets::SlotPermutation to_slot_permutation(const Assignment& a);

}  // namespace cadsketch::eval
