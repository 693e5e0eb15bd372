#include "cadsketch/matching.hpp"

#include <cmath>
#include <limits>

#include "cadsketch/error.hpp"

namespace cadsketch::eval {

CostMatrix cost_matrix(const ad::Tensor& probabilities, const TokenGrid& target) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != token::kSequenceLength ||
      probabilities.dim(1) != token::kVocabSize) {
    throw Error(ErrorCode::ShapeMismatch,
                "cost_matrix expects (128,73), got " + ad::shape_string(probabilities.shape()));
  }
  const auto p = probabilities.data();
  CostMatrix cost(kMaxPrimitives);
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int j = 0; j < kMaxPrimitives; ++j) {
      double c = 0.0;
      for (int t = 0; t < token::kPerSlot; ++t) {
        const int tok = target.slots[i][t];
        const float v = p[static_cast<std::size_t>(j * token::kPerSlot + t) * token::kVocabSize + tok];
        c -= std::log(std::max(static_cast<double>(v), 1e-9));
      }
      cost(i, j) = c;
    }
  }
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  const int n = cost.n;
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "cost matrix has a non-finite entry");
  }
  Assignment out;
  if (n == 0) return out;
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based rows/columns; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.perm.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.perm[match[j] - 1] = j - 1;
  out.cost = assignment_cost(cost, out.perm);
  return out;
}

double assignment_cost(const CostMatrix& cost, const std::vector<int>& perm) {
  double total = 0.0;
  for (int i = 0; i < cost.n; ++i) total += cost(i, perm[i]);
  return total;
}

nets::SlotPermutation to_slot_permutation(const Assignment& a) {
  if (static_cast<int>(a.perm.size()) != kMaxPrimitives) {
    throw Error(ErrorCode::InvalidPermutation, "assignment does not cover 16 slots");
  }
  nets::SlotPermutation p{};
  for (int i = 0; i < kMaxPrimitives; ++i) p[i] = a.perm[i];
  nets::check_permutation(p);
  return p;
}

}  // namespace cadsketch::eval
