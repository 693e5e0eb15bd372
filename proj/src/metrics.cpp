#include "cadsketch/metrics.hpp"

#include <limits>
#include <vector>

#include "cadsketch/error.hpp"

namespace cadsketch::eval {

namespace {

void require_same_dims(const SketchImage& a, const SketchImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::ShapeMismatch, "image dims " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                              " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

struct Pixel {
  int row;
  int col;
};

std::vector<Pixel> foreground(const SketchImage& img) {
  std::vector<Pixel> out;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (img.at(r, c) > 0.5f) out.push_back({r, c});
    }
  }
  return out;
}

double directed(const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
  double total = 0.0;
  for (const Pixel& p : from) {
    long best = std::numeric_limits<long>::max();
    for (const Pixel& q : to) {
      const long dr = p.row - q.row;
      const long dc = p.col - q.col;
      best = std::min(best, dr * dr + dc * dc);
      if (best == 0) break;
    }
    total += static_cast<double>(best);
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

TokenScore metric_acc(const TokenGrid& pred, const TokenGrid& target, const nets::SlotPermutation& perm) {
  nets::check_permutation(perm);
  std::size_t hits = 0;
  std::size_t count = 0;
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int t = 0; t < token::kPerSlot; ++t) {
      const int truth = target.slots[i][t];
      if (truth <= 0) continue;
      ++count;
      if (pred.slots[perm[i]][t] == truth) ++hits;
    }
  }
  return {count == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(count), count};
}

TokenScore metric_param_mse(const TokenGrid& pred, const TokenGrid& target, const nets::SlotPermutation& perm) {
  nets::check_permutation(perm);
  double total = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int t = 0; t < token::kPerSlot; ++t) {
      const int truth = target.slots[i][t];
      if (!token::is_param(truth)) continue;
      ++count;
      const double d = truth - pred.slots[perm[i]][t];
      total += d * d;
    }
  }
  return {count == 0 ? 0.0 : total / static_cast<double>(count), count};
}

double metric_img_mse(const SketchImage& pred, const SketchImage& target) {
  require_same_dims(pred, target);
  double fg = 0.0;
  double all = 0.0;
  std::size_t n_fg = 0;
  for (std::size_t k = 0; k < target.pixels.size(); ++k) {
    const double d = static_cast<double>(pred.pixels[k]) - target.pixels[k];
    all += d * d;
    if (target.pixels[k] == 1.0f) {
      fg += d * d;
      ++n_fg;
    }
  }
  const double fg_term = n_fg == 0 ? 0.0 : fg / static_cast<double>(n_fg);
  const double all_term = target.pixels.empty() ? 0.0 : all / static_cast<double>(target.pixels.size());
  return 0.5 * fg_term + 0.5 * all_term;
}

double chamfer_sentinel(int width, int height) {
  return static_cast<double>(width) * width + static_cast<double>(height) * height;
}

ChamferResult metric_chamfer(const SketchImage& pred, const SketchImage& target) {
  require_same_dims(pred, target);
  const auto a = foreground(pred);
  const auto b = foreground(target);
  ChamferResult r;
  r.pred_foreground = a.size();
  r.target_foreground = b.size();
  if (a.empty() && b.empty()) return r;
  if (a.empty() || b.empty()) {
    r.value = chamfer_sentinel(pred.width, pred.height);
    r.empty_foreground = true;
    return r;
  }
  r.value = 0.5 * directed(a, b) + 0.5 * directed(b, a);
  return r;
}

}  // namespace cadsketch::eval
