#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cadsketch/error.hpp"
#include "cadsketch/matching.hpp"
#include "cadsketch/metrics.hpp"
#include "cadsketch/nets.hpp"
#include "cadsketch/ops.hpp"
#include "cadsketch/synthgen.hpp"

using namespace cadsketch;
using namespace cadsketch::eval;

namespace {

double brute_force(const CostMatrix& c) {
  std::vector<int> p(static_cast<std::size_t>(c.n));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (int i = 0; i < c.n; ++i) s += c(i, p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

bool is_permutation(const std::vector<int>& p) {
  std::vector<int> s = p;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != static_cast<int>(i)) return false;
  }
  return true;
}

// Nearest-neighbour chamfer written independently of the library.
double chamfer_oracle(const SketchImage& a, const SketchImage& b) {
  auto points = [](const SketchImage& img) {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        if (img.at(r, c) > 0.5f) out.emplace_back(r, c);
      }
    }
    return out;
  };
  const auto pa = points(a), pb = points(b);
  auto directed = [](const auto& from, const auto& to) {
    double total = 0;
    for (const auto& [r, c] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [r2, c2] : to) best = std::min(best, double((r - r2) * (r - r2) + (c - c2) * (c - c2)));
      total += best;
    }
    return total / from.size();
  };
  return 0.5 * directed(pa, pb) + 0.5 * directed(pb, pa);
}

SketchImage random_sketch_image(RandomSource& rng) {
  GeneratorConfig cfg;
  cfg.min_primitives = 1;
  cfg.max_primitives = 4;
  return rasterize(sample_sketch(cfg, rng).sketch, 48, 48);
}

}  // namespace

TEST_CASE("hungarian examples") {
  CostMatrix id(4, 1.0);
  for (int i = 0; i < 4; ++i) id(i, i) = 0.0;
  const auto a = hungarian(id);
  CHECK(a.cost == 0.0);
  CHECK(a.perm == std::vector<int>{0, 1, 2, 3});

  CostMatrix m(3);
  m.values = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto b = hungarian(m);
  CHECK(b.cost == 5.0);
  CHECK(b.perm == std::vector<int>{1, 0, 2});
  CHECK(brute_force(m) == 5.0);

  CostMatrix bad(2, 0.0);
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hungarian(bad), Error);
  bad(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian(bad), Error);
}

TEST_CASE("hungarian equals brute force and respects bounds") {
  RandomSource rng(77);
  for (int n = 1; n <= 7; ++n) {
    for (int trial = 0; trial < 100; ++trial) {
      CostMatrix c(n);
      for (double& v : c.values) v = trial % 2 ? rng.uniform(0, 10) : rng.uniform_int(0, 5);
      const auto a = hungarian(c);
      REQUIRE(is_permutation(a.perm));
      CHECK(a.cost == doctest::Approx(brute_force(c)).epsilon(1e-12));
      CHECK(a.cost == doctest::Approx(assignment_cost(c, a.perm)).epsilon(1e-12));
      std::vector<int> identity(static_cast<std::size_t>(n));
      std::iota(identity.begin(), identity.end(), 0);
      CHECK(a.cost <= assignment_cost(c, identity) + 1e-12);
      CostMatrix shifted = c;
      for (double& v : shifted.values) v += 3.25;
      CHECK(hungarian(shifted).perm == a.perm);
    }
  }
}

TEST_CASE("cost matrix") {
  GeneratorConfig cfg;
  RandomSource rng(8);
  const TokenGrid g = sample_sketch(cfg, rng).grid;
  const CostMatrix hot = cost_matrix(nets::one_hot(g), g);
  for (int i = 0; i < 16; ++i) {
    CHECK(hot(i, i) == doctest::Approx(0.0).epsilon(1e-12));
    for (int j = 0; j < 16; ++j) {
      if (g.slots[i] != g.slots[j]) CHECK(hot(i, j) > 0.0);
    }
  }
  const ad::Tensor uniform({128, 73}, 1.0f / 73.0f);
  const CostMatrix u = cost_matrix(uniform, g);
  for (double v : u.values) CHECK(v == doctest::Approx(8 * std::log(73.0)).epsilon(1e-6));

  ad::Tensor logits({128, 73});
  for (float& v : logits.data()) v = static_cast<float>(rng.normal());
  const ad::Tensor probs = ad::softmax(logits);
  const CostMatrix base = cost_matrix(probs, g);
  TokenGrid permuted;
  std::array<int, 16> sigma;
  std::iota(sigma.begin(), sigma.end(), 0);
  std::reverse(sigma.begin(), sigma.end());
  for (int i = 0; i < 16; ++i) permuted.slots[i] = g.slots[sigma[i]];
  const CostMatrix p = cost_matrix(probs, permuted);
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) CHECK(p(i, j) == base(sigma[i], j));
  }
  const auto a = hungarian(base);
  CHECK(a.cost <= assignment_cost(base, std::vector<int>(nets::identity_permutation().begin(),
                                                         nets::identity_permutation().end())));
}

TEST_CASE("accuracy and parameter mse") {
  TokenGrid t;
  t.slots[0] = {5, 10, 12, 20, 30, 72, 0, 0};  // 6 non-padding tokens
  t.slots[1] = {6, 40, 41, 71, 0, 0, 0, 0};    // 4 non-padding tokens
  const auto id = nets::identity_permutation();
  CHECK(metric_acc(t, t, id).value == 1.0);
  CHECK(metric_acc(t, t, id).count == 10);
  CHECK(metric_acc(TokenGrid{}, t, id).value == 0.0);
  CHECK(metric_acc(TokenGrid{}, TokenGrid{}, id).value == 1.0);
  TokenGrid p = t;
  p.slots[1][2] = 50;
  CHECK(metric_acc(p, t, id).value == doctest::Approx(0.9));

  CHECK(metric_param_mse(t, t, id).value == 0.0);
  TokenGrid line;
  line.slots[0] = {5, 10, 12, 20, 30, 72, 0, 0};
  TokenGrid off = line;
  off.slots[0][3] = 22;
  CHECK(metric_param_mse(off, line, id).value == 1.0);
  CHECK(metric_param_mse(off, line, id).count == 4);
  TokenGrid wrong_type = line;
  wrong_type.slots[0][0] = 3;
  wrong_type.slots[0][5] = 71;
  CHECK(metric_param_mse(wrong_type, line, id).value == 0.0);
  CHECK(metric_param_mse(TokenGrid{}, TokenGrid{}, id).value == 0.0);

  // Jointly permuting prediction slots and the assignment leaves Acc unchanged.
  auto perm = id;
  std::reverse(perm.begin(), perm.end());
  TokenGrid moved;
  for (int i = 0; i < 16; ++i) moved.slots[perm[i]] = p.slots[i];
  CHECK(metric_acc(moved, t, perm).value == metric_acc(p, t, id).value);
}

TEST_CASE("image mse") {
  SketchImage a(10, 10);
  CHECK(metric_img_mse(a, a) == 0.0);
  const SketchImage ones(10, 10, 1.0f);
  CHECK(metric_img_mse(a, ones) == doctest::Approx(1.0));
  SketchImage tenth(10, 10);
  for (int c = 0; c < 10; ++c) tenth.at(3, c) = 1.0f;
  CHECK(metric_img_mse(a, tenth) == doctest::Approx(0.55));
  SketchImage grey(10, 10, 0.5f);
  CHECK(metric_img_mse(grey, a) == doctest::Approx(0.5 * 0.25));
  CHECK_THROWS_AS(metric_img_mse(a, SketchImage(5, 5)), Error);
}

TEST_CASE("chamfer distance") {
  SketchImage a(16, 16), b(16, 16);
  a.at(4, 4) = 1.0f;
  b.at(4, 7) = 1.0f;
  CHECK(metric_chamfer(a, b).value == 9.0);
  CHECK(metric_chamfer(a, a).value == 0.0);

  RandomSource rng(10);
  for (int i = 0; i < 20; ++i) {
    const SketchImage x = random_sketch_image(rng), y = random_sketch_image(rng);
    const double xy = metric_chamfer(x, y).value;
    CHECK(xy == doctest::Approx(chamfer_oracle(x, y)).epsilon(1e-12));
    CHECK(xy == metric_chamfer(y, x).value);
    CHECK(metric_chamfer(x, x).value == 0.0);
    SketchImage shifted(48, 48);
    for (int r = 0; r < 48; ++r) {
      for (int c = 1; c < 48; ++c) shifted.at(r, c) = x.at(r, c - 1);
    }
    if (shifted.foreground_count() > 0) CHECK(metric_chamfer(x, shifted).value <= 2.0);
  }

  const SketchImage empty(16, 16);
  const auto e = metric_chamfer(empty, a);
  CHECK(e.empty_foreground);
  CHECK(e.value == chamfer_sentinel(16, 16));
  CHECK(e.value == 512.0);
  CHECK(metric_chamfer(empty, empty).value == 0.0);
  CHECK_FALSE(metric_chamfer(empty, empty).empty_foreground);
}
