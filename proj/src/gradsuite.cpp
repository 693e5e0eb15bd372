#include "cadsketch/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "cadsketch/losses.hpp"
#include "cadsketch/pipeline.hpp"
#include "cadsketch/synthgen.hpp"

namespace cadsketch {

namespace {

using ad::Shape;
using ad::Tensor;

Tensor random_tensor(Shape shape, RandomSource& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

/// Keeps values at least `gap` away from zero so kinked ops are smooth
/// within the finite-difference step.
Tensor away_from_zero(Shape shape, RandomSource& rng, double gap) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) {
    const double m = rng.uniform(gap, 1.0);
    v = static_cast<float>(rng.bernoulli(0.5) ? m : -m);
  }
  return t;
}

/// Contracts an op's output with fixed random weights into a scalar. The
/// output at the base point is subtracted first, so the scalar stays small
/// and its float32 rounding does not swamp the finite differences.
Tensor project(const Tensor& out, const Tensor& base, const Tensor& weights) {
  return ad::sum(ad::mul(ad::sub(out, base), weights));
}

class Suite {
 public:
  Suite(std::uint64_t seed, const ad::GradCheckOptions& options) : rng_(seed), options_(options) {}

  /// Checks d/dx of project(op(x)).
  void unary(const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& op) {
    Tensor base;
    {
      ad::NoGradGuard guard;
      base = op(x).clone();
    }
    const Tensor w = random_tensor(base.shape(), rng_);
    run(name, x, [&](const Tensor& v) { return project(op(v), base, w); });
  }

  /// Scalar-valued op, checked directly.
  void scalar(const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& op) {
    run(name, x, op);
  }

  RandomSource& rng() { return rng_; }
  std::vector<OpGradResult> take() { return std::move(results_); }

 private:
  void run(const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    ad::GradCheckOptions o = options_;
    o.seed = rng_.next_u64();
    results_.push_back({name, ad::grad_check(f, x, o)});
  }

  RandomSource rng_;
  ad::GradCheckOptions options_;
  std::vector<OpGradResult> results_;
};

}  // namespace

std::vector<OpGradResult> op_gradient_suite(std::uint64_t seed, const ad::GradCheckOptions& options) {
  Suite s(seed, options);
  auto& rng = s.rng();
  auto r = [&](Shape shape) { return random_tensor(std::move(shape), rng); };

  const Tensor a = r({4, 8});
  const Tensor b = r({8, 6});
  s.unary("matmul.a", a, [&](const Tensor& x) { return ad::matmul(x, b); });
  s.unary("matmul.b", b, [&](const Tensor& x) { return ad::matmul(a, x); });
  const Tensor rows = r({6, 5});
  const Tensor table = r({5, 7});
  s.unary("embed.rows", rows, [&](const Tensor& x) { return ad::embed(x, table); });
  s.unary("embed.table", table, [&](const Tensor& x) { return ad::embed(rows, x); });

  const Tensor big = r({4, 8, 8});
  const Tensor row = r({8});
  const Tensor same = r({4, 8, 8});
  s.unary("add.a", big, [&](const Tensor& x) { return ad::add(x, row); });
  s.unary("add.broadcast", row, [&](const Tensor& x) { return ad::add(big, x); });
  s.unary("sub.a", big, [&](const Tensor& x) { return ad::sub(x, same); });
  s.unary("sub.b", row, [&](const Tensor& x) { return ad::sub(big, x); });
  s.unary("mul.a", big, [&](const Tensor& x) { return ad::mul(x, same); });
  s.unary("mul.broadcast", row, [&](const Tensor& x) { return ad::mul(big, x); });
  s.unary("scale", big, [](const Tensor& x) { return ad::scale(x, -1.7f); });
  s.unary("add_scalar", big, [](const Tensor& x) { return ad::add_scalar(x, 0.3f); });

  s.unary("reshape", big, [](const Tensor& x) { return ad::reshape(x, {8, 32}); });
  s.unary("transpose", big, [](const Tensor& x) { return ad::transpose(x); });
  const Tensor other = r({4, 3});
  s.unary("concat.first", a, [&](const Tensor& x) { return ad::concat({x, other}, 1); });
  s.unary("concat.second", other, [&](const Tensor& x) { return ad::concat({a, x}, 1); });
  s.unary("slice", big, [](const Tensor& x) { return ad::slice(x, 2, 2, 7); });
  s.unary("select_rows", a, [](const Tensor& x) { return ad::select_rows(x, {3, 0, 0, 2}); });

  s.unary("softmax", big, [](const Tensor& x) { return ad::softmax(x); });
  s.unary("sigmoid", big, [](const Tensor& x) { return ad::sigmoid(x); });
  s.unary("gelu", big, [](const Tensor& x) { return ad::gelu(x); });
  s.unary("relu", away_from_zero({4, 8, 8}, rng, 0.01), [](const Tensor& x) { return ad::relu(x); });

  const Tensor gain = random_tensor({8}, rng, 0.5, 1.5);
  const Tensor bias = r({8});
  s.unary("layer_norm.x", big, [&](const Tensor& x) { return ad::layer_norm(x, gain, bias); });
  s.unary("layer_norm.gain", gain, [&](const Tensor& x) { return ad::layer_norm(big, x, bias); });
  s.unary("layer_norm.bias", bias, [&](const Tensor& x) { return ad::layer_norm(big, gain, x); });

  const Tensor image = r({2, 8, 8});
  const Tensor kernel = r({3, 2, 3, 3});
  const Tensor kbias = r({3});
  s.unary("conv2d.x", image, [&](const Tensor& x) { return ad::conv2d(x, kernel, kbias); });
  s.unary("conv2d.weight", kernel, [&](const Tensor& x) { return ad::conv2d(image, x, kbias); });
  s.unary("conv2d.bias", kbias, [&](const Tensor& x) { return ad::conv2d(image, kernel, x); });
  s.unary("avg_pool2", big, [](const Tensor& x) { return ad::avg_pool2(x); });
  s.unary("patchify", image, [](const Tensor& x) { return ad::patchify(x, 4); });
  const Tensor patches = r({4, 32});
  s.unary("unpatchify", patches, [](const Tensor& x) { return ad::unpatchify(x, 4, 8, 8); });

  s.scalar("sum", big, [](const Tensor& x) { return ad::sum(x); });
  s.scalar("mean", big, [](const Tensor& x) { return ad::mean(x); });
  // Nearby arguments keep the loss value (and its rounding) small.
  Tensor near = big.clone();
  for (float& v : near.data()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
  s.scalar("mse.a", big, [&](const Tensor& x) { return ad::mse(x, near); });
  s.scalar("mse.b", near, [&](const Tensor& x) { return ad::mse(big, x); });

  Tensor target(Shape{4, 8});
  for (int i = 0; i < 4; ++i) target.data()[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(rng.uniform_int(0, 7))] = 1.0f;
  const Tensor probs = random_tensor({4, 8}, rng, 0.05, 1.0);
  s.scalar("cross_entropy", probs, [&](const Tensor& x) { return ad::cross_entropy(x, target); });
  Tensor bits(Shape{4, 8, 8});
  for (float& v : bits.data()) v = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  const Tensor soft = random_tensor({4, 8, 8}, rng, 0.05, 0.95);
  s.scalar("binary_cross_entropy", soft, [&](const Tensor& x) { return ad::binary_cross_entropy(x, bits); });
  const Tensor img_a = random_tensor({16, 16}, rng, 0.0, 1.0);
  Tensor img_b = img_a.clone();
  for (float& v : img_b.data()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
  s.scalar("multiscale_l2", img_a, [&](const Tensor& x) { return nets::multiscale_l2(x, img_b); });
  return s.take();
}

OpGradResult render_path_gradient(nets::SketchRenderer& srn, std::uint64_t seed, std::size_t coordinates,
                                  const ad::GradCheckOptions& options) {
  srn.parameters().set_trainable(false);
  GeneratorConfig gen;
  gen.seed = seed;
  RandomSource rng(seed);
  const GeneratedSketch g = sample_sketch(gen, rng);
  const int size = srn.config().image_size;
  const SketchImage target_img = rasterize(g.sketch, size, size);
  const Tensor target(ad::Shape{size, size}, target_img.pixels);
  // Soft token probabilities: a softened one-hot of a second sketch.
  const GeneratedSketch other = sample_sketch(gen, rng);
  Tensor logits = nets::one_hot(other.grid);
  for (float& v : logits.data()) v = static_cast<float>(3.0 * v + rng.normal(0.0, 0.5));
  Tensor y;
  {
    ad::NoGradGuard guard;
    y = ad::softmax(logits).clone();
  }
  ad::GradCheckOptions o = options;
  o.max_coordinates = coordinates;
  o.seed = rng.next_u64();
  const auto report =
      ad::grad_check([&](const Tensor& v) { return nets::multiscale_l2(srn.forward(v), target); }, y, o);
  return {"render_path", report};
}

nets::SketchRenderer fitted_renderer(const nets::SrnConfig& config, std::uint64_t seed, int steps) {
  nets::SketchRenderer srn(config);
  GeneratorConfig gen;
  gen.seed = seed;
  pipeline::SampleOptions sample_options;
  sample_options.image_size = config.image_size;
  const auto samples = pipeline::make_samples(generate_split(gen, Split::Train, 10), sample_options);
  pipeline::TrainOptions options;
  options.steps = steps;
  options.batch_size = 10;
  options.adam.lr = 1e-3f;
  options.seed = seed;
  pipeline::train_srn(srn, samples, nets::ImageLossKind::MultiscaleL2, options);
  return srn;
}

}  // namespace cadsketch
