// Acceptance criteria at desk scale. Prints one PASS/FAIL line per criterion
// and writes the same lines to a report file. Exits 0 once every selected
// criterion has run; --strict turns any FAIL into exit code 1.

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/gradsuite.hpp"
#include "cadsketch/ops.hpp"
#include "cadsketch/pipeline.hpp"
#include "cadsketch/synthgen.hpp"

using namespace cadsketch;
using namespace cadsketch::pipeline;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

std::function<void(int, double)> log_every(const std::string& tag, int every) {
  return [tag, every, sum = 0.0](int step, double loss) mutable {
    sum += loss;
    if ((step + 1) % every == 0) {
      progress(fmt("%s step %d loss %.5f", tag.c_str(), step + 1, sum / every));
      sum = 0.0;
    }
  };
}

std::vector<Sample> generated_samples(std::uint64_t seed, Split split, std::size_t n) {
  GeneratorConfig g;
  g.seed = seed;
  SampleOptions o;
  o.split = split;
  return make_samples(generate_split(g, split, n), o);
}

TrainOptions train_options(int steps, int batch, float lr, std::uint64_t seed) {
  TrainOptions o;
  o.steps = steps;
  o.batch_size = batch;
  o.adam.lr = lr;
  o.seed = seed;
  return o;
}

bool same_primitive(const Primitive& a, const Primitive& b) {
  if (a.kind != b.kind || a.construction != b.construction) return false;
  const auto pa = a.values(), pb = b.values();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(std::abs(pa[i] - pb[i]) < 1.0 / 64.0)) return false;
  }
  return true;
}

// ---- 1. tokenization round trip

Outcome criterion_round_trip() {
  Stopwatch sw;
  GeneratorConfig g;
  g.seed = kSeed;
  const auto corpus = generate_split(g, Split::Train, 10000);
  std::size_t ok = 0;
  for (const auto& item : corpus) {
    const DetokenizeResult d = detokenize(tokenize(item.sketch));
    bool same = d.dropped == 0 && d.sketch.size() == item.sketch.size();
    for (std::size_t i = 0; same && i < d.sketch.size(); ++i) {
      same = same_primitive(d.sketch.primitives[i], item.sketch.primitives[i]);
    }
    ok += same;
  }
  const double t = sw.seconds();
  return {ok == corpus.size() && t < 10.0, fmt("%zu/%zu round trips exact, %.2fs", ok, corpus.size(), t)};
}

// ---- 2. quantizer anchor

Outcome criterion_quantizer() {
  const int zero_bin = quantize(0.0);
  const double lo = dequantize(zero_bin) - 1.0 / 64.0, hi = dequantize(zero_bin);
  const bool anchored = zero_bin == 0 && lo < 0.0 && 0.0 <= hi && hi == 0.0;
  int identities = 0;
  for (int k = 0; k < 64; ++k) identities += quantize(dequantize(k)) == k;
  return {anchored && identities == 64,
          fmt("quantize(0)=%d in (%.6f, %.6f], %d/64 bins invert", zero_bin, lo, hi, identities)};
}

// ---- 3. assignment oracle

double brute_force(const eval::CostMatrix& c) {
  std::vector<int> p(static_cast<std::size_t>(c.n));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, eval::assignment_cost(c, p));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

Outcome criterion_assignment() {
  Stopwatch sw;
  RandomSource rng(kSeed);
  int matches = 0, total = 0;
  for (int n = 2; n <= 7; ++n) {
    for (int trial = 0; trial < 1000; ++trial) {
      eval::CostMatrix c(n);
      for (double& v : c.values) v = rng.uniform(0.0, 10.0);
      const auto a = eval::hungarian(c);
      matches += eval::assignment_cost(c, a.perm) == brute_force(c);
      ++total;
    }
  }
  const double t = sw.seconds();
  return {matches == total && t < 30.0, fmt("%d/%d optimal costs equal, %.2fs", matches, total, t)};
}

// ---- 4. gradient suite

Outcome criterion_gradients() {
  Stopwatch sw;
  int failed = 0, total = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : op_gradient_suite(kSeed)) {
    ++total;
    failed += !(r.report.passed && r.report.max_relative_error < 1e-2);
    if (r.report.max_relative_error > worst) worst = r.report.max_relative_error, worst_name = r.name;
  }
  progress("fitting renderer for the render path");
  nets::SketchRenderer srn = fitted_renderer(nets::SrnConfig{}, kSeed);
  ad::GradCheckOptions o;
  o.largest_first = true;
  const auto render = render_path_gradient(srn, kSeed, 20, o);
  ++total;
  failed += !(render.report.passed && render.report.max_relative_error < 1e-2);
  const double t = sw.seconds();
  return {failed == 0 && t < 120.0,
          fmt("%d/%d checks pass, worst op %s rel %.2e, render path rel %.2e, %.1fs", total - failed, total,
              worst_name.c_str(), worst, render.report.max_relative_error, t)};
}

// ---- 5. metric identities

Outcome criterion_metrics() {
  const auto data = generated_samples(kSeed, Split::Test, 100);
  int violations = 0;
  const auto id = nets::identity_permutation();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    const auto& other = data[(i + 1) % data.size()];
    violations += eval::metric_acc(s.grid, s.grid, id).value != 1.0;
    violations += eval::metric_param_mse(s.grid, s.grid, id).value != 0.0;
    violations += eval::metric_img_mse(s.image, s.image) != 0.0;
    violations += eval::metric_chamfer(s.image, s.image).value != 0.0;
    violations += eval::metric_chamfer(s.image, other.image).value != eval::metric_chamfer(other.image, s.image).value;
  }
  SketchImage a(16, 16), b(16, 16);
  a.at(4, 4) = 1.0f;
  b.at(4, 7) = 1.0f;
  const double two_pixel = eval::metric_chamfer(a, b).value;
  return {violations == 0 && two_pixel == 9.0,
          fmt("%d identity violations on 100 samples, two-pixel CD %.1f", violations, two_pixel)};
}

// ---- 6. renderer overfit

struct SrnOverfit {
  double img_mse = 0.0;       // multiscale-trained renderer vs explicit renders
  double l2_multiscale = 0.0;  // level-1 l2 of the multiscale-trained renderer
  double l2_plain = 0.0;       // level-1 l2 of the l2-trained renderer
  double final_multiscale = 0.0;
  double final_plain = 0.0;
};

SrnOverfit run_srn_overfit(int steps) {
  const auto corpus = generated_samples(kSeed, Split::Train, 10);
  SrnOverfit r;
  for (auto kind : {nets::ImageLossKind::MultiscaleL2, nets::ImageLossKind::L2}) {
    nets::SketchRenderer srn(nets::SrnConfig{});
    auto o = train_options(steps, 10, 1e-3f, kSeed);
    o.on_step = log_every(nets::to_string(kind), 250);
    const auto log = train_srn(srn, corpus, kind, o);
    double img = 0.0, l2 = 0.0;
    for (const auto& s : corpus) {
      const ad::Tensor out = srn.forward(nets::one_hot(s.grid));
      const SketchImage rendered = nets::tensor_image(out);
      const SketchImage target = rasterize(s.sketch, rendered.width, rendered.height);
      img += eval::metric_img_mse(rendered, target);
      l2 += nets::image_loss(out, ad::reshape(nets::image_tensor(target), out.shape()), nets::ImageLossKind::L2).item();
    }
    if (kind == nets::ImageLossKind::MultiscaleL2) {
      r.img_mse = img / corpus.size();
      r.l2_multiscale = l2 / corpus.size();
      r.final_multiscale = log.final_loss;
    } else {
      r.l2_plain = l2 / corpus.size();
      r.final_plain = log.final_loss;
    }
  }
  return r;
}

Outcome criterion_srn_overfit() {
  Stopwatch sw;
  const SrnOverfit r = run_srn_overfit(2000);
  const double t = sw.seconds();
  return {r.img_mse < 0.05 && r.l2_multiscale <= r.l2_plain && t < 900.0,
          fmt("ImgMSE %.4f, level-1 l2 multiscale %.5f vs l2 %.5f, %.0fs", r.img_mse, r.l2_multiscale, r.l2_plain, t)};
}

// ---- 7. parameterizer overfit

struct SpnOverfit {
  double acc = 0.0;
  int steps = 0;
  int violations = 0;
  double final_loss = 0.0;
};

SpnOverfit run_spn_overfit(int max_steps, bool stop_at_full_acc) {
  const auto corpus = generated_samples(kSeed, Split::Train, 10);
  nets::SketchParameterizer spn(nets::SpnConfig{});
  auto o = train_options(max_steps, 5, 1e-3f, kSeed);
  SpnOverfit r;
  o.on_step = log_every("finetune", 250);
  o.stop_when = [&](int step) {
    r.steps = step + 1;
    if (!stop_at_full_acc || (step + 1) % 50 != 0) return false;
    r.acc = evaluate(spn_predictor(spn), corpus, spn.config().image_size).acc;
    return r.acc == 1.0;
  };
  const auto log = finetune_spn(spn, corpus, o);
  r.acc = evaluate(spn_predictor(spn), corpus, spn.config().image_size).acc;
  r.violations = log.matching_violations;
  r.final_loss = log.final_loss;
  return r;
}

Outcome criterion_spn_overfit() {
  Stopwatch sw;
  const SpnOverfit r = run_spn_overfit(3000, true);
  const double t = sw.seconds();
  return {r.acc == 1.0 && r.violations == 0 && t < 900.0,
          fmt("train Acc %.4f after %d steps, %d batches with matched > identity loss, %.0fs", r.acc, r.steps,
              r.violations, t)};
}

// ---- 8. pretraining benefit

struct BenefitScale {
  std::size_t n_train = 1000, n_val = 200, n_labels = 200;
  int srn_steps = 6000, pretrain_steps = 500, finetune_steps = 500, batch = 8;
};

struct Benefit {
  double zero_pretrained = 0.0, zero_random = 0.0;
  double tuned_pretrained = 0.0, tuned_random = 0.0;
  int empty[4] = {0, 0, 0, 0};
  double srn_final = 0.0, pretrain_final = 0.0, tuned_pretrained_final = 0.0, tuned_random_final = 0.0;
  bool renderer_frozen = false;
};

struct Trained {
  nets::SketchRenderer srn{nets::SrnConfig{}};
  nets::SketchParameterizer spn{nets::SpnConfig{}};
  std::vector<Sample> val;
};

Benefit run_benefit(const BenefitScale& scale, Trained& trained) {
  GeneratorConfig g;
  g.seed = kSeed + 8;
  SampleOptions so;
  const auto train = make_samples(generate_split(g, Split::Train, scale.n_train), so);
  so.split = Split::Val;
  trained.val = make_samples(generate_split(g, Split::Val, scale.n_val), so);
  const std::vector<Sample> labeled(train.begin(), train.begin() + static_cast<long>(scale.n_labels));
  Benefit b;

  auto so_srn = train_options(scale.srn_steps, scale.batch, 1e-3f, kSeed + 1);
  so_srn.on_step = log_every("renderer", 500);
  b.srn_final = train_srn_generated(trained.srn, g, nets::ImageLossKind::Bce, so_srn).final_loss;

  const int size = trained.srn.config().image_size;
  auto mean_cd = [&](const nets::SketchParameterizer& spn, int& empty) {
    const EvalReport r = evaluate(spn_predictor(spn), trained.val, size);
    empty = r.chamfer_empty;
    return r.chamfer;
  };

  nets::SketchParameterizer& pretrained = trained.spn;
  nets::SketchParameterizer random_init(nets::SpnConfig{});
  const auto hash = trained.srn.parameters().fingerprint();
  auto po = train_options(scale.pretrain_steps, scale.batch, 1e-3f, kSeed + 2);
  po.on_step = log_every("pretrain", 100);
  b.pretrain_final = pretrain_spn(pretrained, trained.srn, train, po).final_loss;
  b.renderer_frozen = trained.srn.parameters().fingerprint() == hash;

  b.zero_pretrained = mean_cd(pretrained, b.empty[0]);
  b.zero_random = mean_cd(random_init, b.empty[1]);

  auto fo = train_options(scale.finetune_steps, scale.batch, 1e-3f, kSeed + 3);
  fo.on_step = log_every("finetune", 100);
  b.tuned_pretrained_final = finetune_spn(pretrained, labeled, fo).final_loss;
  b.tuned_random_final = finetune_spn(random_init, labeled, fo).final_loss;
  b.tuned_pretrained = mean_cd(pretrained, b.empty[2]);
  b.tuned_random = mean_cd(random_init, b.empty[3]);
  return b;
}

Outcome criterion_benefit(Trained& trained, bool& frozen) {
  Stopwatch sw;
  const Benefit b = run_benefit(BenefitScale{}, trained);
  frozen = b.renderer_frozen;
  const double t = sw.seconds();
  const bool zero = b.zero_pretrained < b.zero_random, tuned = b.tuned_pretrained < b.tuned_random;
  return {zero && tuned && t < 7200.0,
          fmt("val CD zero-shot pretrained %.2f vs random %.2f (empty %d/%d), fine-tuned pretrained %.2f vs "
              "random %.2f (empty %d/%d), %.0fs",
              b.zero_pretrained, b.zero_random, b.empty[0], b.empty[1], b.tuned_pretrained, b.tuned_random,
              b.empty[2], b.empty[3], t)};
}

// ---- 9. test-time optimization

struct Tto {
  int improved = 0, count = 0;
  double cd_before = 0.0, cd_after = 0.0;
  double final_loss = 0.0;  // mean final trace value
  bool zero_steps_identical = true;
  bool renderer_frozen = true;
};

Tto run_tto(const nets::SketchParameterizer& spn, nets::SketchRenderer& srn, const std::vector<Sample>& images,
            std::size_t n, int steps) {
  Tto r;
  const int size = srn.config().image_size;
  const auto hash = srn.parameters().fingerprint();
  for (std::size_t i = 0; i < std::min(n, images.size()); ++i) {
    const Sample& s = images[i];
    const Inference plain = zero_shot_infer(spn, s.image);
    const TtoResult none = test_time_optimize(spn, srn, s.image, {0, 0.05f});
    const auto p = plain.probabilities.data(), q = none.inference.probabilities.data();
    r.zero_steps_identical = r.zero_steps_identical && none.inference.grid == plain.grid &&
                             std::equal(p.begin(), p.end(), q.begin(), q.end());
    const TtoResult opt = test_time_optimize(spn, srn, s.image, {steps, 0.05f});
    r.improved += opt.trace.back() <= opt.trace.front();
    r.final_loss += opt.trace.back();
    r.cd_before += evaluate_sample(plain.probabilities, s, size).chamfer;
    r.cd_after += evaluate_sample(opt.inference.probabilities, s, size).chamfer;
    ++r.count;
  }
  r.cd_before /= r.count;
  r.cd_after /= r.count;
  r.final_loss /= r.count;
  r.renderer_frozen = srn.parameters().fingerprint() == hash;
  return r;
}

Outcome criterion_tto(Trained& trained, bool& frozen) {
  Stopwatch sw;
  const Tto r = run_tto(trained.spn, trained.srn, trained.val, 50, 100);
  frozen = r.renderer_frozen;
  const double t = sw.seconds();
  const bool pass = r.improved >= 0.9 * r.count && r.cd_after <= r.cd_before && r.zero_steps_identical && t < 1200.0;
  return {pass, fmt("final loss <= initial on %d/%d, mean CD %.2f -> %.2f, steps=0 %s, %.0fs", r.improved, r.count,
                    r.cd_before, r.cd_after, r.zero_steps_identical ? "bit-identical" : "differs", t)};
}

// ---- 10. frozen renderer

Outcome criterion_frozen(Trained& trained, bool ran_benefit, bool benefit_frozen, bool ran_tto, bool tto_frozen) {
  // Independent short run on the same renderer, then the hashes from 8 and 9.
  const auto data = generated_samples(kSeed + 10, Split::Val, 6);
  const auto before = trained.srn.parameters().fingerprint();
  nets::SketchParameterizer spn(nets::SpnConfig{});
  pretrain_spn(spn, trained.srn, data, train_options(5, 2, 1e-3f, kSeed));
  const bool after_pretrain = trained.srn.parameters().fingerprint() == before;
  test_time_optimize(spn, trained.srn, data[0].image, {5, 0.05f});
  const bool after_tto = trained.srn.parameters().fingerprint() == before;
  const bool pass = after_pretrain && after_tto && (!ran_benefit || benefit_frozen) && (!ran_tto || tto_frozen);
  return {pass, fmt("renderer hash unchanged: pretrain %s, test-time %s%s%s", after_pretrain ? "yes" : "no",
                    after_tto ? "yes" : "no", ran_benefit ? (benefit_frozen ? ", run 8 yes" : ", run 8 no") : "",
                    ran_tto ? (tto_frozen ? ", run 9 yes" : ", run 9 no") : "")};
}

// ---- 11. determinism

std::string tree_bytes(const fs::path& root) {
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
  }
  std::string all;
  for (const auto& f : files) all += f.string() + '\n' + read_file(root / f);
  return all;
}

std::vector<double> determinism_run() {
  std::vector<double> v;
  const SrnOverfit a = run_srn_overfit(40);
  v.insert(v.end(), {a.final_multiscale, a.final_plain, a.img_mse});
  const SpnOverfit b = run_spn_overfit(40, false);
  v.insert(v.end(), {b.final_loss, b.acc});
  Trained trained;
  BenefitScale scale;
  scale.n_train = 40;
  scale.n_val = 10;
  scale.n_labels = 20;
  scale.srn_steps = 40;
  scale.pretrain_steps = 20;
  scale.finetune_steps = 20;
  scale.batch = 4;
  const Benefit c = run_benefit(scale, trained);
  v.insert(v.end(), {c.srn_final, c.pretrain_final, c.tuned_pretrained_final, c.tuned_random_final,
                     c.zero_pretrained, c.tuned_pretrained});
  const Tto d = run_tto(trained.spn, trained.srn, trained.val, 5, 10);
  v.insert(v.end(), {d.final_loss, d.cd_after});
  return v;
}

Outcome criterion_determinism() {
  Stopwatch sw;
  const auto first = determinism_run();
  const auto second = determinism_run();
  double worst = 0.0;
  for (std::size_t i = 0; i < first.size(); ++i) worst = std::max(worst, std::abs(first[i] - second[i]));

  const fs::path root = fs::temp_directory_path() / ("cadsketch_acceptance_" + std::to_string(kSeed));
  fs::remove_all(root);
  GeneratorConfig g;
  g.seed = kSeed;
  build_corpus(g, 20, 5, 5, root / "a");
  build_corpus(g, 20, 5, 5, root / "b");
  const bool corpus_equal = tree_bytes(root / "a") == tree_bytes(root / "b");
  fs::remove_all(root);
  const double t = sw.seconds();
  return {worst <= 1e-6 && corpus_equal,
          fmt("%zu repeated losses and metrics, max difference %.3g, corpus bytes %s, %.0fs", first.size(), worst,
              corpus_equal ? "identical" : "differ", t)};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string report = "acceptance_report.txt";
  bool strict = false;
  app.add_option("--only", only, "Run only these criteria (1-11)")->check(CLI::Range(1, 11))->delimiter(',');
  app.add_option("--report", report, "Report file");
  app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  auto selected = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  std::ofstream out(report);
  int failures = 0;
  auto record = [&](int n, const char* name, const std::function<Outcome()>& run) {
    if (!selected(n)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = fmt("criterion %2d %-22s %s  %s", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    out << line << '\n';
    out.flush();
  };

  Trained trained;
  bool benefit_ran = false, benefit_frozen = false, tto_ran = false, tto_frozen = false;
  record(1, "tokenization", criterion_round_trip);
  record(2, "quantizer", criterion_quantizer);
  record(3, "assignment", criterion_assignment);
  record(4, "gradients", criterion_gradients);
  record(5, "metrics", criterion_metrics);
  record(6, "renderer-overfit", criterion_srn_overfit);
  record(7, "parameterizer-overfit", criterion_spn_overfit);
  record(8, "pretraining-benefit", [&] {
    benefit_ran = true;
    return criterion_benefit(trained, benefit_frozen);
  });
  record(9, "test-time-opt", [&] {
    if (!benefit_ran) throw Error(ErrorCode::InvalidConfig, "needs the models trained by criterion 8");
    tto_ran = true;
    return criterion_tto(trained, tto_frozen);
  });
  record(10, "frozen-renderer",
         [&] { return criterion_frozen(trained, benefit_ran, benefit_frozen, tto_ran, tto_frozen); });
  record(11, "determinism", criterion_determinism);
  std::printf("%d criteria failed; report in %s\n", failures, report.c_str());
  return strict && failures > 0 ? 1 : 0;
}
