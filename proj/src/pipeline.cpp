#include "cadsketch/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch::pipeline {

namespace {

Tensor image_2d(const SketchImage& image) { return Tensor(ad::Shape{image.height, image.width}, image.pixels); }

void check_image_size(const SketchImage& image, int expected) {
  if (image.width != expected || image.height != expected) {
    throw Error(ErrorCode::ShapeMismatch, "input image is " + std::to_string(image.height) + "x" +
                                              std::to_string(image.width) + ", model expects " +
                                              std::to_string(expected) + "x" + std::to_string(expected));
  }
}

/// Runs `options.steps` optimizer steps; `sample_loss` builds and
/// back-propagates the loss of one item and returns its value.
template <typename Next, typename SampleLoss>
TrainLog run_steps(ad::ParameterStore& store, const TrainOptions& options, std::size_t steps_per_epoch, Next next,
                   SampleLoss sample_loss) {
  if (options.batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (options.steps < 0) throw Error(ErrorCode::InvalidConfig, "steps must be >= 0");
  TrainLog log;
  ad::AdamOptions adam = options.adam;
  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;
  for (int step = 0; step < options.steps; ++step) {
    store.zero_grad();
    const std::vector<std::size_t> batch = next(step);
    double total = 0.0;
    for (std::size_t idx : batch) total += sample_loss(step, idx);
    adam.grad_scale = options.adam.grad_scale / static_cast<float>(batch.size());
    ad::adam_step(store, adam);
    const double mean = total / static_cast<double>(batch.size());
    log.step_losses.push_back(mean);
    epoch_sum += mean;
    if (++epoch_count == std::max<std::size_t>(steps_per_epoch, 1)) {
      log.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_count));
      epoch_sum = 0.0;
      epoch_count = 0;
    }
    if (options.on_step) options.on_step(step, mean);
    if (options.stop_when && options.stop_when(step)) break;
  }
  if (epoch_count > 0) log.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_count));
  if (!log.step_losses.empty()) log.final_loss = log.step_losses.back();
  return log;
}

void require_nonempty(const std::vector<Sample>& corpus, const char* what) {
  if (corpus.empty()) throw Error(ErrorCode::InvalidConfig, std::string(what) + " corpus is empty");
}

Tensor render_loss_tensor(const SketchParameterizer& spn, const SketchRenderer& srn, const SketchImage& image) {
  const Tensor rendered = srn.forward(spn.forward(nets::image_tensor(image)));
  return nets::multiscale_l2(rendered, image_2d(image));
}

struct MatchedLoss {
  Tensor loss;
  double matched_cost = 0.0;
  double identity_cost = 0.0;
};

MatchedLoss matched_token_loss(const SketchParameterizer& spn, const Sample& sample) {
  const Tensor probs = spn.forward(nets::image_tensor(sample.image));
  const eval::CostMatrix cost = eval::cost_matrix(probs, sample.grid);
  const eval::Assignment a = eval::hungarian(cost);
  std::vector<int> identity(kMaxPrimitives);
  for (int i = 0; i < kMaxPrimitives; ++i) identity[i] = i;
  return {nets::token_cross_entropy(probs, sample.grid, eval::to_slot_permutation(a)), a.cost,
          eval::assignment_cost(cost, identity)};
}

}  // namespace

std::string to_string(InputStyle style) { return style == InputStyle::Precise ? "precise" : "handdrawn"; }

InputStyle input_style_from_string(const std::string& name) {
  if (name == "precise") return InputStyle::Precise;
  if (name == "handdrawn") return InputStyle::Handdrawn;
  throw Error(ErrorCode::InvalidConfig, "unknown input style '" + name + "'");
}

std::vector<Sample> make_samples(const std::vector<Sketch>& sketches, const SampleOptions& options) {
  std::vector<Sample> out;
  out.reserve(sketches.size());
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    Sample s;
    s.sketch = sketches[i];
    s.grid = tokenize(s.sketch);
    if (options.style == InputStyle::Precise) {
      s.image = rasterize(s.sketch, options.image_size, options.image_size);
    } else {
      HanddrawConfig hd = options.handdraw;
      hd.seed = handdraw_seed(options.corpus_seed, options.split, i);
      s.image = synthesize_handdrawn(s.sketch, hd, options.image_size, options.image_size);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> make_samples(const std::vector<GeneratedSketch>& generated, const SampleOptions& options) {
  std::vector<Sketch> sketches;
  sketches.reserve(generated.size());
  for (const auto& g : generated) sketches.push_back(g.sketch);
  return make_samples(sketches, options);
}

std::vector<Sample> load_samples(const std::filesystem::path& jsonl, const SampleOptions& options,
                                 const std::optional<std::filesystem::path>& image_dir) {
  std::vector<Sample> out = make_samples(read_dataset(jsonl), options);
  if (image_dir) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].image = read_pgm(*image_dir / (std::to_string(i) + ".pgm"));
      check_image_size(out[i].image, options.image_size);
    }
  }
  return out;
}

BatchSampler::BatchSampler(std::size_t n, int batch_size, std::uint64_t seed)
    : n_(n), batch_(static_cast<std::size_t>(std::max(batch_size, 1))), rng_(seed) {}

std::size_t BatchSampler::steps_per_epoch() const { return n_ == 0 ? 0 : (n_ + batch_ - 1) / batch_; }

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  if (n_ == 0) return out;
  while (out.size() < batch_) {
    if (cursor_ == order_.size()) {
      order_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
      for (std::size_t i = n_ - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(i)));
        std::swap(order_[i], order_[j]);
      }
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
    // A batch never spans two epochs.
    if (cursor_ == order_.size()) break;
  }
  return out;
}

TrainLog train_srn(SketchRenderer& srn, const std::vector<Sample>& corpus, nets::ImageLossKind loss,
                   const TrainOptions& options) {
  require_nonempty(corpus, "SRN training");
  const int size = srn.config().image_size;
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
  for (const Sample& s : corpus) {
    inputs.push_back(nets::one_hot(s.grid));
    targets.push_back(image_2d(rasterize(s.sketch, size, size)));
  }
  BatchSampler sampler(corpus.size(), options.batch_size, options.seed);
  srn.parameters().set_trainable(true);
  return run_steps(
      srn.parameters(), options, sampler.steps_per_epoch(), [&](int) { return sampler.next(); },
      [&](int, std::size_t i) {
        ad::Tape tape;
        const Tensor l = nets::image_loss(srn.forward(inputs[i]), targets[i], loss);
        tape.backward(l);
        return l.item();
      });
}

TrainLog train_srn_generated(SketchRenderer& srn, const GeneratorConfig& generator, nets::ImageLossKind loss,
                             const TrainOptions& options) {
  generator.validate();
  const int size = srn.config().image_size;
  RandomSource rng = RandomSource(generator.seed).split(0x5352ULL ^ options.seed);
  std::vector<GeneratedSketch> batch;
  srn.parameters().set_trainable(true);
  return run_steps(
      srn.parameters(), options, 1,
      [&](int) {
        batch.clear();
        std::vector<std::size_t> idx;
        for (int b = 0; b < options.batch_size; ++b) {
          batch.push_back(sample_sketch(generator, rng));
          idx.push_back(static_cast<std::size_t>(b));
        }
        return idx;
      },
      [&](int, std::size_t i) {
        ad::Tape tape;
        const Tensor target = image_2d(rasterize(batch[i].sketch, size, size));
        const Tensor l = nets::image_loss(srn.forward(nets::one_hot(batch[i].grid)), target, loss);
        tape.backward(l);
        return l.item();
      });
}

TrainLog pretrain_spn(SketchParameterizer& spn, SketchRenderer& srn, const std::vector<Sample>& corpus,
                      const TrainOptions& options) {
  require_nonempty(corpus, "pretraining");
  srn.parameters().set_trainable(false);
  spn.parameters().set_trainable(true);
  BatchSampler sampler(corpus.size(), options.batch_size, options.seed);
  return run_steps(
      spn.parameters(), options, sampler.steps_per_epoch(), [&](int) { return sampler.next(); },
      [&](int, std::size_t i) {
        ad::Tape tape;
        const Tensor l = render_loss_tensor(spn, srn, corpus[i].image);
        tape.backward(l);
        return l.item();
      });
}

TrainLog finetune_spn(SketchParameterizer& spn, const std::vector<Sample>& labeled, const TrainOptions& options) {
  require_nonempty(labeled, "fine-tuning");
  spn.parameters().set_trainable(true);
  BatchSampler sampler(labeled.size(), options.batch_size, options.seed);
  double matched = 0.0;
  double identity = 0.0;
  int violations = 0;
  int last_step = -1;
  auto close_batch = [&] {
    if (last_step >= 0 && matched > identity + 1e-9) ++violations;
    matched = identity = 0.0;
  };
  TrainLog log = run_steps(
      spn.parameters(), options, sampler.steps_per_epoch(), [&](int) { return sampler.next(); },
      [&](int step, std::size_t i) {
        if (step != last_step) {
          close_batch();
          last_step = step;
        }
        ad::Tape tape;
        const MatchedLoss m = matched_token_loss(spn, labeled[i]);
        matched += m.matched_cost;
        identity += m.identity_cost;
        tape.backward(m.loss);
        return m.loss.item();
      });
  close_batch();
  log.matching_violations = violations;
  return log;
}

TrainLog train_semi(SketchParameterizer& spn, SketchRenderer& srn, const std::vector<Sample>& labeled,
                    const std::vector<Sample>& unlabeled, const SemiWeights& weights, const TrainOptions& options) {
  if (!(weights.render >= 0.0) || !(weights.param >= 0.0) || (weights.render == 0.0 && weights.param == 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "semi-supervised weights must be >= 0 and not both 0");
  }
  const bool use_param = weights.param > 0.0;
  const bool use_render = weights.render > 0.0;
  if (use_param) require_nonempty(labeled, "labeled");
  if (use_render) require_nonempty(unlabeled, "unlabeled");
  srn.parameters().set_trainable(false);
  spn.parameters().set_trainable(true);
  BatchSampler labeled_sampler(labeled.size(), options.batch_size, options.seed);
  BatchSampler unlabeled_sampler(unlabeled.size(), options.batch_size, options.seed);
  auto is_param_step = [&](int step) { return !use_render || (use_param && step % 2 == 0); };
  const std::size_t per_epoch =
      use_param ? labeled_sampler.steps_per_epoch() + (use_render ? unlabeled_sampler.steps_per_epoch() : 0)
                : unlabeled_sampler.steps_per_epoch();
  double matched = 0.0;
  double identity = 0.0;
  int violations = 0;
  int last_step = -1;
  auto close_batch = [&] {
    if (last_step >= 0 && matched > identity + 1e-9) ++violations;
    matched = identity = 0.0;
  };
  TrainLog log = run_steps(
      spn.parameters(), options, per_epoch,
      [&](int step) { return is_param_step(step) ? labeled_sampler.next() : unlabeled_sampler.next(); },
      [&](int step, std::size_t i) {
        if (step != last_step) {
          close_batch();
          last_step = step;
        }
        ad::Tape tape;
        Tensor l;
        if (is_param_step(step)) {
          const MatchedLoss m = matched_token_loss(spn, labeled[i]);
          matched += m.matched_cost;
          identity += m.identity_cost;
          l = weights.param == 1.0 ? m.loss : ad::scale(m.loss, static_cast<float>(weights.param));
        } else {
          const Tensor r = render_loss_tensor(spn, srn, unlabeled[i].image);
          l = weights.render == 1.0 ? r : ad::scale(r, static_cast<float>(weights.render));
        }
        tape.backward(l);
        return l.item();
      });
  close_batch();
  log.matching_violations = violations;
  return log;
}

double render_loss(const SketchParameterizer& spn, const SketchRenderer& srn, const SketchImage& image) {
  ad::NoGradGuard guard;
  return render_loss_tensor(spn, srn, image).item();
}

TypeQuota type_quota_from_json(const nlohmann::json& j) {
  TypeQuota quota;
  int total = 0;
  for (const auto& [name, count] : j.items()) {
    PrimitiveKind kind{};
    if (name == "line") kind = PrimitiveKind::Line;
    else if (name == "circle") kind = PrimitiveKind::Circle;
    else if (name == "arc") kind = PrimitiveKind::Arc;
    else if (name == "point") kind = PrimitiveKind::Point;
    else throw Error(ErrorCode::InvalidConfig, "unknown primitive kind '" + name + "' in type quota");
    const int n = count.get<int>();
    if (n < 0) throw Error(ErrorCode::InvalidConfig, "negative quota for " + name);
    quota[kind] = n;
    total += n;
  }
  if (total > kMaxPrimitives) throw Error(ErrorCode::InvalidConfig, "type quota exceeds 16 slots");
  return quota;
}

Inference decode(const Tensor& probabilities, const std::optional<TypeQuota>& quota) {
  Inference out;
  out.probabilities = probabilities;
  TokenGrid grid = nets::argmax_grid(probabilities);
  if (quota) {
    const auto p = probabilities.data();
    auto prob = [&](int pos, int tok) {
      return static_cast<double>(p[static_cast<std::size_t>(pos) * token::kVocabSize + tok]);
    };
    std::vector<int> wanted;  // type token per requirement, 0 for an empty slot
    for (const auto& [kind, n] : *quota) {
      for (int k = 0; k < n; ++k) wanted.push_back(token::type_token(kind));
    }
    if (static_cast<int>(wanted.size()) > kMaxPrimitives) {
      throw Error(ErrorCode::InvalidConfig, "type quota exceeds 16 slots");
    }
    wanted.resize(kMaxPrimitives, token::kPadding);
    eval::CostMatrix cost(kMaxPrimitives);
    for (int r = 0; r < kMaxPrimitives; ++r) {
      for (int s = 0; s < kMaxPrimitives; ++s) {
        cost(r, s) = -std::log(std::max(prob(s * token::kPerSlot, wanted[r]), 1e-9));
      }
    }
    const eval::Assignment a = eval::hungarian(cost);
    for (int r = 0; r < kMaxPrimitives; ++r) {
      const int s = a.perm[r];
      TokenSlot slot{};
      const auto kind = token::kind_of(wanted[r]);
      if (kind) {
        slot[0] = wanted[r];
        const int n = param_count(*kind);
        for (int t = 1; t <= n; ++t) {
          int best = token::kParamFirst;
          for (int tok = token::kParamFirst; tok <= token::kParamLast; ++tok) {
            if (prob(s * token::kPerSlot + t, tok) > prob(s * token::kPerSlot + t, best)) best = tok;
          }
          slot[t] = best;
        }
        const int flag_pos = s * token::kPerSlot + n + 1;
        slot[n + 1] = prob(flag_pos, token::kConstruction) > prob(flag_pos, token::kNonConstruction)
                          ? token::kConstruction
                          : token::kNonConstruction;
      }
      grid.slots[s] = slot;
    }
  }
  out.decoded = detokenize(grid);
  out.grid = drop_invalid_slots(grid);
  return out;
}

Inference zero_shot_infer(const SketchParameterizer& spn, const SketchImage& image,
                          const std::optional<TypeQuota>& quota) {
  check_image_size(image, spn.config().image_size);
  ad::NoGradGuard guard;
  return decode(spn.forward(nets::image_tensor(image)), quota);
}

TtoResult test_time_optimize(const SketchParameterizer& spn, SketchRenderer& srn, const SketchImage& image,
                             const TtoOptions& options) {
  if (options.steps < 0) throw Error(ErrorCode::InvalidConfig, "steps must be >= 0");
  check_image_size(image, spn.config().image_size);
  check_image_size(image, srn.config().image_size);
  srn.parameters().set_trainable(false);
  Tensor probs;
  const Tensor target = image_2d(image);
  TtoResult result;
  {
    ad::NoGradGuard guard;
    probs = spn.forward(nets::image_tensor(image));
  }
  if (options.steps == 0) {
    ad::NoGradGuard guard;
    result.trace.push_back(nets::multiscale_l2(srn.forward(probs), target).item());
    result.inference = decode(probs);
    return result;
  }
  Tensor init(probs.shape());
  auto dst = init.data();
  const auto src = probs.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = std::log(std::max(src[k], 1e-9f));
  ad::ParameterStore store;
  const Tensor logits = store.add("logits", init);
  ad::AdamOptions adam;
  adam.lr = options.lr;
  for (int step = 0; step < options.steps; ++step) {
    store.zero_grad();
    ad::Tape tape;
    const Tensor l = nets::multiscale_l2(srn.forward(ad::softmax(logits)), target);
    tape.backward(l);
    result.trace.push_back(l.item());
    ad::adam_step(store, adam);
  }
  ad::NoGradGuard guard;
  const Tensor final_probs = ad::softmax(logits);
  result.trace.push_back(nets::multiscale_l2(srn.forward(final_probs), target).item());
  result.inference = decode(final_probs);
  return result;
}

Predictor spn_predictor(const SketchParameterizer& spn) {
  return [&spn](const Sample& s) {
    ad::NoGradGuard guard;
    return spn.forward(nets::image_tensor(s.image));
  };
}

Predictor oracle_predictor() {
  return [](const Sample& s) { return nets::one_hot(s.grid); };
}

SampleMetrics evaluate_sample(const Tensor& probabilities, const Sample& sample, int image_size) {
  const eval::Assignment a = eval::hungarian(eval::cost_matrix(probabilities, sample.grid));
  const nets::SlotPermutation perm = eval::to_slot_permutation(a);
  const Inference inf = decode(probabilities);
  SampleMetrics m;
  const auto acc = eval::metric_acc(inf.grid, sample.grid, perm);
  const auto pmse = eval::metric_param_mse(inf.grid, sample.grid, perm);
  m.acc = acc.value;
  m.acc_tokens = acc.count;
  m.param_mse = pmse.value;
  m.param_tokens = pmse.count;
  const SketchImage pred = rasterize(inf.decoded.sketch, image_size, image_size);
  const SketchImage truth = rasterize(detokenize(sample.grid).sketch, image_size, image_size);
  m.img_mse = eval::metric_img_mse(pred, truth);
  const auto cd = eval::metric_chamfer(pred, truth);
  m.chamfer = cd.value;
  m.chamfer_empty = cd.empty_foreground;
  m.dropped_slots = inf.decoded.dropped;
  return m;
}

EvalReport evaluate(const Predictor& predictor, const std::vector<Sample>& corpus, int image_size) {
  EvalReport r;
  for (const Sample& s : corpus) {
    r.samples.push_back(evaluate_sample(predictor(s), s, image_size));
    const auto& m = r.samples.back();
    r.acc += m.acc;
    r.param_mse += m.param_mse;
    r.img_mse += m.img_mse;
    r.chamfer += m.chamfer;
    r.chamfer_empty += m.chamfer_empty ? 1 : 0;
  }
  if (!corpus.empty()) {
    const double n = static_cast<double>(corpus.size());
    r.acc /= n;
    r.param_mse /= n;
    r.img_mse /= n;
    r.chamfer /= n;
  }
  return r;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const auto& m = report.samples[i];
    samples.push_back({{"index", i},
                       {"acc", m.acc},
                       {"acc_tokens", m.acc_tokens},
                       {"param_mse", m.param_mse},
                       {"param_tokens", m.param_tokens},
                       {"img_mse", m.img_mse},
                       {"chamfer", m.chamfer},
                       {"chamfer_empty", m.chamfer_empty},
                       {"dropped_slots", m.dropped_slots}});
  }
  return {{"count", report.samples.size()},
          {"mean",
           {{"acc", report.acc}, {"param_mse", report.param_mse}, {"img_mse", report.img_mse},
            {"chamfer", report.chamfer}}},
          {"chamfer_empty", report.chamfer_empty},
          {"samples", samples}};
}

void write_run_manifest(const std::filesystem::path& out_dir, const nlohmann::json& config, std::uint64_t seed) {
  const nlohmann::json manifest = {{"config", config}, {"seed", seed}, {"version", std::string(build_version())}};
  write_file_atomic(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace cadsketch::pipeline
