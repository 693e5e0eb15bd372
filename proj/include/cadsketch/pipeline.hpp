#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cadsketch/losses.hpp"
#include "cadsketch/matching.hpp"
#include "cadsketch/metrics.hpp"
#include "cadsketch/nets.hpp"
#include "cadsketch/synthgen.hpp"

namespace cadsketch::pipeline {

using ad::Tensor;
using nets::SketchParameterizer;
using nets::SketchRenderer;

enum class InputStyle { Precise, Handdrawn };
std::string to_string(InputStyle style);
InputStyle input_style_from_string(const std::string& name);

/// A labeled training or evaluation example.
struct Sample {
  TokenGrid grid;
  Sketch sketch;
  SketchImage image;  // network input (precise or hand-drawn)
};

struct SampleOptions {
  int image_size = kDefaultImageSize;
  InputStyle style = InputStyle::Precise;
  HanddrawConfig handdraw;
  std::uint64_t corpus_seed = 0;
  Split split = Split::Train;
};

/// Renders inputs the same way build_corpus does, so in-memory samples and
/// corpus PGMs agree.
std::vector<Sample> make_samples(const std::vector<Sketch>& sketches, const SampleOptions& options);
std::vector<Sample> make_samples(const std::vector<GeneratedSketch>& generated, const SampleOptions& options);
/// JSONL corpus; when image_dir is set, inputs are read from
/// image_dir/{index}.pgm instead of being rendered.
std::vector<Sample> load_samples(const std::filesystem::path& jsonl, const SampleOptions& options,
                                 const std::optional<std::filesystem::path>& image_dir = std::nullopt);

struct TrainOptions {
  int steps = 100;
  int batch_size = 16;
  ad::AdamOptions adam;
  std::uint64_t seed = 0;
  /// Called after every optimizer step with the step index and mean batch loss.
  std::function<void(int, double)> on_step;
  /// Checked after on_step; returning true ends training after that step.
  std::function<bool(int)> stop_when;
};

struct TrainLog {
  std::vector<double> step_losses;
  /// Means over consecutive ceil(n / batch) steps (one pass over the data).
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
  /// Fine-tuning only: batches where the matched loss exceeded the identity loss.
  int matching_violations = 0;
};

/// Shuffled mini-batches over n items; reshuffles each epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t steps_per_epoch() const;

 private:
  std::size_t n_;
  std::size_t batch_;
  RandomSource rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// SRN on (one-hot grid, explicit render) pairs from a fixed corpus.
TrainLog train_srn(SketchRenderer& srn, const std::vector<Sample>& corpus, nets::ImageLossKind loss,
                   const TrainOptions& options);
/// SRN on a fresh generator sample for every batch element.
TrainLog train_srn_generated(SketchRenderer& srn, const GeneratorConfig& generator, nets::ImageLossKind loss,
                             const TrainOptions& options);

/// Rendering self-supervision: multiscale_l2(srn(spn(X)), X). Freezes the SRN.
TrainLog pretrain_spn(SketchParameterizer& spn, SketchRenderer& srn, const std::vector<Sample>& corpus,
                      const TrainOptions& options);

/// Hungarian-matched token cross-entropy.
TrainLog finetune_spn(SketchParameterizer& spn, const std::vector<Sample>& labeled, const TrainOptions& options);

struct SemiWeights {
  double render = 1.0;
  double param = 1.0;
};

/// Alternates one labeled and one unlabeled batch. A term whose weight is 0
/// has its batches skipped entirely, so the run reduces exactly to the other
/// mode.
TrainLog train_semi(SketchParameterizer& spn, SketchRenderer& srn, const std::vector<Sample>& labeled,
                    const std::vector<Sample>& unlabeled, const SemiWeights& weights, const TrainOptions& options);

/// Loss of one sample, no gradient recorded.
double render_loss(const SketchParameterizer& spn, const SketchRenderer& srn, const SketchImage& image);

using TypeQuota = std::map<PrimitiveKind, int>;
TypeQuota type_quota_from_json(const nlohmann::json& j);

struct Inference {
  Tensor probabilities;  // [128, 73]
  TokenGrid grid;        // argmax (or constrained) grid with invalid slots cleared
  DetokenizeResult decoded;
};

/// Argmax decode. With a quota, slots are assigned types by a min-cost
/// matching on type-token probabilities, the remaining slots are forced
/// empty, and each typed slot takes its best parameter and flag tokens.
Inference decode(const Tensor& probabilities, const std::optional<TypeQuota>& quota = std::nullopt);
Inference zero_shot_infer(const SketchParameterizer& spn, const SketchImage& image,
                          const std::optional<TypeQuota>& quota = std::nullopt);

struct TtoOptions {
  int steps = 100;
  float lr = 0.05f;
};

struct TtoResult {
  Inference inference;
  /// Multiscale loss before each step, then after the last (steps + 1 values).
  std::vector<double> trace;
};

/// Optimizes token logits (initialized to log SPN probabilities) through the
/// SRN, which is frozen first; both networks are left untouched.
TtoResult test_time_optimize(const SketchParameterizer& spn, SketchRenderer& srn, const SketchImage& image,
                             const TtoOptions& options);

struct SampleMetrics {
  double acc = 0.0;
  std::size_t acc_tokens = 0;
  double param_mse = 0.0;
  std::size_t param_tokens = 0;
  double img_mse = 0.0;
  double chamfer = 0.0;
  bool chamfer_empty = false;
  int dropped_slots = 0;
};

struct EvalReport {
  std::vector<SampleMetrics> samples;
  double acc = 0.0;
  double param_mse = 0.0;
  double img_mse = 0.0;
  double chamfer = 0.0;
  int chamfer_empty = 0;
};

/// Maps a sample to token probabilities [128, 73].
using Predictor = std::function<Tensor(const Sample&)>;

Predictor spn_predictor(const SketchParameterizer& spn);
/// Ground-truth one-hot, for sanity checks of the harness.
Predictor oracle_predictor();

SampleMetrics evaluate_sample(const Tensor& probabilities, const Sample& sample, int image_size);
EvalReport evaluate(const Predictor& predictor, const std::vector<Sample>& corpus, int image_size);
nlohmann::json to_json(const EvalReport& report);

/// Writes {config, seed, version} as run_manifest.json in out_dir.
void write_run_manifest(const std::filesystem::path& out_dir, const nlohmann::json& config, std::uint64_t seed);

}  // namespace cadsketch::pipeline
