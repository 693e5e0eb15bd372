#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "cadsketch/losses.hpp"
#include "cadsketch/nets.hpp"
#include "cadsketch/pipeline.hpp"
#include "cadsketch/synthgen.hpp"

namespace cadsketch {

/// Everything a CLI run needs; read from a JSON file, missing keys keep
/// their defaults.
struct RunConfig {
  std::string mode;
  std::uint64_t seed = 0;

  GeneratorConfig generator;
  std::size_t n_train = 1000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;

  nets::SrnConfig srn;
  nets::SpnConfig spn;
  nets::ImageLossKind loss = nets::ImageLossKind::MultiscaleL2;

  float lr = 1e-4f;
  int batch_size = 16;
  int steps = 0;   // optimizer steps; 0 derives them from epochs
  int epochs = 1;
  float clip_norm = 0.0f;

  pipeline::InputStyle input_style = pipeline::InputStyle::Precise;
  HanddrawConfig handdraw;
  std::uint64_t corpus_seed = 0;  // seeds hand-drawn renders of corpus samples

  std::string train_corpus;
  std::string val_corpus;
  std::string labeled_corpus;
  std::string unlabeled_corpus;
  std::string image_dir;
  std::string srn_checkpoint;
  std::string spn_checkpoint;

  std::optional<pipeline::TypeQuota> type_quota;
  pipeline::SemiWeights semi;

  int tto_steps = 100;
  float tto_lr = 0.05f;

  void validate() const;
  /// Steps for a corpus of n items (steps, or epochs * ceil(n / batch)).
  int resolved_steps(std::size_t n) const;
  pipeline::TrainOptions train_options(std::size_t n) const;
  pipeline::SampleOptions sample_options(Split split = Split::Train) const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cadsketch
