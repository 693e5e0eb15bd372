#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <utility>

#include "cadsketch/random.hpp"
#include "cadsketch/raster.hpp"
#include "cadsketch/sketch.hpp"
#include "cadsketch/tokens.hpp"

namespace cadsketch {

struct GeneratorConfig {
  int min_primitives = 6;
  int max_primitives = kMaxPrimitives;
  // Order: line, arc, circle, point.
  std::array<double, 4> type_weights{0.55, 0.20, 0.15, 0.10};
  double construction_probability = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedSketch {
  TokenGrid grid;
  Sketch sketch;
};

/// Draws a valid sketch directly on the quantized grid, so
/// tokenize(result.sketch) == result.grid. Throws RejectionOverflow after
/// 1000 consecutive rejected primitives.
GeneratedSketch sample_sketch(const GeneratorConfig& cfg, RandomSource& rng);

struct CorpusOptions {
  int image_size = kDefaultImageSize;
  bool handdrawn = true;
  HanddrawConfig handdraw;
};

/// Stream index of each split; splits never share a random stream.
enum class Split : int { Train = 0, Val = 1, Test = 2 };
std::string_view to_string(Split split);

/// Seed used for the hand-drawn rendering of sample `index` of `split`.
std::uint64_t handdraw_seed(std::uint64_t corpus_seed, Split split, std::size_t index);

/// Writes {train,val,test}.jsonl, images/{split}/{i}.pgm,
/// images_hd/{split}/{i}.pgm (when enabled) and manifest.json.
nlohmann::json build_corpus(const GeneratorConfig& cfg, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                            const std::filesystem::path& out_dir, const CorpusOptions& options = {});

/// Convenience for in-memory corpora: `count` sketches from stream `split`.
std::vector<GeneratedSketch> generate_split(const GeneratorConfig& cfg, Split split, std::size_t count);

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HanddrawConfig& cfg);
HanddrawConfig handdraw_from_json(const nlohmann::json& j);

}  // namespace cadsketch
