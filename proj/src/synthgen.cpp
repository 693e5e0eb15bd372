#include "cadsketch/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch {

namespace {

constexpr int kMaxConsecutiveRejections = 1000;
constexpr std::array<PrimitiveKind, 4> kWeightOrder{PrimitiveKind::Line, PrimitiveKind::Arc, PrimitiveKind::Circle,
                                                    PrimitiveKind::Point};

bool inside_unit(double v) { return v >= -1e-12 && v <= 1.0 + 1e-12; }

bool arc_inside_image(const Primitive& p) {
  const auto circle = circumcircle(p.start(), p.mid(), p.end());
  if (!circle) return false;
  constexpr int samples = 64;
  for (int i = 0; i <= samples; ++i) {
    const double theta = circle->start_angle + circle->sweep * i / samples;
    if (!inside_unit(circle->center.x + circle->radius * std::cos(theta)) ||
        !inside_unit(circle->center.y + circle->radius * std::sin(theta))) {
      return false;
    }
  }
  return true;
}

bool acceptable(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::Circle: {
      const double r = p.radius();
      return p.center().x - r >= 0.0 && p.center().x + r <= 1.0 && p.center().y - r >= 0.0 && p.center().y + r <= 1.0;
    }
    case PrimitiveKind::Arc: return arc_inside_image(p);
    default: return true;
  }
}

TokenSlot draw_slot(PrimitiveKind kind, const GeneratorConfig& cfg, RandomSource& rng) {
  TokenSlot slot{};
  slot[0] = token::type_token(kind);
  const int count = param_count(kind);
  for (int i = 0; i < count; ++i) {
    const bool radius = kind == PrimitiveKind::Circle && i == 2;
    slot[i + 1] = token::kParamFirst + rng.uniform_int(radius ? 1 : 0, kBinCount - 1);
  }
  slot[count + 1] = rng.bernoulli(cfg.construction_probability) ? token::kConstruction : token::kNonConstruction;
  return slot;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (min_primitives < 1 || max_primitives > kMaxPrimitives || min_primitives > max_primitives) {
    throw Error(ErrorCode::InvalidConfig, "primitive count range must lie within [1,16]");
  }
  double total = 0.0;
  for (double w : type_weights) {
    if (w < 0.0) throw Error(ErrorCode::InvalidConfig, "type weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "type weights must sum to 1");
  if (construction_probability < 0.0 || construction_probability > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "construction probability must lie in [0,1]");
  }
}

GeneratedSketch sample_sketch(const GeneratorConfig& cfg, RandomSource& rng) {
  cfg.validate();
  GeneratedSketch out;
  const int count = rng.uniform_int(cfg.min_primitives, cfg.max_primitives);
  for (int i = 0; i < count; ++i) {
    int rejections = 0;
    while (true) {
      const PrimitiveKind kind = kWeightOrder[static_cast<std::size_t>(rng.categorical(cfg.type_weights))];
      const TokenSlot slot = draw_slot(kind, cfg, rng);
      const SlotCheck check = check_slot(slot);
      if (check.status == SlotStatus::Valid && acceptable(*check.primitive)) {
        out.grid.slots[static_cast<std::size_t>(i)] = slot;
        out.sketch.primitives.push_back(*check.primitive);
        break;
      }
      if (++rejections >= kMaxConsecutiveRejections) {
        throw Error(ErrorCode::RejectionOverflow,
                    std::to_string(kMaxConsecutiveRejections) + " consecutive rejected primitives");
      }
    }
  }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

std::uint64_t handdraw_seed(std::uint64_t corpus_seed, Split split, std::size_t index) {
  return splitmix64(splitmix64(corpus_seed ^ (0x68616e64ULL + static_cast<std::uint64_t>(split))) ^ index);
}

std::vector<GeneratedSketch> generate_split(const GeneratorConfig& cfg, Split split, std::size_t count) {
  RandomSource rng = RandomSource(cfg.seed).split(static_cast<std::uint64_t>(split));
  std::vector<GeneratedSketch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_sketch(cfg, rng));
  return out;
}

nlohmann::json build_corpus(const GeneratorConfig& cfg, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                            const std::filesystem::path& out_dir, const CorpusOptions& options) {
  cfg.validate();
  options.handdraw.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  nlohmann::json counts;
  const std::array<std::pair<Split, std::size_t>, 3> splits{
      {{Split::Train, n_train}, {Split::Val, n_val}, {Split::Test, n_test}}};
  for (const auto& [split, n] : splits) {
    const auto name = std::string(to_string(split));
    const auto samples = generate_split(cfg, split, n);
    std::vector<Sketch> sketches;
    sketches.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sketch& s = samples[i].sketch;
      sketches.push_back(s);
      const auto file = std::to_string(i) + ".pgm";
      write_pgm(rasterize(s, options.image_size, options.image_size), out_dir / "images" / name / file);
      if (options.handdrawn) {
        HanddrawConfig hd = options.handdraw;
        hd.seed = handdraw_seed(cfg.seed, split, i);
        write_pgm(synthesize_handdrawn(s, hd, options.image_size, options.image_size), out_dir / "images_hd" / name / file);
      }
    }
    write_dataset(sketches, out_dir / (name + ".jsonl"));
    counts[name] = n;
  }

  nlohmann::json manifest = {
      {"seed", cfg.seed},
      {"generator", to_json(cfg)},
      {"counts", counts},
      {"image_size", options.image_size},
      {"handdrawn", options.handdrawn},
      {"handdraw", to_json(options.handdraw)},
      {"version", std::string(build_version())},
  };
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {{"min_primitives", cfg.min_primitives},
          {"max_primitives", cfg.max_primitives},
          {"type_weights",
           {{"line", cfg.type_weights[0]},
            {"arc", cfg.type_weights[1]},
            {"circle", cfg.type_weights[2]},
            {"point", cfg.type_weights[3]}}},
          {"construction_probability", cfg.construction_probability},
          {"seed", cfg.seed}};
}

GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  cfg.min_primitives = j.value("min_primitives", cfg.min_primitives);
  cfg.max_primitives = j.value("max_primitives", cfg.max_primitives);
  if (j.contains("type_weights")) {
    const auto& w = j.at("type_weights");
    cfg.type_weights = {w.value("line", 0.0), w.value("arc", 0.0), w.value("circle", 0.0), w.value("point", 0.0)};
  }
  cfg.construction_probability = j.value("construction_probability", cfg.construction_probability);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const HanddrawConfig& cfg) {
  return {{"translation_sigma", cfg.translation_sigma},
          {"rotation_sigma_deg", cfg.rotation_sigma_deg},
          {"gp_lengthscale", cfg.gp_lengthscale},
          {"gp_amplitude", cfg.gp_amplitude},
          {"points_per_stroke", cfg.points_per_stroke},
          {"seed", cfg.seed}};
}

HanddrawConfig handdraw_from_json(const nlohmann::json& j) {
  HanddrawConfig cfg;
  cfg.translation_sigma = j.value("translation_sigma", cfg.translation_sigma);
  cfg.rotation_sigma_deg = j.value("rotation_sigma_deg", cfg.rotation_sigma_deg);
  cfg.gp_lengthscale = j.value("gp_lengthscale", cfg.gp_lengthscale);
  cfg.gp_amplitude = j.value("gp_amplitude", cfg.gp_amplitude);
  cfg.points_per_stroke = j.value("points_per_stroke", cfg.points_per_stroke);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace cadsketch
