#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cadsketch/checkpoint.hpp"
#include "cadsketch/config.hpp"
#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/gradsuite.hpp"
#include "cadsketch/pipeline.hpp"
#include "cadsketch/raster.hpp"
#include "cadsketch/synthgen.hpp"

namespace fs = std::filesystem;
using namespace cadsketch;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

struct ExtraArgs {
  std::string input;
  std::string image;
  std::string srn;
  std::string spn;
  int size = 0;
  int fit_steps = 300;
  int log_every = 100;
};

RunConfig resolve_config(const CommonArgs& common, const ExtraArgs& extra, const std::string& mode) {
  RunConfig cfg = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  cfg.mode = mode;
  if (common.seed) cfg.seed = *common.seed;
  if (!extra.srn.empty()) cfg.srn_checkpoint = extra.srn;
  if (!extra.spn.empty()) cfg.spn_checkpoint = extra.spn;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

nlohmann::json log_json(const pipeline::TrainLog& log) {
  return {{"step_losses", log.step_losses},
          {"epoch_losses", log.epoch_losses},
          {"final_loss", log.final_loss},
          {"matching_violations", log.matching_violations}};
}

std::function<void(int, double)> progress(int every) {
  return [every](int step, double loss) {
    if (every > 0 && (step + 1) % every == 0) std::fprintf(stderr, "step %d loss %.6f\n", step + 1, loss);
  };
}

std::optional<fs::path> image_dir(const RunConfig& cfg) {
  if (cfg.image_dir.empty()) return std::nullopt;
  return fs::path(cfg.image_dir);
}

std::vector<pipeline::Sample> corpus(const std::string& path, const RunConfig& cfg, const char* what,
                                     Split split = Split::Train) {
  if (path.empty()) throw Error(ErrorCode::InvalidConfig, std::string(what) + " corpus path is not set");
  return pipeline::load_samples(path, cfg.sample_options(split), image_dir(cfg));
}

nets::SketchRenderer load_srn(const RunConfig& cfg) {
  if (cfg.srn_checkpoint.empty()) throw Error(ErrorCode::InvalidConfig, "srn_checkpoint is not set");
  nets::SketchRenderer srn(cfg.srn);
  nets::load_into(srn.parameters(), fs::path(cfg.srn_checkpoint));
  return srn;
}

nets::SketchParameterizer make_spn(const RunConfig& cfg, bool require_checkpoint) {
  nets::SketchParameterizer spn(cfg.spn);
  if (!cfg.spn_checkpoint.empty()) {
    nets::load_into(spn.parameters(), fs::path(cfg.spn_checkpoint));
  } else if (require_checkpoint) {
    throw Error(ErrorCode::InvalidConfig, "spn_checkpoint is not set");
  }
  return spn;
}

SketchImage load_image(const std::string& path, int size) {
  if (path.empty()) throw Error(ErrorCode::InvalidConfig, "--image is required");
  SketchImage img = read_pgm(path);
  if (img.width != size || img.height != size) {
    throw Error(ErrorCode::ShapeMismatch, "image " + path + " is " + std::to_string(img.width) + "x" +
                                              std::to_string(img.height) + ", expected " + std::to_string(size));
  }
  return img;
}

void write_inference(const fs::path& out, const pipeline::Inference& inf, int size) {
  write_file_atomic(out / "prediction.jsonl", sketch_to_json_line(inf.decoded.sketch) + "\n");
  write_pgm(rasterize(inf.decoded.sketch, size, size), out / "prediction.pgm");
  write_json(out / "tokens.json", {{"tokens", inf.grid.slots}, {"dropped", inf.decoded.dropped}});
}

int cmd_synth_gen(const RunConfig& cfg, const fs::path& out) {
  CorpusOptions options;
  options.image_size = cfg.srn.image_size;
  options.handdrawn = cfg.input_style == pipeline::InputStyle::Handdrawn;
  options.handdraw = cfg.handdraw;
  GeneratorConfig gen = cfg.generator;
  gen.seed = cfg.seed;
  build_corpus(gen, cfg.n_train, cfg.n_val, cfg.n_test, out, options);
  std::printf("wrote %zu/%zu/%zu sketches to %s\n", cfg.n_train, cfg.n_val, cfg.n_test, out.c_str());
  return 0;
}

int cmd_render(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out, bool handdrawn) {
  if (extra.input.empty()) throw Error(ErrorCode::InvalidConfig, "--input is required");
  const int size = extra.size > 0 ? extra.size : cfg.srn.image_size;
  const auto sketches = read_dataset(extra.input);
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    SketchImage img;
    if (handdrawn) {
      HanddrawConfig hd = cfg.handdraw;
      hd.seed = handdraw_seed(cfg.seed, Split::Train, i);
      img = synthesize_handdrawn(sketches[i], hd, size, size);
    } else {
      img = rasterize(sketches[i], size, size);
    }
    write_pgm(img, out / (std::to_string(i) + ".pgm"));
  }
  std::printf("rendered %zu sketches to %s\n", sketches.size(), out.c_str());
  return 0;
}

int cmd_train_srn(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  nets::SrnConfig srn_cfg = cfg.srn;
  srn_cfg.init_seed ^= cfg.seed;
  nets::SketchRenderer srn(srn_cfg);
  pipeline::TrainLog log;
  if (cfg.train_corpus.empty()) {
    pipeline::TrainOptions options = cfg.train_options(static_cast<std::size_t>(cfg.batch_size));
    options.on_step = progress(extra.log_every);
    GeneratorConfig gen = cfg.generator;
    gen.seed = cfg.seed;
    log = pipeline::train_srn_generated(srn, gen, cfg.loss, options);
  } else {
    const auto data = corpus(cfg.train_corpus, cfg, "train");
    pipeline::TrainOptions options = cfg.train_options(data.size());
    options.on_step = progress(extra.log_every);
    log = pipeline::train_srn(srn, data, cfg.loss, options);
  }
  nets::save_checkpoint(srn.parameters(), out / "srn.pcso");
  write_json(out / "train_log.json", log_json(log));
  std::printf("final loss %.6f\n", log.final_loss);
  return 0;
}

int cmd_pretrain(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  nets::SketchRenderer srn = load_srn(cfg);
  nets::SketchParameterizer spn = make_spn(cfg, false);
  const auto data = corpus(cfg.train_corpus, cfg, "train");
  pipeline::TrainOptions options = cfg.train_options(data.size());
  options.on_step = progress(extra.log_every);
  const auto log = pipeline::pretrain_spn(spn, srn, data, options);
  nets::save_checkpoint(spn.parameters(), out / "spn.pcso");
  write_json(out / "train_log.json", log_json(log));
  std::printf("final loss %.6f\n", log.final_loss);
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  nets::SketchParameterizer spn = make_spn(cfg, false);
  const std::string& path = cfg.labeled_corpus.empty() ? cfg.train_corpus : cfg.labeled_corpus;
  const auto data = corpus(path, cfg, "labeled");
  pipeline::TrainOptions options = cfg.train_options(data.size());
  options.on_step = progress(extra.log_every);
  const auto log = pipeline::finetune_spn(spn, data, options);
  nets::save_checkpoint(spn.parameters(), out / "spn.pcso");
  write_json(out / "train_log.json", log_json(log));
  std::printf("final loss %.6f, matching violations %d\n", log.final_loss, log.matching_violations);
  return 0;
}

int cmd_semi(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  nets::SketchRenderer srn = load_srn(cfg);
  nets::SketchParameterizer spn = make_spn(cfg, false);
  const auto labeled = corpus(cfg.labeled_corpus, cfg, "labeled");
  const auto unlabeled = corpus(cfg.unlabeled_corpus, cfg, "unlabeled");
  pipeline::TrainOptions options = cfg.train_options(labeled.size() + unlabeled.size());
  options.on_step = progress(extra.log_every);
  const auto log = pipeline::train_semi(spn, srn, labeled, unlabeled, cfg.semi, options);
  nets::save_checkpoint(spn.parameters(), out / "spn.pcso");
  write_json(out / "train_log.json", log_json(log));
  std::printf("final loss %.6f\n", log.final_loss);
  return 0;
}

int cmd_infer(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  const nets::SketchParameterizer spn = make_spn(cfg, true);
  const SketchImage img = load_image(extra.image, cfg.spn.image_size);
  const auto inf = pipeline::zero_shot_infer(spn, img, cfg.type_quota);
  write_inference(out, inf, cfg.spn.image_size);
  std::printf("%zu primitives (%d slots dropped)\n", inf.decoded.sketch.primitives.size(), inf.decoded.dropped);
  return 0;
}

int cmd_ttopt(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  const nets::SketchParameterizer spn = make_spn(cfg, true);
  nets::SketchRenderer srn = load_srn(cfg);
  const SketchImage img = load_image(extra.image, cfg.spn.image_size);
  const auto result = pipeline::test_time_optimize(spn, srn, img, {cfg.tto_steps, cfg.tto_lr});
  write_inference(out, result.inference, cfg.spn.image_size);
  write_json(out / "trace.json", {{"trace", result.trace}});
  std::printf("loss %.6f -> %.6f\n", result.trace.front(), result.trace.back());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out) {
  const nets::SketchParameterizer spn = make_spn(cfg, true);
  const auto data = corpus(cfg.val_corpus, cfg, "val", Split::Val);
  const auto report = pipeline::evaluate(pipeline::spn_predictor(spn), data, cfg.spn.image_size);
  write_json(out / "report.json", pipeline::to_json(report));
  std::printf("acc %.4f param_mse %.4f img_mse %.4f chamfer %.4f (%d empty)\n", report.acc, report.param_mse,
              report.img_mse, report.chamfer, report.chamfer_empty);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const ExtraArgs& extra, const fs::path& out) {
  std::vector<OpGradResult> results = op_gradient_suite(cfg.seed);
  ad::GradCheckOptions render_options;
  render_options.largest_first = true;
  if (cfg.srn_checkpoint.empty()) {
    nets::SketchRenderer srn = fitted_renderer(cfg.srn, cfg.seed, extra.fit_steps);
    results.push_back(render_path_gradient(srn, cfg.seed, 20, render_options));
  } else {
    nets::SketchRenderer srn = load_srn(cfg);
    results.push_back(render_path_gradient(srn, cfg.seed, 20, render_options));
  }
  nlohmann::json j = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.report.passed;
    std::printf("%-24s rel %.3e  %s\n", r.name.c_str(), r.report.max_relative_error,
                r.report.passed ? "ok" : "FAIL");
    j.push_back({{"name", r.name},
                 {"max_relative_error", r.report.max_relative_error},
                 {"max_absolute_error", r.report.max_absolute_error},
                 {"coordinates", r.report.coordinates},
                 {"passed", r.report.passed}});
  }
  write_json(out / "gradcheck.json", j);
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large tensors every step; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Raster CAD sketch parameterization"};
  app.require_subcommand(1);
  CommonArgs common;
  ExtraArgs extra;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Overrides the config seed");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--log-every", extra.log_every, "Print the loss every N steps (0 disables)");
  };
  auto add_checkpoints = [&](CLI::App* sub) {
    sub->add_option("--srn", extra.srn, "Renderer checkpoint (overrides the config)");
    sub->add_option("--spn", extra.spn, "Parameterizer checkpoint (overrides the config)");
  };

  struct Entry {
    std::string name;
    CLI::App* app;
  };
  std::vector<Entry> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    subs.push_back({name, sub});
    return sub;
  };

  add("synth-gen", "Generate train/val/test corpora with renders");
  auto* render = add("render", "Rasterize a JSONL sketch file to PGMs");
  render->add_option("--input", extra.input, "JSONL sketches")->check(CLI::ExistingFile);
  render->add_option("--size", extra.size, "Image size");
  auto* handdraw = add("handdraw", "Synthesize hand-drawn PGMs for a JSONL sketch file");
  handdraw->add_option("--input", extra.input, "JSONL sketches")->check(CLI::ExistingFile);
  handdraw->add_option("--size", extra.size, "Image size");
  add("train-srn", "Train the renderer");
  add_checkpoints(add("pretrain-spn", "Pretrain the parameterizer through the frozen renderer"));
  add_checkpoints(add("finetune-spn", "Fine-tune the parameterizer on labeled sketches"));
  add_checkpoints(add("train-semi", "Alternate labeled and rendering-supervised batches"));
  auto* infer = add("infer", "Predict a sketch from an image");
  add_checkpoints(infer);
  infer->add_option("--image", extra.image, "PGM image")->check(CLI::ExistingFile);
  auto* ttopt = add("ttopt", "Predict, then refine token logits through the renderer");
  add_checkpoints(ttopt);
  ttopt->add_option("--image", extra.image, "PGM image")->check(CLI::ExistingFile);
  add_checkpoints(add("eval", "Evaluate a parameterizer on the validation corpus"));
  auto* gradcheck = add("gradcheck", "Finite-difference check of every op and the render path");
  add_checkpoints(gradcheck);
  gradcheck->add_option("--fit-steps", extra.fit_steps, "Renderer fitting steps when no --srn is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string name;
  for (const auto& s : subs) {
    if (s.app->parsed()) name = s.name;
  }
  try {
    const RunConfig cfg = resolve_config(common, extra, name);
    const fs::path out = common.out;
    fs::create_directories(out);
    pipeline::write_run_manifest(out, to_json(cfg), cfg.seed);
    if (name == "synth-gen") return cmd_synth_gen(cfg, out);
    if (name == "render") return cmd_render(cfg, extra, out, false);
    if (name == "handdraw") return cmd_render(cfg, extra, out, true);
    if (name == "train-srn") return cmd_train_srn(cfg, extra, out);
    if (name == "pretrain-spn") return cmd_pretrain(cfg, extra, out);
    if (name == "finetune-spn") return cmd_finetune(cfg, extra, out);
    if (name == "train-semi") return cmd_semi(cfg, extra, out);
    if (name == "infer") return cmd_infer(cfg, extra, out);
    if (name == "ttopt") return cmd_ttopt(cfg, extra, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "gradcheck") return cmd_gradcheck(cfg, extra, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
