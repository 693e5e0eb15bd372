#include "cadsketch/config.hpp"

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch {

namespace {

const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Arc:
      return "arc";
    case PrimitiveKind::Circle:
      return "circle";
    case PrimitiveKind::Line:
      return "line";
    case PrimitiveKind::Point:
      return "point";
  }
  return "unknown";
}

}  // namespace

void RunConfig::validate() const {
  generator.validate();
  srn.validate();
  spn.validate();
  handdraw.validate();
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (steps < 0 || epochs < 0) throw Error(ErrorCode::InvalidConfig, "steps and epochs must be >= 0");
  if (!(lr > 0.0f) || !(tto_lr > 0.0f)) throw Error(ErrorCode::InvalidConfig, "learning rates must be > 0");
  if (tto_steps < 0) throw Error(ErrorCode::InvalidConfig, "tto_steps must be >= 0");
  if (!(semi.render >= 0.0) || !(semi.param >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "lambda_render and lambda_param must be >= 0");
  }
  if (srn.image_size != spn.image_size) {
    throw Error(ErrorCode::InvalidConfig, "srn and spn image sizes differ");
  }
}

int RunConfig::resolved_steps(std::size_t n) const {
  if (steps > 0) return steps;
  const std::size_t per_epoch = (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
  return static_cast<int>(per_epoch * static_cast<std::size_t>(epochs));
}

pipeline::TrainOptions RunConfig::train_options(std::size_t n) const {
  pipeline::TrainOptions o;
  o.steps = resolved_steps(n);
  o.batch_size = batch_size;
  o.adam.lr = lr;
  o.adam.clip_norm = clip_norm;
  o.seed = seed;
  return o;
}

pipeline::SampleOptions RunConfig::sample_options(Split split) const {
  pipeline::SampleOptions o;
  o.image_size = spn.image_size;
  o.style = input_style;
  o.handdraw = handdraw;
  o.corpus_seed = corpus_seed;
  o.split = split;
  return o;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.mode = j.value("mode", c.mode);
    c.seed = j.value("seed", c.seed);
    if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    if (j.contains("srn")) c.srn = nets::srn_from_json(j.at("srn"));
    if (j.contains("spn")) c.spn = nets::spn_from_json(j.at("spn"));
    if (j.contains("loss")) c.loss = nets::image_loss_from_string(j.at("loss").get<std::string>());
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.epochs = j.value("epochs", c.epochs);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("input_style")) c.input_style = pipeline::input_style_from_string(j.at("input_style"));
    if (j.contains("handdraw")) c.handdraw = handdraw_from_json(j.at("handdraw"));
    c.corpus_seed = j.value("corpus_seed", c.corpus_seed);
    c.train_corpus = j.value("train_corpus", c.train_corpus);
    c.val_corpus = j.value("val_corpus", c.val_corpus);
    c.labeled_corpus = j.value("labeled_corpus", c.labeled_corpus);
    c.unlabeled_corpus = j.value("unlabeled_corpus", c.unlabeled_corpus);
    c.image_dir = j.value("image_dir", c.image_dir);
    c.srn_checkpoint = j.value("srn_checkpoint", c.srn_checkpoint);
    c.spn_checkpoint = j.value("spn_checkpoint", c.spn_checkpoint);
    if (j.contains("type_quota") && !j.at("type_quota").is_null()) {
      c.type_quota = pipeline::type_quota_from_json(j.at("type_quota"));
    }
    c.semi.render = j.value("lambda_render", c.semi.render);
    c.semi.param = j.value("lambda_param", c.semi.param);
    c.tto_steps = j.value("tto_steps", c.tto_steps);
    c.tto_lr = j.value("tto_lr", c.tto_lr);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {
      {"mode", c.mode},
      {"seed", c.seed},
      {"generator", to_json(c.generator)},
      {"n_train", c.n_train},
      {"n_val", c.n_val},
      {"n_test", c.n_test},
      {"srn", nets::to_json(c.srn)},
      {"spn", nets::to_json(c.spn)},
      {"loss", nets::to_string(c.loss)},
      {"lr", c.lr},
      {"batch_size", c.batch_size},
      {"steps", c.steps},
      {"epochs", c.epochs},
      {"clip_norm", c.clip_norm},
      {"input_style", pipeline::to_string(c.input_style)},
      {"handdraw", to_json(c.handdraw)},
      {"corpus_seed", c.corpus_seed},
      {"train_corpus", c.train_corpus},
      {"val_corpus", c.val_corpus},
      {"labeled_corpus", c.labeled_corpus},
      {"unlabeled_corpus", c.unlabeled_corpus},
      {"image_dir", c.image_dir},
      {"srn_checkpoint", c.srn_checkpoint},
      {"spn_checkpoint", c.spn_checkpoint},
      {"lambda_render", c.semi.render},
      {"lambda_param", c.semi.param},
      {"tto_steps", c.tto_steps},
      {"tto_lr", c.tto_lr},
  };
  if (c.type_quota) {
    nlohmann::json q = nlohmann::json::object();
    for (const auto& [kind, n] : *c.type_quota) q[kind_name(kind)] = n;
    j["type_quota"] = q;
  } else {
    j["type_quota"] = nullptr;
  }
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace cadsketch
