#include "cadsketch/nets.hpp"

#include <cmath>
#include <numbers>

#include "cadsketch/error.hpp"

namespace cadsketch::nets {

namespace {

Tensor xavier(int in, int out, RandomSource& rng) {
  Tensor t(ad::Shape{in, out});
  const double a = std::sqrt(6.0 / (in + out));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-a, a));
  return t;
}

Tensor normal(ad::Shape shape, double stddev, RandomSource& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, message);
}

void validate_image(int image_size, int patch_size) {
  require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0,
          "image size must be divisible by the patch size");
  require(image_size % 16 == 0, "image size must be divisible by 16 for the five-level pyramid");
}

Tensor as_chw(const Tensor& image) {
  if (image.rank() == 2) return ad::reshape(image, {1, image.dim(0), image.dim(1)});
  return image;
}

}  // namespace

void TransformerConfig::validate() const {
  require(layers >= 1 && heads >= 1 && model_dim >= 1 && ff_dim >= 1, "transformer dims must be positive");
  require(model_dim % heads == 0, "model_dim must be divisible by heads");
}

void SrnConfig::validate() const {
  transformer.validate();
  validate_image(image_size, patch_size);
}

void SpnConfig::validate() const {
  transformer.validate();
  validate_image(image_size, patch_size);
  require(backbone_channels >= 1 && backbone_layers >= 1, "backbone needs at least one layer and channel");
}

SrnConfig paper_srn_config() {
  SrnConfig cfg;
  cfg.transformer = {12, 8, 256, 1024};
  return cfg;
}

SpnConfig paper_spn_config() {
  SpnConfig cfg;
  cfg.transformer = {4, 8, 256, 1024};
  cfg.backbone_channels = 16;
  return cfg;
}

nlohmann::json to_json(const TransformerConfig& cfg) {
  return {{"layers", cfg.layers}, {"heads", cfg.heads}, {"model_dim", cfg.model_dim}, {"ff_dim", cfg.ff_dim}};
}

nlohmann::json to_json(const SrnConfig& cfg) {
  return {{"transformer", to_json(cfg.transformer)},
          {"image_size", cfg.image_size},
          {"patch_size", cfg.patch_size},
          {"init_seed", cfg.init_seed},
          {"fourier_bins", cfg.fourier_bins}};
}

nlohmann::json to_json(const SpnConfig& cfg) {
  return {{"transformer", to_json(cfg.transformer)}, {"image_size", cfg.image_size},
          {"patch_size", cfg.patch_size},            {"backbone_channels", cfg.backbone_channels},
          {"backbone_layers", cfg.backbone_layers},  {"init_seed", cfg.init_seed}};
}

TransformerConfig transformer_from_json(const nlohmann::json& j, TransformerConfig d) {
  d.layers = j.value("layers", d.layers);
  d.heads = j.value("heads", d.heads);
  d.model_dim = j.value("model_dim", d.model_dim);
  d.ff_dim = j.value("ff_dim", d.ff_dim);
  d.validate();
  return d;
}

SrnConfig srn_from_json(const nlohmann::json& j) {
  SrnConfig cfg;
  if (j.contains("transformer")) cfg.transformer = transformer_from_json(j.at("transformer"), cfg.transformer);
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.patch_size = j.value("patch_size", cfg.patch_size);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  cfg.fourier_bins = j.value("fourier_bins", cfg.fourier_bins);
  cfg.validate();
  return cfg;
}

SpnConfig spn_from_json(const nlohmann::json& j) {
  SpnConfig cfg;
  if (j.contains("transformer")) cfg.transformer = transformer_from_json(j.at("transformer"), cfg.transformer);
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.patch_size = j.value("patch_size", cfg.patch_size);
  cfg.backbone_channels = j.value("backbone_channels", cfg.backbone_channels);
  cfg.backbone_layers = j.value("backbone_layers", cfg.backbone_layers);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  cfg.validate();
  return cfg;
}

Tensor sinusoidal_embedding(int positions, int dim) {
  Tensor t(ad::Shape{positions, dim});
  auto v = t.data();
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      v[static_cast<std::size_t>(p) * dim + i] = static_cast<float>(std::sin(p * freq));
      if (i + 1 < dim) v[static_cast<std::size_t>(p) * dim + i + 1] = static_cast<float>(std::cos(p * freq));
    }
  }
  return t;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, RandomSource& rng)
    : weight_(store.add(name + ".weight", xavier(in, out, rng))),
      bias_(store.add(name + ".bias", Tensor(ad::Shape{out}))) {}

Tensor Linear::operator()(const Tensor& x) const { return ad::add(ad::matmul(x, weight_), bias_); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim)
    : gain_(store.add(name + ".gain", Tensor(ad::Shape{dim}, 1.0f))),
      bias_(store.add(name + ".bias", Tensor(ad::Shape{dim}))) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return ad::layer_norm(x, gain_, bias_); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads,
                                       RandomSource& rng)
    : q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng),
      v_(store, name + ".v", dim, dim, rng),
      out_(store, name + ".out", dim, dim, rng),
      heads_(heads) {}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& context) const {
  const Tensor q = q_(query);
  const Tensor k = k_(context);
  const Tensor v = v_(context);
  const int dim = q.dim(1);
  const int head_dim = dim / heads_;
  const float scaling = 1.0f / std::sqrt(static_cast<float>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const int lo = h * head_dim;
    const int hi = lo + head_dim;
    const Tensor qh = heads_ == 1 ? q : ad::slice(q, 1, lo, hi);
    const Tensor kh = heads_ == 1 ? k : ad::slice(k, 1, lo, hi);
    const Tensor vh = heads_ == 1 ? v : ad::slice(v, 1, lo, hi);
    const Tensor weights = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), scaling));
    heads.push_back(ad::matmul(weights, vh));
  }
  return out_(heads_ == 1 ? heads[0] : ad::concat(heads, 1));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, int dim, int hidden, RandomSource& rng)
    : up_(store, name + ".up", dim, hidden, rng), down_(store, name + ".down", hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const { return down_(ad::gelu(up_(x))); }

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, const TransformerConfig& cfg,
                           RandomSource& rng)
    : norm1_(store, name + ".norm1", cfg.model_dim),
      norm2_(store, name + ".norm2", cfg.model_dim),
      attention_(store, name + ".attn", cfg.model_dim, cfg.heads, rng),
      ff_(store, name + ".ff", cfg.model_dim, cfg.ff_dim, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x) const {
  const Tensor h = norm1_(x);
  const Tensor y = ad::add(x, attention_(h, h));
  return ad::add(y, ff_(norm2_(y)));
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name, const TransformerConfig& cfg,
                           RandomSource& rng)
    : norm1_(store, name + ".norm1", cfg.model_dim),
      norm2_(store, name + ".norm2", cfg.model_dim),
      norm3_(store, name + ".norm3", cfg.model_dim),
      self_attention_(store, name + ".self_attn", cfg.model_dim, cfg.heads, rng),
      cross_attention_(store, name + ".cross_attn", cfg.model_dim, cfg.heads, rng),
      ff_(store, name + ".ff", cfg.model_dim, cfg.ff_dim, rng) {}

Tensor DecoderLayer::operator()(const Tensor& queries, const Tensor& memory) const {
  const Tensor h = norm1_(queries);
  const Tensor a = ad::add(queries, self_attention_(h, h));
  const Tensor b = ad::add(a, cross_attention_(norm2_(a), memory));
  return ad::add(b, ff_(norm3_(b)));
}

SketchRenderer::SketchRenderer(const SrnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  RandomSource rng(cfg_.init_seed);
  const auto& t = cfg_.transformer;
  token_embedding_ = Linear(store_, "srn.token_embedding", token::kVocabSize, t.model_dim, rng);
  if (cfg_.fourier_bins) {
    // Bin rows get sin/cos features of the bin value so nearby coordinates start close.
    auto w = token_embedding_.weight().data();
    const int d = t.model_dim;
    for (int tok = token::kParamFirst; tok <= token::kParamLast; ++tok) {
      const double v = dequantize(tok - token::kParamFirst);
      for (int i = 0; i < d / 2; ++i) {
        const double f = std::numbers::pi * (i + 1) * 0.5;
        w[static_cast<std::size_t>(tok) * d + 2 * i] = static_cast<float>(std::sin(f * v));
        w[static_cast<std::size_t>(tok) * d + 2 * i + 1] = static_cast<float>(std::cos(f * v));
      }
    }
  }
  positions_ = sinusoidal_embedding(token::kSequenceLength, t.model_dim);
  for (int i = 0; i < t.layers; ++i) encoder_.emplace_back(store_, "srn.encoder." + std::to_string(i), t, rng);
  encoder_norm_ = LayerNorm(store_, "srn.encoder_norm", t.model_dim);
  patch_queries_ = store_.add("srn.patch_queries", normal({cfg_.patch_count(), t.model_dim}, 1.0, rng));
  for (int i = 0; i < t.layers; ++i) decoder_.emplace_back(store_, "srn.decoder." + std::to_string(i), t, rng);
  decoder_norm_ = LayerNorm(store_, "srn.decoder_norm", t.model_dim);
  patch_head_ = Linear(store_, "srn.patch_head", t.model_dim, cfg_.patch_size * cfg_.patch_size, rng);
  // Start dark: sketches are mostly background.
  for (float& b : patch_head_.bias().data()) b = -3.0f;
}

Tensor SketchRenderer::forward(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != token::kSequenceLength || tokens.dim(1) != token::kVocabSize) {
    throw Error(ErrorCode::ShapeMismatch, "renderer expects tokens (128,73), got " + ad::shape_string(tokens.shape()));
  }
  Tensor x = ad::add(token_embedding_(tokens), positions_);
  for (const auto& layer : encoder_) x = layer(x);
  const Tensor memory = encoder_norm_(x);
  Tensor q = patch_queries_;
  for (const auto& layer : decoder_) q = layer(q, memory);
  const Tensor patches = ad::sigmoid(patch_head_(decoder_norm_(q)));
  const Tensor image = ad::unpatchify(patches, cfg_.patch_size, cfg_.image_size, cfg_.image_size);
  return ad::reshape(image, {cfg_.image_size, cfg_.image_size});
}

SketchParameterizer::SketchParameterizer(const SpnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  RandomSource rng(cfg_.init_seed);
  const auto& t = cfg_.transformer;
  int in_channels = 1;
  for (int i = 0; i < cfg_.backbone_layers; ++i) {
    const int fan_in = in_channels * 9;
    const double a = std::sqrt(6.0 / fan_in);
    Tensor w(ad::Shape{cfg_.backbone_channels, in_channels, 3, 3});
    for (float& v : w.data()) v = static_cast<float>(rng.uniform(-a, a));
    conv_weights_.push_back(store_.add("spn.backbone." + std::to_string(i) + ".weight", w));
    conv_biases_.push_back(
        store_.add("spn.backbone." + std::to_string(i) + ".bias", Tensor(ad::Shape{cfg_.backbone_channels})));
    in_channels = cfg_.backbone_channels;
  }
  const int patch_dim = cfg_.backbone_channels * cfg_.patch_size * cfg_.patch_size;
  patch_embedding_ = Linear(store_, "spn.patch_embedding", patch_dim, t.model_dim, rng);
  positions_ = sinusoidal_embedding(cfg_.patch_count(), t.model_dim);
  for (int i = 0; i < t.layers; ++i) encoder_.emplace_back(store_, "spn.encoder." + std::to_string(i), t, rng);
  encoder_norm_ = LayerNorm(store_, "spn.encoder_norm", t.model_dim);
  token_queries_ = store_.add("spn.token_queries", normal({token::kSequenceLength, t.model_dim}, 1.0, rng));
  for (int i = 0; i < t.layers; ++i) decoder_.emplace_back(store_, "spn.decoder." + std::to_string(i), t, rng);
  decoder_norm_ = LayerNorm(store_, "spn.decoder_norm", t.model_dim);
  token_head_ = Linear(store_, "spn.token_head", t.model_dim, token::kVocabSize, rng);
}

Tensor SketchParameterizer::logits(const Tensor& image) const {
  Tensor x = as_chw(image);
  if (x.rank() != 3 || x.dim(0) != 1 || x.dim(1) != cfg_.image_size || x.dim(2) != cfg_.image_size) {
    throw Error(ErrorCode::ShapeMismatch, "parameterizer expects a (1," + std::to_string(cfg_.image_size) + "," +
                                              std::to_string(cfg_.image_size) + ") image, got " +
                                              ad::shape_string(image.shape()));
  }
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) x = ad::gelu(ad::conv2d(x, conv_weights_[i], conv_biases_[i]));
  Tensor tokens = ad::add(patch_embedding_(ad::patchify(x, cfg_.patch_size)), positions_);
  for (const auto& layer : encoder_) tokens = layer(tokens);
  const Tensor memory = encoder_norm_(tokens);
  Tensor q = token_queries_;
  for (const auto& layer : decoder_) q = layer(q, memory);
  return token_head_(decoder_norm_(q));
}

Tensor one_hot(const TokenGrid& grid) {
  Tensor t(ad::Shape{token::kSequenceLength, token::kVocabSize});
  auto v = t.data();
  for (int i = 0; i < token::kSequenceLength; ++i) {
    const int tok = grid.at(i);
    if (tok < 0 || tok >= token::kVocabSize) {
      throw Error(ErrorCode::OutOfRange, "token " + std::to_string(tok) + " outside the vocabulary");
    }
    v[static_cast<std::size_t>(i) * token::kVocabSize + tok] = 1.0f;
  }
  return t;
}

TokenGrid argmax_grid(const Tensor& probabilities) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != token::kSequenceLength ||
      probabilities.dim(1) != token::kVocabSize) {
    throw Error(ErrorCode::ShapeMismatch, "expected (128,73), got " + ad::shape_string(probabilities.shape()));
  }
  TokenGrid grid;
  const auto v = probabilities.data();
  for (int i = 0; i < token::kSequenceLength; ++i) {
    const float* row = v.data() + static_cast<std::size_t>(i) * token::kVocabSize;
    grid.at(i) = static_cast<int>(std::max_element(row, row + token::kVocabSize) - row);
  }
  return grid;
}

Tensor image_tensor(const SketchImage& image) {
  return Tensor(ad::Shape{1, image.height, image.width}, image.pixels);
}

SketchImage tensor_image(const Tensor& t) {
  const int h = t.dim(-2);
  const int w = t.dim(-1);
  SketchImage img(w, h);
  const auto v = t.data();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::clamp(v[i], 0.0f, 1.0f);
  return img;
}

}  // namespace cadsketch::nets
