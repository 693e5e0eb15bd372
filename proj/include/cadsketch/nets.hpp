#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cadsketch/ops.hpp"
#include "cadsketch/optim.hpp"
#include "cadsketch/random.hpp"
#include "cadsketch/raster.hpp"
#include "cadsketch/tokens.hpp"

namespace cadsketch::nets {

using ad::ParameterStore;
using ad::Tensor;

struct TransformerConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ff_dim = 128;

  void validate() const;
};

/// Renderer: token probabilities (8n x 73) -> image.
struct SrnConfig {
  TransformerConfig transformer;
  int image_size = kDefaultImageSize;
  int patch_size = 16;
  std::uint64_t init_seed = 1;
  /// Initialise parameter-bin embedding rows with sin/cos features of the bin value.
  bool fourier_bins = true;

  int patch_count() const { return (image_size / patch_size) * (image_size / patch_size); }
  void validate() const;
};

/// Parameterizer: image -> token probabilities (8n x 73).
struct SpnConfig {
  TransformerConfig transformer;
  int image_size = kDefaultImageSize;
  int patch_size = 16;
  int backbone_channels = 8;
  int backbone_layers = 3;
  std::uint64_t init_seed = 2;

  int patch_count() const { return (image_size / patch_size) * (image_size / patch_size); }
  void validate() const;
};

/// Paper-scale dimensions (SRN 12 layers, SPN 4+4 layers, 8 heads, d = 256).
SrnConfig paper_srn_config();
SpnConfig paper_spn_config();

nlohmann::json to_json(const TransformerConfig& cfg);
nlohmann::json to_json(const SrnConfig& cfg);
nlohmann::json to_json(const SpnConfig& cfg);
TransformerConfig transformer_from_json(const nlohmann::json& j, TransformerConfig defaults = {});
SrnConfig srn_from_json(const nlohmann::json& j);
SpnConfig spn_from_json(const nlohmann::json& j);

/// Fixed sinusoidal embeddings [positions, dim].
Tensor sinusoidal_embedding(int positions, int dim);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, RandomSource& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor weight() const { return weight_; }
  Tensor bias() const { return bias_; }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gain_;
  Tensor bias_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads, RandomSource& rng);
  Tensor operator()(const Tensor& query, const Tensor& context) const;

 private:
  Linear q_, k_, v_, out_;
  int heads_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, int dim, int hidden, RandomSource& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  Linear up_, down_;
};

/// Pre-norm encoder layer: self-attention then feed-forward, both residual.
class EncoderLayer {
 public:
  EncoderLayer(ParameterStore& store, const std::string& name, const TransformerConfig& cfg, RandomSource& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  LayerNorm norm1_, norm2_;
  MultiHeadAttention attention_;
  FeedForward ff_;
};

/// Pre-norm decoder layer: self-attention, cross-attention, feed-forward.
class DecoderLayer {
 public:
  DecoderLayer(ParameterStore& store, const std::string& name, const TransformerConfig& cfg, RandomSource& rng);
  Tensor operator()(const Tensor& queries, const Tensor& memory) const;

 private:
  LayerNorm norm1_, norm2_, norm3_;
  MultiHeadAttention self_attention_, cross_attention_;
  FeedForward ff_;
};

/// Sketch rendering network. Token rows are embedded by a linear map (so a
/// probability row embeds as the mixture of its one-hot embeddings), summed
/// with fixed positional embeddings, encoded, then queried by one learnable
/// query per image patch; a sigmoid head emits each patch and patches are
/// assembled in row-major order.
class SketchRenderer {
 public:
  explicit SketchRenderer(const SrnConfig& cfg);

  const SrnConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// tokens [128, 73] -> image [H, W] with values in (0, 1).
  Tensor forward(const Tensor& tokens) const;
  /// Token embedding only, exposed for the linearity property.
  Tensor embed_tokens(const Tensor& tokens) const { return token_embedding_(tokens); }

 private:
  SrnConfig cfg_;
  ParameterStore store_;
  Linear token_embedding_;
  Tensor positions_;
  std::vector<EncoderLayer> encoder_;
  LayerNorm encoder_norm_;
  Tensor patch_queries_;
  std::vector<DecoderLayer> decoder_;
  LayerNorm decoder_norm_;
  Linear patch_head_;
};

/// Sketch parameterization network: conv backbone, patch embedding with fixed
/// positional embeddings, transformer encoder, and a decoder over one learned
/// query per output token, classified independently with a softmax.
class SketchParameterizer {
 public:
  explicit SketchParameterizer(const SpnConfig& cfg);

  const SpnConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// image [1, H, W] (or [H, W]) -> token logits [128, 73].
  Tensor logits(const Tensor& image) const;
  /// image -> row-stochastic token probabilities [128, 73].
  Tensor forward(const Tensor& image) const { return ad::softmax(logits(image)); }

 private:
  SpnConfig cfg_;
  ParameterStore store_;
  std::vector<Tensor> conv_weights_;
  std::vector<Tensor> conv_biases_;
  Linear patch_embedding_;
  Tensor positions_;
  std::vector<EncoderLayer> encoder_;
  LayerNorm encoder_norm_;
  Tensor token_queries_;
  std::vector<DecoderLayer> decoder_;
  LayerNorm decoder_norm_;
  Linear token_head_;
};

/// One-hot encoding [128, 73] of a token grid.
Tensor one_hot(const TokenGrid& grid);
/// Row-wise argmax of token probabilities (or logits) as a grid.
TokenGrid argmax_grid(const Tensor& probabilities);

/// Image tensor [1, H, W] from a raster, and back (values clamped to [0,1]).
Tensor image_tensor(const SketchImage& image);
SketchImage tensor_image(const Tensor& t);

}  // namespace cadsketch::nets
