#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadsketch/tensor.hpp"

namespace cadsketch::ad {

struct ParameterEntry {
  std::string name;
  Tensor value;
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t step = 0;
};

/// Named trainable tensors in registration order, with Adam state.
class ParameterStore {
 public:
  /// Registers a parameter (requires_grad on). Throws InvalidConfig on a duplicate name.
  Tensor add(const std::string& name, Tensor init);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<ParameterEntry>& entries() { return entries_; }
  const std::vector<ParameterEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  /// Frozen parameters receive no gradient and are skipped by the optimizer.
  void set_trainable(bool trainable);
  void zero_grad();
  void clear_grad();

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t fingerprint() const;

 private:
  std::vector<ParameterEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  /// Multiplies raw gradients first (e.g. 1/batch for accumulated sums).
  float grad_scale = 1.0f;
  /// Global gradient-norm clip; 0 disables.
  float clip_norm = 0.0f;
};

/// Bias-corrected Adam update of every trainable parameter, then releases the
/// gradients. Throws MissingGradient if a trainable parameter has none.
/// Returns the (scaled, pre-clip) global gradient norm.
double adam_step(ParameterStore& store, const AdamOptions& options);

}  // namespace cadsketch::ad
