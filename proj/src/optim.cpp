#include "cadsketch/optim.hpp"

#include <cmath>
#include <string_view>

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch::ad {

Tensor ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
  init.set_requires_grad(true);
  ParameterEntry entry;
  entry.name = name;
  entry.value = init;
  entry.first_moment.assign(init.size(), 0.0f);
  entry.second_moment.assign(init.size(), 0.0f);
  index_[name] = entries_.size();
  entries_.push_back(std::move(entry));
  return init;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::CheckpointMismatch, "no parameter named " + name);
  return entries_[it->second].value;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParameterStore::set_trainable(bool trainable) {
  for (auto& e : entries_) {
    e.value.set_requires_grad(trainable);
    if (!trainable) e.value.clear_grad();
  }
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    if (e.value.requires_grad()) e.value.zero_grad();
  }
}

void ParameterStore::clear_grad() {
  for (auto& e : entries_) e.value.clear_grad();
}

std::uint64_t ParameterStore::fingerprint() const {
  std::string bytes;
  for (const auto& e : entries_) {
    bytes += e.name;
    bytes += shape_string(e.value.shape());
    const auto v = e.value.data();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return fnv1a64(bytes);
}

double adam_step(ParameterStore& store, const AdamOptions& options) {
  double norm_sq = 0.0;
  for (auto& e : store.entries()) {
    if (!e.value.requires_grad()) continue;
    if (!e.value.has_grad()) throw Error(ErrorCode::MissingGradient, "parameter " + e.name + " has no gradient");
    for (float g : e.value.grad()) {
      const double s = static_cast<double>(g) * options.grad_scale;
      norm_sq += s * s;
    }
  }
  const double norm = std::sqrt(norm_sq);
  float factor = options.grad_scale;
  if (options.clip_norm > 0.0f && norm > options.clip_norm) {
    factor *= static_cast<float>(options.clip_norm / norm);
  }

  for (auto& e : store.entries()) {
    if (!e.value.requires_grad()) continue;
    ++e.step;
    const float c1 = 1.0f - std::pow(options.beta1, static_cast<float>(e.step));
    const float c2 = 1.0f - std::pow(options.beta2, static_cast<float>(e.step));
    auto w = e.value.data();
    const auto g = e.value.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = g[i] * factor;
      e.first_moment[i] = options.beta1 * e.first_moment[i] + (1.0f - options.beta1) * gi;
      e.second_moment[i] = options.beta2 * e.second_moment[i] + (1.0f - options.beta2) * gi * gi;
      const float m_hat = e.first_moment[i] / c1;
      const float v_hat = e.second_moment[i] / c2;
      w[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
    e.value.clear_grad();
  }
  return norm;
}

}  // namespace cadsketch::ad
