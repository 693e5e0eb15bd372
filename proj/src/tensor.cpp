#include "cadsketch/tensor.hpp"

#include <algorithm>

#include "cadsketch/error.hpp"

namespace cadsketch::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<detail::Node>()) {
  if (shape.size() > 4) throw Error(ErrorCode::ShapeMismatch, "rank above 4: " + shape_string(shape));
  node_->value.assign(shape_size(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : node_(std::make_shared<detail::Node>()) {
  if (shape.size() > 4) throw Error(ErrorCode::ShapeMismatch, "rank above 4: " + shape_string(shape));
  if (values.size() != shape_size(shape)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(values.size()) + " values do not fill shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value.assign(values.begin(), values.end());
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw Error(ErrorCode::ShapeMismatch, "axis out of range for " + shape_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  if (size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0f);
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  release();
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> node) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "cannot record onto a tape after backward()");
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "backward() already ran on this tape");
  if (!loss.defined() || loss.size() != 1) {
    throw Error(ErrorCode::NonScalarLoss,
                "loss must be a scalar, got shape " + (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  consumed_ = true;
  auto& root = *loss.node();
  if (!root.requires_grad) {
    release();
    return;
  }
  root.ensure_grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (!node.grad.empty() && node.backward) node.backward(node);
  }
  release();
}

void Tape::release() {
  for (auto& node : nodes_) node->backward = nullptr;
  nodes_.clear();
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

}  // namespace cadsketch::ad
