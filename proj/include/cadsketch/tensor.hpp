#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace cadsketch::ad {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Cache-line aligned allocation. Vectorised reductions peel according to the
/// address, so a fixed alignment keeps results bit-reproducible across runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<float, AlignedAllocator<float>>;

namespace detail {

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Buffer& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float32 array of rank 0..4 with an optional gradient.
/// Copies share storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  /// Negative axes count from the end.
  int dim(int axis) const;
  std::size_t size() const { return node_->value.size(); }

  std::span<const float> data() const { return node_->value; }
  std::span<float> data() { return node_->value; }
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> grad() { return node_->grad; }
  /// Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();
  /// Releases the gradient buffer.
  void clear_grad() { Buffer().swap(node_->grad); }

  /// Independent copy of the values, detached from any tape.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Append-only record of differentiable operations.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; ops executed with no active tape record nothing (inference
/// mode). Nodes are appended in execution order, so the list is topologically
/// sorted and backward() walks it once in reverse. A tape supports exactly one
/// backward(); a second call throws TapeConsumed. Gradients of leaf tensors
/// (parameters) accumulate across tapes until cleared.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<detail::Node> node);
  /// Throws NonScalarLoss unless loss has a single element.
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  void release();

  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

}  // namespace cadsketch::ad
