#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tssl/common.hpp"

namespace tssl::engine {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// Integer label plane(s), e.g. [H,W] or [N,H,W]. Values are class ids plus a
// reserved ignore value; masks never enter the differentiable graph.
struct IntMask {
  Shape shape;
  std::vector<int32_t> v;

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
};

// Per-pixel validity plane companion to dense targets.
struct BoolMask {
  Shape shape;
  std::vector<uint8_t> v;

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until first use; same length as value after
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads. Null for leaves.
  std::function<void(Node&)> backward;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

// Reverse-mode autodiff value: a cheap handle onto a shared graph node.
// Ops build nodes with fused backward closures; backward(loss) runs one
// reverse sweep in deterministic topological order and then frees the graph.
// Gradients accumulate across backward calls until zero_grad/clear_grad.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  int64_t numel() const;

  std::span<const float> data() const;
  // Direct value mutation is for leaves only (optimizer updates, loaders).
  std::span<float> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();   // allocate-if-needed and fill with zeros
  void clear_grad();  // drop the gradient buffer entirely

  // Value copy detached from any graph.
  Tensor detached_copy() const;

  float item() const;

  // Node identity; two handles alias iff ids are equal.
  const void* id() const { return node_.get(); }

  std::shared_ptr<detail::Node>& node() { return node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Thread-local autograd mode. Ops record graph structure only while enabled.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse sweep from a scalar. Frees the graph afterwards; leaf gradients
// persist and accumulate across calls.
void backward(const Tensor& loss);

namespace detail {

// Op factory: wires parents/backward only when grad mode is on and at least
// one parent requires grad; otherwise the result is a constant leaf.
Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn);

// Accumulate `contrib` into `parent`'s grad if it wants one.
inline void accumulate(Node& parent, std::span<const float> contrib) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  TSSL_CHECK_CODE(parent.grad.size() == contrib.size(), "internal",
                  "gradient size mismatch: " << parent.grad.size() << " vs " << contrib.size());
  for (size_t i = 0; i < contrib.size(); ++i) parent.grad[i] += contrib[i];
}

}  // namespace detail

}  // namespace tssl::engine
