#include "tssl/engine/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace tssl::engine {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    TSSL_CHECK(d >= 0, "negative extent in shape " << shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f),
                   requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(static_cast<size_t>(n), value),
                   requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  TSSL_CHECK(shape_numel(shape) == static_cast<int64_t>(data.size()),
             "data size " << data.size() << " does not match shape " << shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<detail::Node>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

const Shape& Tensor::shape() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const {
  const auto& s = shape();
  TSSL_CHECK(i >= 0 && i < static_cast<int>(s.size()),
             "dim index " << i << " out of range for " << shape_str(s));
  return s[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->numel();
}

std::span<const float> Tensor::data() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->value;
}

std::span<float> Tensor::mutable_data() {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->value;
}

bool Tensor::requires_grad() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->requires_grad;
}

bool Tensor::is_leaf() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return node_->parents.empty() && !node_->backward;
}

bool Tensor::has_grad() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return !node_->grad.empty();
}

std::span<const float> Tensor::grad() const {
  TSSL_CHECK(has_grad(), "tensor has no gradient buffer");
  return node_->grad;
}

std::span<float> Tensor::mutable_grad() {
  TSSL_CHECK(has_grad(), "tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  node_->grad.assign(node_->value.size(), 0.0f);
}

void Tensor::clear_grad() {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detached_copy() const {
  TSSL_CHECK(defined(), "operation on undefined tensor");
  return from_data(node_->shape, node_->value, false);
}

float Tensor::item() const {
  TSSL_CHECK(numel() == 1, "item() requires a scalar, got " << shape_str(shape()));
  return node_->value[0];
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
  TSSL_CHECK(loss.defined(), "backward on undefined tensor");
  TSSL_CHECK(loss.numel() == 1,
             "backward requires a scalar, got " << shape_str(loss.shape()));
  auto* root = loss.node().get();
  TSSL_CHECK(root->requires_grad,
             "backward on a tensor that does not require grad");

  // Iterative post-order DFS; parent order is fixed, so the sweep order (and
  // therefore every accumulation order) is deterministic.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward(*n);
    }
  }

  // Free the graph: drop closures and parent links so activations die with
  // their last handle. Leaf gradients survive for the optimizer.
  for (detail::Node* n : topo) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  bool any_grad = false;
  for (const auto& p : parents) {
    TSSL_CHECK(p.defined(), "op input is undefined");
    if (p.requires_grad()) any_grad = true;
  }
  Tensor out = Tensor::from_data(std::move(shape), std::move(value), false);
  if (grad_enabled() && any_grad) {
    auto& n = *out.node();
    n.requires_grad = true;
    n.parents.reserve(parents.size());
    for (auto& p : parents) n.parents.push_back(p.node());
    n.backward = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

}  // namespace tssl::engine
