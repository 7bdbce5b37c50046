#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "casediag/errors.hpp"

namespace casediag {

/// Ordered dimension list. 4D volumes are {C,X,Y,Z}, conv kernels
/// {Co,Ci,KX,KY,KZ}, vectors {n}, scalars {1}.
using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

// Storage is X-fastest: for {C,X,Y,Z} the linear index is
// x + X*(y + Y*(z + Z*c)), i.e. each channel is one contiguous block of
// X*Y*Z values. Kernels are kx-fastest with Co outermost.
inline std::int64_t idx4(int c, int x, int y, int z, int X, int Y, int Z) {
  return x + std::int64_t(X) * (y + std::int64_t(Y) * (z + std::int64_t(Z) * c));
}

inline std::int64_t idx5(int co, int ci, int kx, int ky, int kz, int Ci, int KX, int KY, int KZ) {
  return kx + std::int64_t(KX) *
                  (ky + std::int64_t(KY) * (kz + std::int64_t(KZ) * (ci + std::int64_t(Ci) * co)));
}

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// One node of the computation graph. Nodes are created in topological
/// order by the forward ops; backward() replays them in exact reverse
/// topological order. Each graph must stay confined to one thread.
template <typename Scalar>
struct TensorNode {
  Shape shape;
  ArrayX<Scalar> values;
  ArrayX<Scalar> grad;  // sized during backward; empty otherwise
  bool requires_grad = false;  // set on leaves only
  bool needs_grad = false;     // leaf requires_grad, or on a path from one
  bool backward_ran = false;   // meaningful on backward roots
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::int64_t numel() const { return values.size(); }
};

/// Dense tensor handle. Copies share the underlying node (value semantics
/// over the handle, reference semantics over the storage), which is what
/// lets both Siamese branches reference one weight set.
template <typename Scalar>
class Tensor {
  static_assert(std::is_floating_point_v<Scalar>);

 public:
  using Node = TensorNode<Scalar>;
  using Array = ArrayX<Scalar>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Scalar(0), requires_grad);
  }

  static Tensor filled(Shape shape, Scalar value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->values = Array::Constant(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = n->needs_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_values(Shape shape, Array values, bool requires_grad = false) {
    if (values.size() != shape_numel(shape))
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values do not fill shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = n->needs_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    return filled({1}, v, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->values.size(); }
  const char* op() const { return node_->op; }

  Array& values() { return node_->values; }
  const Array& values() const { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == numel(); }

  const Array& grad() const {
    if (!has_grad()) throw UsageError("tensor: grad not populated (run backward first)");
    return node_->grad;
  }

  /// Value of a single-element tensor.
  Scalar value() const {
    if (numel() != 1)
      throw UsageError("tensor: value() on non-scalar shape " + shape_str(shape()));
    return node_->values[0];
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_op(const char* op, Shape shape, ArrayX<Scalar> values,
                       std::vector<std::shared_ptr<TensorNode<Scalar>>> parents,
                       std::function<void(TensorNode<Scalar>&)> backprop) {
  auto n = std::make_shared<TensorNode<Scalar>>();
  n->op = op;
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backprop = std::move(backprop);
  return Tensor<Scalar>(std::move(n));
}

/// Iterative post-order DFS; returns nodes in topological order (parents
/// before children), root last.
template <typename Scalar>
std::vector<TensorNode<Scalar>*> topo_order(TensorNode<Scalar>* root) {
  std::vector<TensorNode<Scalar>*> order;
  std::unordered_set<const TensorNode<Scalar>*> done;
  std::vector<std::pair<TensorNode<Scalar>*, std::size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (done.count(node)) {
      stack.pop_back();
      continue;
    }
    if (next < node->parents.size()) {
      TensorNode<Scalar>* p = node->parents[next++].get();
      if (!done.count(p)) stack.emplace_back(p, 0);
    } else {
      done.insert(node);
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

/// Reverse-mode accumulation from a scalar root. Populates grad on every
/// node that lies on a path from a requires_grad leaf (leaves included).
/// Calling twice on the same root without reset_grads() is an error.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined()) throw UsageError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw UsageError("backward: root must be scalar, got shape " + shape_str(loss.shape()));
  TensorNode<Scalar>* root = loss.node().get();
  if (root->backward_ran)
    throw UsageError("backward: already ran on this root; call reset_grads first");
  auto order = detail::topo_order(root);
  for (auto* n : order)
    if (n->needs_grad) n->grad = ArrayX<Scalar>::Zero(n->numel());
  if (!root->needs_grad) {
    root->backward_ran = true;
    return;  // no differentiable leaves anywhere below
  }
  root->grad = ArrayX<Scalar>::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<Scalar>* n = *it;
    if (n->needs_grad && n->backprop) n->backprop(*n);
  }
  root->backward_ran = true;
}

/// Clears grads and the backward flag over the whole graph under `root`.
template <typename Scalar>
void reset_grads(const Tensor<Scalar>& root) {
  for (auto* n : detail::topo_order(root.node().get())) {
    n->grad.resize(0);
    n->backward_ran = false;
  }
}

template <typename Scalar>
bool all_finite(const ArrayX<Scalar>& a) {
  return a.isFinite().all();
}

}  // namespace casediag
