#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. Scalar is float for training and inference, double for gradient
// checks. Graphs are built dynamically by the ops in ops.hpp and released
// when the last Var referencing them goes away.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace unicon::nn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

template <typename S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape s, S fill = S(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<S> values) : shape(std::move(s)), data(std::move(values)) {}

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  // Leading dimension; the remaining dimensions are flattened into cols().
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rows() == 0 ? 0 : static_cast<int>(size() / static_cast<std::size_t>(rows())); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }
  S& operator[](std::size_t i) { return data[i]; }
  S operator[](std::size_t i) const { return data[i]; }

  MatMap<S> mat() { return MatMap<S>(data.data(), rows(), cols()); }
  ConstMatMap<S> mat() const { return ConstMatMap<S>(data.data(), rows(), cols()); }
};

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  // Allocates a zero gradient on first use.
  Tensor<S>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<S>(value.shape);
    return grad;
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<S> value) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var leaf(Tensor<S> value) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  int rows() const { return node_->value.rows(); }
  int cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor<S>& grad() { return node_->grad_buffer(); }
  const std::shared_ptr<Node<S>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

// Gradient recording is on by default; NoGradGuard disables it for the
// current thread (inference, oracle evaluation in finite differences).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds a result node. When recording is off or no parent needs a gradient
// the backward closure is dropped and the node is a constant.
template <typename S>
Var<S> make_result(Tensor<S> value, std::vector<Var<S>> parents, std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward);
    }
  }
  return Var<S>(std::move(n));
}

// Seeds d(root)/d(root) = 1 (root must hold a single element) and propagates
// gradients to every reachable node that requires them. Leaf gradients
// accumulate across calls.
template <typename S>
void backward(const Var<S>& root);

}  // namespace unicon::nn
