// SPDX-License-Identifier: Apache-2.0
//
// Dense NCHW tensors with tape-free reverse-mode autodiff.
//
// Every operator result keeps shared ownership of its inputs and a closure
// that pushes its gradient into them, so the graph lives exactly as long as
// the tensors that reference it. No broadcasting: shapes must agree exactly.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace freqnet {

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

class Tensor {
 public:
  struct Node;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);

  /// Builds an operator result. `backward` receives the result node and must
  /// add into the grads of `parents` that require them. Operator authors only.
  static Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                            BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const { return shape().at(i); }
  int rank() const { return static_cast<int>(shape().size()); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  /// Gradient buffer; empty until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  /// Fresh leaf holding a copy of the data, detached from any graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  /// Releases long parent chains iteratively instead of recursively.
  ~Node();

  /// Gradient buffer, allocated (zeroed) on first use.
  std::vector<double>& grad_buffer();
};

/// While alive, operators on this thread do not record graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Operators.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
/// Stride 1, same padding; offsets [N, 2*k*k, H, W] as (dy, dx) per tap.
Tensor deformable_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& offsets);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor weighted_sum(std::span<const Tensor> xs, std::span<const double> weights);
Tensor sum(const Tensor& x);

}  // namespace freqnet
