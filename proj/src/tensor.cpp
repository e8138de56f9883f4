// SPDX-License-Identifier: Apache-2.0
#include "freqnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "freqnet/error.hpp"
#include "freqnet/kernels.hpp"

namespace freqnet {

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative tensor dimension in " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::vector<double>& Tensor::Node::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  if (shape.empty() || shape.size() > 4) throw InvalidInput("tensor rank must be 1..4");
  const std::size_t n = freqnet::numel(shape);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data.assign(n, value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty() || shape.size() > 4) throw InvalidInput("tensor rank must be 1..4");
  if (freqnet::numel(shape) != data.size())
    throw InvalidInput("tensor data length " + std::to_string(data.size()) + " does not match " +
                       to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                           BackwardFn backward) {
  Tensor out = from(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents = std::move(parents);
  out.node_->backward = std::move(backward);
  return out;
}

const Shape& Tensor::shape() const {
  if (!node_) throw InvalidInput("use of undefined tensor");
  return node_->shape;
}
std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }

double Tensor::item() const {
  if (numel() != 1) throw InvalidInput("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Tensor::Node::~Node() {
  std::vector<std::shared_ptr<Node>> pending;
  auto detach_parents = [&pending](Node& n) {
    for (auto& p : n.parents)
      if (p.node_ && p.node_.use_count() == 1) pending.push_back(std::move(p.node_));
    n.parents.clear();
  };
  detach_parents(*this);
  while (!pending.empty()) {
    std::shared_ptr<Node> n = std::move(pending.back());
    pending.pop_back();
    detach_parents(*n);
  }
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data); }

void Tensor::backward() const {
  if (!node_) throw InvalidInput("backward on undefined tensor");
  if (numel() != 1) throw InvalidInput("backward requires a scalar loss, got " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order from the root.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].node();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
}

std::vector<double>* grad_of(const Tensor& t) {
  return t.requires_grad() ? &t.node()->grad_buffer() : nullptr;
}

void accumulate(std::vector<double>* dst, std::span<const double> src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

kernels::ConvShape conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                                 int padding, bool depthwise, const char* op) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1)
    throw InvalidInput(std::string(op) + ": expected x [N,C,H,W], w [O,I,k,k], b [O]");
  if (w.dim(2) != w.dim(3)) throw InvalidInput(std::string(op) + ": kernel must be square");
  kernels::ConvShape s;
  s.batch = x.dim(0);
  s.in_channels = x.dim(1);
  s.height = x.dim(2);
  s.width = x.dim(3);
  s.out_channels = w.dim(0);
  s.kernel = w.dim(2);
  s.stride = stride;
  s.pad = padding;
  if (depthwise) {
    if (w.dim(1) != 1 || w.dim(0) != s.in_channels)
      throw InvalidInput(std::string(op) + ": weights " + to_string(w.shape()) +
                         " incompatible with " + std::to_string(s.in_channels) + " channels");
  } else if (w.dim(1) != s.in_channels) {
    throw InvalidInput(std::string(op) + ": weights expect " + std::to_string(w.dim(1)) +
                       " input channels, got " + std::to_string(s.in_channels));
  }
  if (b.dim(0) != s.out_channels)
    throw InvalidInput(std::string(op) + ": bias length does not match output channels");
  s.validate();
  return s;
}

bool use_serial() { return kernels::backend() == kernels::Backend::serial; }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  const auto s = conv_geometry(x, w, b, stride, padding, false, "conv2d");
  Shape out_shape{s.batch, s.out_channels, s.out_height(), s.out_width()};
  std::vector<double> y(freqnet::numel(out_shape));
  if (use_serial())
    kernels::serial::conv2d_forward(s, x.data(), w.data(), b.data(), y);
  else
    kernels::omp::conv2d_forward(s, x.data(), w.data(), b.data(), y);
  return Tensor::make_result(std::move(out_shape), std::move(y), {x, w, b}, [s](Tensor::Node& self) {
    const Tensor &x = self.parents[0], &w = self.parents[1], &b = self.parents[2];
    const bool serial = use_serial();
    if (x.requires_grad()) {
      std::vector<double> gx(x.numel());
      if (serial)
        kernels::serial::conv2d_backward_input(s, self.grad, w.data(), gx);
      else
        kernels::omp::conv2d_backward_input(s, self.grad, w.data(), gx);
      accumulate(grad_of(x), gx);
    }
    if (w.requires_grad() || b.requires_grad()) {
      std::vector<double> gw(w.numel()), gb(b.numel());
      if (serial)
        kernels::serial::conv2d_backward_params(s, x.data(), self.grad, gw, gb);
      else
        kernels::omp::conv2d_backward_params(s, x.data(), self.grad, gw, gb);
      accumulate(grad_of(w), gw);
      accumulate(grad_of(b), gb);
    }
  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  const auto s = conv_geometry(x, w, b, stride, padding, true, "depthwise_conv2d");
  Shape out_shape{s.batch, s.out_channels, s.out_height(), s.out_width()};
  std::vector<double> y(freqnet::numel(out_shape));
  if (use_serial())
    kernels::serial::depthwise_forward(s, x.data(), w.data(), b.data(), y);
  else
    kernels::omp::depthwise_forward(s, x.data(), w.data(), b.data(), y);
  return Tensor::make_result(std::move(out_shape), std::move(y), {x, w, b}, [s](Tensor::Node& self) {
    const Tensor &x = self.parents[0], &w = self.parents[1], &b = self.parents[2];
    const bool serial = use_serial();
    if (x.requires_grad()) {
      std::vector<double> gx(x.numel());
      if (serial)
        kernels::serial::depthwise_backward_input(s, self.grad, w.data(), gx);
      else
        kernels::omp::depthwise_backward_input(s, self.grad, w.data(), gx);
      accumulate(grad_of(x), gx);
    }
    if (w.requires_grad() || b.requires_grad()) {
      std::vector<double> gw(w.numel()), gb(b.numel());
      if (serial)
        kernels::serial::depthwise_backward_params(s, x.data(), self.grad, gw, gb);
      else
        kernels::omp::depthwise_backward_params(s, x.data(), self.grad, gw, gb);
      accumulate(grad_of(w), gw);
      accumulate(grad_of(b), gb);
    }
  });
}

Tensor deformable_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& offsets) {
  if (w.rank() != 4) throw InvalidInput("deformable_conv2d: weights must be rank 4");
  const int k = w.dim(2);
  if (k % 2 == 0) throw InvalidInput("deformable_conv2d: kernel size must be odd");
  const auto s = conv_geometry(x, w, b, 1, k / 2, false, "deformable_conv2d");
  const Shape expected{s.batch, 2 * k * k, s.height, s.width};
  if (offsets.shape() != expected)
    throw InvalidInput("deformable_conv2d: offsets " + to_string(offsets.shape()) + ", expected " +
                       to_string(expected));
  Shape out_shape{s.batch, s.out_channels, s.height, s.width};
  std::vector<double> y(freqnet::numel(out_shape));
  if (use_serial())
    kernels::serial::deformable_forward(s, x.data(), w.data(), b.data(), offsets.data(), y);
  else
    kernels::omp::deformable_forward(s, x.data(), w.data(), b.data(), offsets.data(), y);
  return Tensor::make_result(
      std::move(out_shape), std::move(y), {x, w, b, offsets}, [s](Tensor::Node& self) {
        const Tensor &x = self.parents[0], &w = self.parents[1], &b = self.parents[2],
                     &off = self.parents[3];
        std::vector<double> gx(x.numel()), gw(w.numel()), gb(b.numel()), goff(off.numel());
        if (use_serial())
          kernels::serial::deformable_backward(s, x.data(), w.data(), off.data(), self.grad, gx, gw,
                                               gb, goff);
        else
          kernels::omp::deformable_backward(s, x.data(), w.data(), off.data(), self.grad, gx, gw,
                                            gb, goff);
        accumulate(grad_of(x), gx);
        accumulate(grad_of(w), gw);
        accumulate(grad_of(b), gb);
        accumulate(grad_of(off), goff);
      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw InvalidInput("leaky_relu: slope must lie in (0, 1)");
  std::vector<double> y(x.data().begin(), x.data().end());
  for (auto& v : y)
    if (v < 0.0) v *= slope;
  return Tensor::make_result(x.shape(), std::move(y), {x}, [slope](Tensor::Node& self) {
    const Tensor& x = self.parents[0];
    auto& gx = x.node()->grad_buffer();
    const auto xs = x.data();
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += xs[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [](Tensor::Node& self) {
    accumulate(grad_of(self.parents[0]), self.grad);
    accumulate(grad_of(self.parents[1]), self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [](Tensor::Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    if (auto* ga = grad_of(a))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * b.data()[i];
    if (auto* gb = grad_of(b))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * a.data()[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a.data().begin(), a.data().end());
  for (auto& v : y) v *= s;
  return Tensor::make_result(a.shape(), std::move(y), {a}, [s](Tensor::Node& self) {
    auto& g = self.parents[0].node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor weighted_sum(std::span<const Tensor> xs, std::span<const double> weights) {
  if (xs.empty() || xs.size() != weights.size())
    throw InvalidInput("weighted_sum: need one weight per tensor");
  for (const auto& x : xs) require_same_shape(xs.front(), x, "weighted_sum");
  std::vector<double> y(xs.front().numel(), 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto d = xs[k].data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += weights[k] * d[i];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result(xs.front().shape(), std::move(y), {xs.begin(), xs.end()},
                             [w = std::move(w)](Tensor::Node& self) {
                               for (std::size_t k = 0; k < self.parents.size(); ++k)
                                 if (auto* g = grad_of(self.parents[k]))
                                   for (std::size_t i = 0; i < g->size(); ++i)
                                     (*g)[i] += w[k] * self.grad[i];
                             });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {x}, [](Tensor::Node& self) {
    auto& g = self.parents[0].node()->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

}  // namespace freqnet
