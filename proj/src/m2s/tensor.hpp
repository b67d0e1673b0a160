#pragma once

// Dense N x C x H x W tensors with a reverse-mode tape.
//
// Ops record onto the innermost live Tape of the calling thread when at least
// one operand requires a gradient. Without a live Tape every op is a plain
// forward computation, which is what inference and the ground-truth branch of
// the feature loss use.

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "m2s/error.hpp"

namespace m2s {

#ifdef M2S_FLOAT32
using Real = float;
#else
using Real = double;
#endif

struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  std::int64_t operator[](int axis) const;
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real v) { return Tensor(Shape{}, v); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return impl_->shape.numel(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  Real* ptr() { return impl_->data.data(); }
  const Real* ptr() const { return impl_->data.data(); }

  Real& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  Real at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
  Real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::span<Real> grad_mut();
  void zero_grad();

  // Deep copy without gradient history.
  Tensor clone() const;

  bool same(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Appends a node; callers supply a backward rule that reads
  // node.output.grad() and accumulates into the inputs that require grad.
  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void(Node&)> backward);

  // Reverse replay from a scalar loss. Intermediate gradients are reset on
  // each call; leaf gradients accumulate.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

// True when an op over these inputs must be recorded.
bool needs_tape(std::initializer_list<const Tensor*> inputs);

// Test hook: multiplies the incoming gradient of every node whose op name
// matches by `factor` during backward. Used to prove gradchecks can fail.
class FaultInjection {
 public:
  FaultInjection(std::string op, Real factor);
  ~FaultInjection();
  FaultInjection(const FaultInjection&) = delete;
  FaultInjection& operator=(const FaultInjection&) = delete;
};

// ---------------------------------------------------------------------------
// Ops

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
Tensor box_filter(const Tensor& x, int k);

Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, Real s);

// Reductions keep rank 4; reduced axes collapse to 1. An empty axis list
// reduces everything.
Tensor sum(const Tensor& x, std::initializer_list<int> axes = {});
Tensor mean(const Tensor& x, std::initializer_list<int> axes = {});
// sqrt(sum(x^2)) over all elements.
Tensor l2_norm(const Tensor& x);

// Half-pixel-center bilinear interpolation (align_corners = false).
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

Tensor repeat_channels(const Tensor& x, std::int64_t channels);
Tensor select_channel(const Tensor& x, std::int64_t channel);

void check_finite(const Tensor& t, const char* op);

}  // namespace m2s
