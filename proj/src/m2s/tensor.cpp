#include "m2s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace m2s {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::InvalidKernel: return "invalid kernel";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Numeric: return "numeric failure";
  }
  return "error";
}

std::int64_t Shape::operator[](int axis) const {
  switch (axis) {
    case 0: return n;
    case 1: return c;
    case 2: return h;
    case 3: return w;
  }
  M2S_THROW(Dimension, "axis ", axis, " out of range [0,3]");
}

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

namespace {

void validate_shape(const Shape& s) {
  M2S_CHECK(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1, Dimension,
            "all tensor dims must be >= 1, got ", s.str());
}

thread_local Tape* g_current_tape = nullptr;
thread_local std::string g_fault_op;
thread_local Real g_fault_factor = 1;

void accumulate(Tensor& t, std::span<const Real> g) {
  auto dst = t.grad_mut();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor finish(Tensor out, const char* op) {
#ifndef NDEBUG
  check_finite(out, op);
#else
  (void)op;
#endif
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  M2S_CHECK(a.shape() == b.shape(), Dimension, op, ": shape mismatch ", a.shape().str(), " vs ",
            b.shape().str(), " (no broadcasting)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  impl_->shape = shape;
  impl_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  M2S_CHECK(static_cast<std::int64_t>(values.size()) == shape.numel(), Dimension, "shape ",
            shape.str(), " needs ", shape.numel(), " values, got ", values.size());
  impl_->shape = shape;
  impl_->data = std::move(values);
}

Real& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  const auto& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

Real Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const auto& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

Real Tensor::item() const {
  M2S_CHECK(numel() == 1, Contract, "item() on tensor of shape ", shape().str());
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<Real> Tensor::grad_mut() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), Real(0)); }

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data); }

void check_finite(const Tensor& t, const char* op) {
  for (Real v : t.data()) {
    M2S_CHECK(std::isfinite(v), Numeric, op, ": produced a non-finite value");
  }
}

// ---------------------------------------------------------------------------
// Tape

namespace {
// Training allocates and frees many same-sized buffers per step; keeping them
// on the heap instead of fresh mmap pages avoids repeated page faults.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}
}  // namespace

Tape::Tape() : previous_(g_current_tape) {
  tune_allocator();
  g_current_tape = this;
}

Tape::~Tape() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void(Node&)> backward) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  M2S_CHECK(loss.defined() && loss.numel() == 1, Contract,
            "backward needs a scalar loss, got shape ", loss.defined() ? loss.shape().str() : "<none>");
  std::unordered_set<const detail::TensorImpl*> produced;
  for (auto& node : nodes_) {
    node.output.impl()->grad.clear();
    produced.insert(node.output.impl());
  }
  if (!loss.requires_grad()) return;
  Tensor root = loss;
  if (produced.count(root.impl()) == 0 && root.requires_grad()) {
    root.grad_mut()[0] += 1;
    return;
  }
  root.grad_mut()[0] = 1;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    if (!g_fault_op.empty() && g_fault_op == it->op) {
      for (Real& g : it->output.grad_mut()) g *= g_fault_factor;
    }
    it->backward(*it);
  }
}

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (g_current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

FaultInjection::FaultInjection(std::string op, Real factor) {
  g_fault_op = std::move(op);
  g_fault_factor = factor;
}

FaultInjection::~FaultInjection() {
  g_fault_op.clear();
  g_fault_factor = 1;
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, k, s, p, ho, wo;

  // Output index range whose input tap (o*s + t - p) lies inside [0, extent).
  static void range(std::int64_t extent, std::int64_t out_extent, std::int64_t s, std::int64_t p,
                    std::int64_t t, std::int64_t& lo, std::int64_t& hi) {
    const std::int64_t a = p - t;
    lo = a <= 0 ? 0 : (a + s - 1) / s;
    const std::int64_t b = extent - 1 + p - t;
    hi = b < 0 ? 0 : std::min(out_extent, b / s + 1);
    if (hi < lo) hi = lo;
  }
};

void check_kernel(std::int64_t k) {
  M2S_CHECK(k == 1 || k == 3 || k == 5, InvalidKernel, "kernel size must be 1, 3 or 5, got ", k);
}

// im2col layout: row k = (ci*K + ky)*K + kx, column = output pixel; taps
// outside the input read as zero.
void im2col(const ConvGeom& g, const Real* x, Real* col) {
  const std::int64_t npix = g.ho * g.wo;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    const Real* xin = x + ci * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      std::int64_t ylo, yhi;
      ConvGeom::range(g.h, g.ho, g.s, g.p, ky, ylo, yhi);
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        std::int64_t xlo, xhi;
        ConvGeom::range(g.w, g.wo, g.s, g.p, kx, xlo, xhi);
        Real* row = col + ((ci * g.k + ky) * g.k + kx) * npix;
        std::fill(row, row + npix, Real(0));
        for (std::int64_t oy = ylo; oy < yhi; ++oy) {
          Real* crow = row + oy * g.wo;
          const Real* irow = xin + (oy * g.s + ky - g.p) * g.w + kx - g.p;
          if (g.s == 1) {
            std::copy(irow + xlo, irow + xhi, crow + xlo);
          } else {
            for (std::int64_t ox = xlo; ox < xhi; ++ox) crow[ox] = irow[ox * g.s];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const Real* col, Real* dx) {
  const std::int64_t npix = g.ho * g.wo;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    Real* dxp = dx + ci * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      std::int64_t ylo, yhi;
      ConvGeom::range(g.h, g.ho, g.s, g.p, ky, ylo, yhi);
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        std::int64_t xlo, xhi;
        ConvGeom::range(g.w, g.wo, g.s, g.p, kx, xlo, xhi);
        const Real* row = col + ((ci * g.k + ky) * g.k + kx) * npix;
        for (std::int64_t oy = ylo; oy < yhi; ++oy) {
          const Real* crow = row + oy * g.wo;
          Real* drow = dxp + (oy * g.s + ky - g.p) * g.w + kx - g.p;
          if (g.s == 1) {
            for (std::int64_t ox = xlo; ox < xhi; ++ox) drow[ox] += crow[ox];
          } else {
            for (std::int64_t ox = xlo; ox < xhi; ++ox) drow[ox * g.s] += crow[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.s == 1 && g.p == 0; }

constexpr std::int64_t kRows = 4;

// C[i][p] = init_i + sum_j A(i,j) * B[j][p], j ascending for every output,
// where A(i,j) = a[i*ai + j*aj]. `init` null means start from C's contents.
template <std::int64_t R, std::int64_t kCols>
void gemm_block(std::int64_t i0, std::int64_t p0, std::int64_t pn, std::int64_t J, const Real* a, std::int64_t ai,
                std::int64_t aj, const Real* b, std::int64_t ldb, Real* c, std::int64_t ldc, const Real* init) {
  Real acc[R][kCols];
  for (std::int64_t r = 0; r < R; ++r) {
    const Real* crow = c + (i0 + r) * ldc + p0;
    for (std::int64_t q = 0; q < kCols; ++q) acc[r][q] = init ? init[i0 + r] : (q < pn ? crow[q] : Real(0));
  }
  if (pn == kCols) {
    for (std::int64_t j = 0; j < J; ++j) {
      const Real* brow = b + j * ldb + p0;
      for (std::int64_t r = 0; r < R; ++r) {
        const Real av = a[(i0 + r) * ai + j * aj];
        for (std::int64_t q = 0; q < kCols; ++q) acc[r][q] += av * brow[q];
      }
    }
  } else {
    for (std::int64_t j = 0; j < J; ++j) {
      const Real* brow = b + j * ldb + p0;
      for (std::int64_t r = 0; r < R; ++r) {
        const Real av = a[(i0 + r) * ai + j * aj];
        for (std::int64_t q = 0; q < pn; ++q) acc[r][q] += av * brow[q];
      }
    }
  }
  for (std::int64_t r = 0; r < R; ++r) {
    Real* crow = c + (i0 + r) * ldc + p0;
    for (std::int64_t q = 0; q < pn; ++q) crow[q] = acc[r][q];
  }
}

template <std::int64_t C>
void gemm_panel(std::int64_t I, std::int64_t J, std::int64_t P, std::int64_t p0, std::int64_t pn, const Real* a,
                std::int64_t ai, std::int64_t aj, const Real* b, Real* c, const Real* init) {
  std::int64_t i0 = 0;
  for (; i0 + kRows <= I; i0 += kRows) gemm_block<kRows, C>(i0, p0, pn, J, a, ai, aj, b, P, c, P, init);
  for (; i0 < I; ++i0) gemm_block<1, C>(i0, p0, pn, J, a, ai, aj, b, P, c, P, init);
}

void gemm(std::int64_t I, std::int64_t J, std::int64_t P, const Real* a, std::int64_t ai, std::int64_t aj,
          const Real* b, Real* c, const Real* init) {
  std::int64_t p0 = 0;
  for (; p0 + 32 <= P; p0 += 32) gemm_panel<32>(I, J, P, p0, 32, a, ai, aj, b, c, init);
  if (p0 + 16 <= P) {
    gemm_panel<16>(I, J, P, p0, 16, a, ai, aj, b, c, init);
    p0 += 16;
  }
  if (p0 + 8 <= P) {
    gemm_panel<8>(I, J, P, p0, 8, a, ai, aj, b, c, init);
    p0 += 8;
  }
  if (p0 < P) gemm_panel<8>(I, J, P, p0, P - p0, a, ai, aj, b, c, init);
}

thread_local std::vector<Real> g_col;

Real* col_buffer(const ConvGeom& g) {
  const auto need = static_cast<std::size_t>(g.cin * g.k * g.k * g.ho * g.wo);
  if (g_col.size() < need) g_col.resize(need);
  return g_col.data();
}

void conv_forward(const ConvGeom& g, const Real* x, const Real* w, const Real* b, Real* out) {
  const std::int64_t K = g.cin * g.k * g.k, npix = g.ho * g.wo;
  std::vector<Real> zero_bias;
  if (!b) {
    zero_bias.assign(static_cast<std::size_t>(g.cout), Real(0));
    b = zero_bias.data();
  }
  for (std::int64_t n = 0; n < g.n; ++n) {
    const Real* xn = x + n * g.cin * g.h * g.w;
    const Real* col = xn;
    if (!is_pointwise(g)) {
      Real* buf = col_buffer(g);
      im2col(g, xn, buf);
      col = buf;
    }
    gemm(g.cout, K, npix, w, K, 1, col, out + n * g.cout * npix, b);
  }
}

void conv_backward_input(const ConvGeom& g, const Real* w, const Real* dy, Real* dx) {
  const std::int64_t K = g.cin * g.k * g.k, npix = g.ho * g.wo;
  std::vector<Real> dcol(static_cast<std::size_t>(K * npix));
  const std::vector<Real> zeros(static_cast<std::size_t>(K), Real(0));
  for (std::int64_t n = 0; n < g.n; ++n) {
    gemm(K, g.cout, npix, w, 1, K, dy + n * g.cout * npix, dcol.data(), zeros.data());
    Real* dxn = dx + n * g.cin * g.h * g.w;
    if (is_pointwise(g)) {
      for (std::int64_t i = 0; i < K * npix; ++i) dxn[i] += dcol[static_cast<std::size_t>(i)];
    } else {
      col2im(g, dcol.data(), dxn);
    }
  }
}

// dW[co][k] = sum_p dy[co][p] * col[k][p], p ascending, accumulated over the batch.
void conv_backward_weight(const ConvGeom& g, const Real* x, const Real* dy, Real* dw) {
  const std::int64_t K = g.cin * g.k * g.k, npix = g.ho * g.wo;
  std::vector<Real> acc(static_cast<std::size_t>(g.cout * K), Real(0));
  std::vector<Real> colt(static_cast<std::size_t>(npix * K));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const Real* xn = x + n * g.cin * g.h * g.w;
    const Real* col = xn;
    if (!is_pointwise(g)) {
      Real* buf = col_buffer(g);
      im2col(g, xn, buf);
      col = buf;
    }
    for (std::int64_t k = 0; k < K; ++k) {
      const Real* row = col + k * npix;
      for (std::int64_t p = 0; p < npix; ++p) colt[static_cast<std::size_t>(p * K + k)] = row[p];
    }
    gemm(g.cout, npix, K, dy + n * g.cout * npix, npix, 1, colt.data(), acc.data(), nullptr);
  }
  for (std::size_t i = 0; i < acc.size(); ++i) dw[i] += acc[i];
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  M2S_CHECK(ws.h == ws.w, InvalidKernel, "conv2d: kernel must be square, got ", ws.h, "x", ws.w);
  check_kernel(ws.h);
  M2S_CHECK(ws.c == xs.c, Dimension, "conv2d: weight in-channels (axis 1) = ", ws.c,
            " but input channels (axis 1) = ", xs.c);
  M2S_CHECK(stride >= 1 && padding >= 0, Dimension, "conv2d: stride ", stride, " padding ", padding);
  if (bias.defined()) {
    M2S_CHECK(bias.numel() == ws.n, Dimension, "conv2d: bias has ", bias.numel(),
              " entries but weight out-channels (axis 0) = ", ws.n);
  }
  ConvGeom g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride, padding, 0, 0};
  M2S_CHECK(xs.h + 2 * padding >= g.k && xs.w + 2 * padding >= g.k, Dimension,
            "conv2d: input ", xs.str(), " smaller than kernel ", g.k, " with padding ", padding);
  g.ho = (xs.h + 2 * padding - g.k) / stride + 1;
  g.wo = (xs.w + 2 * padding - g.k) / stride + 1;

  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  conv_forward(g, x.ptr(), weight.ptr(), bias.defined() ? bias.ptr() : nullptr, out.ptr());

  if (needs_tape({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    Tape::current()->record("conv2d", std::move(inputs), out, [g](Tape::Node& node) {
      const Real* dy = node.output.grad().data();
      Tensor& xin = node.inputs[0];
      Tensor& win = node.inputs[1];
      if (xin.requires_grad()) conv_backward_input(g, win.ptr(), dy, xin.grad_mut().data());
      if (win.requires_grad()) conv_backward_weight(g, xin.ptr(), dy, win.grad_mut().data());
      if (node.inputs.size() > 2 && node.inputs[2].requires_grad()) {
        auto db = node.inputs[2].grad_mut();
        for (std::int64_t co = 0; co < g.cout; ++co) {
          Real acc = 0;
          for (std::int64_t n = 0; n < g.n; ++n) {
            const Real* p = dy + (n * g.cout + co) * g.ho * g.wo;
            for (std::int64_t i = 0; i < g.ho * g.wo; ++i) acc += p[i];
          }
          db[co] += acc;
        }
      }
    });
  }
  return finish(out, "conv2d");
}

Tensor box_filter(const Tensor& x, int k) {
  M2S_CHECK(k % 2 == 1, InvalidKernel, "box_filter: kernel size must be odd, got ", k);
  check_kernel(k);
  if (k == 1) return x;
  const Shape& s = x.shape();
  const std::int64_t p = (k - 1) / 2;
  ConvGeom g{s.n, s.c, s.h, s.w, s.c, k, 1, p, s.h, s.w};
  Tensor out(s);
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    const Real* xin = x.ptr() + plane * s.h * s.w;
    Real* o = out.ptr() + plane * s.h * s.w;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      std::int64_t ylo, yhi;
      ConvGeom::range(s.h, s.h, 1, p, ky, ylo, yhi);
      for (std::int64_t kx = 0; kx < k; ++kx) {
        std::int64_t xlo, xhi;
        ConvGeom::range(s.w, s.w, 1, p, kx, xlo, xhi);
        for (std::int64_t oy = ylo; oy < yhi; ++oy) {
          Real* orow = o + oy * s.w;
          const Real* irow = xin + (oy + ky - p) * s.w + kx - p;
          for (std::int64_t ox = xlo; ox < xhi; ++ox) orow[ox] += irow[ox];
        }
      }
    }
  }
  if (needs_tape({&x})) {
    Tape::current()->record("box_filter", {x}, out, [g](Tape::Node& node) {
      const Real* dy = node.output.grad().data();
      Real* dx = node.inputs[0].grad_mut().data();
      for (std::int64_t plane = 0; plane < g.n * g.cin; ++plane) {
        const Real* dyp = dy + plane * g.h * g.w;
        Real* dxp = dx + plane * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          std::int64_t ylo, yhi;
          ConvGeom::range(g.h, g.h, 1, g.p, ky, ylo, yhi);
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            std::int64_t xlo, xhi;
            ConvGeom::range(g.w, g.w, 1, g.p, kx, xlo, xhi);
            for (std::int64_t oy = ylo; oy < yhi; ++oy) {
              Real* dxrow = dxp + (oy + ky - g.p) * g.w + kx - g.p;
              const Real* dyrow = dyp + oy * g.w;
              for (std::int64_t ox = xlo; ox < xhi; ++ox) dxrow[ox] += dyrow[ox];
            }
          }
        }
      }
    });
  }
  return finish(out, "box_filter");
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  if (needs_tape({&x})) {
    Tape::current()->record(op, {x}, out, [deriv](Tape::Node& node) {
      auto g = node.output.grad();
      auto xin = node.inputs[0].data();
      auto y = node.output.data();
      auto dx = node.inputs[0].grad_mut();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * deriv(xin[i], y[i]);
    });
  }
  return finish(out, op);
}

Real stable_sigmoid(Real v) {
  if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](Real v) { return v > 0 ? v : Real(0); },
      [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor mul_scalar(const Tensor& x, Real s) {
  return unary(
      x, "mul_scalar", [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (needs_tape({&a, &b})) {
    Tape::current()->record("add", {a, b}, out, [](Tape::Node& node) {
      auto g = node.output.grad();
      for (auto& in : node.inputs) {
        if (in.requires_grad()) accumulate(in, g);
      }
    });
  }
  return finish(out, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (needs_tape({&a, &b})) {
    Tape::current()->record("sub", {a, b}, out, [](Tape::Node& node) {
      auto g = node.output.grad();
      if (node.inputs[0].requires_grad()) accumulate(node.inputs[0], g);
      if (node.inputs[1].requires_grad()) {
        auto d = node.inputs[1].grad_mut();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
      }
    });
  }
  return finish(out, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (needs_tape({&a, &b})) {
    Tape::current()->record("mul", {a, b}, out, [](Tape::Node& node) {
      auto g = node.output.grad();
      Tensor& l = node.inputs[0];
      Tensor& r = node.inputs[1];
      if (l.requires_grad()) {
        auto d = l.grad_mut();
        auto rv = r.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * rv[i];
      }
      if (r.requires_grad()) {
        auto d = r.grad_mut();
        auto lv = l.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * lv[i];
      }
    });
  }
  return finish(out, "mul");
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

struct Reduction {
  std::array<bool, 4> reduced{};
  Shape out;
  std::int64_t count = 1;

  Reduction(const Shape& in, std::initializer_list<int> axes) {
    if (axes.size() == 0) reduced = {true, true, true, true};
    for (int a : axes) {
      M2S_CHECK(a >= 0 && a < 4, Dimension, "reduction axis ", a, " out of range [0,3]");
      reduced[static_cast<std::size_t>(a)] = true;
    }
    out = Shape{reduced[0] ? 1 : in.n, reduced[1] ? 1 : in.c, reduced[2] ? 1 : in.h,
                reduced[3] ? 1 : in.w};
    count = in.numel() / out.numel();
  }

  template <typename F>
  void for_each(const Shape& in, F f) const {
    std::int64_t i = 0;
    for (std::int64_t n = 0; n < in.n; ++n) {
      const std::int64_t on = reduced[0] ? 0 : n;
      for (std::int64_t c = 0; c < in.c; ++c) {
        const std::int64_t oc = reduced[1] ? 0 : c;
        for (std::int64_t h = 0; h < in.h; ++h) {
          const std::int64_t oh = reduced[2] ? 0 : h;
          for (std::int64_t w = 0; w < in.w; ++w, ++i) {
            const std::int64_t ow = reduced[3] ? 0 : w;
            f(i, ((on * out.c + oc) * out.h + oh) * out.w + ow);
          }
        }
      }
    }
  }
};

Tensor reduce(const Tensor& x, std::initializer_list<int> axes, bool average, const char* op) {
  Reduction r(x.shape(), axes);
  Tensor out(r.out);
  auto in = x.data();
  auto o = out.data();
  r.for_each(x.shape(), [&](std::int64_t i, std::int64_t j) { o[j] += in[i]; });
  const Real scale = average ? Real(1) / static_cast<Real>(r.count) : Real(1);
  if (average) {
    for (Real& v : o) v *= scale;
  }
  if (needs_tape({&x})) {
    Tape::current()->record(op, {x}, out, [r, scale](Tape::Node& node) {
      auto g = node.output.grad();
      auto dx = node.inputs[0].grad_mut();
      r.for_each(node.inputs[0].shape(),
                 [&](std::int64_t i, std::int64_t j) { dx[i] += g[j] * scale; });
    });
  }
  return finish(out, op);
}

}  // namespace

Tensor sum(const Tensor& x, std::initializer_list<int> axes) { return reduce(x, axes, false, "sum"); }

Tensor mean(const Tensor& x, std::initializer_list<int> axes) { return reduce(x, axes, true, "mean"); }

Tensor l2_norm(const Tensor& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v * v;
  Tensor out = Tensor::scalar(std::sqrt(acc));
  if (needs_tape({&x})) {
    Tape::current()->record("l2_norm", {x}, out, [](Tape::Node& node) {
      const Real norm = node.output.item();
      if (norm == 0) return;
      const Real g = node.output.grad()[0] / norm;
      auto xin = node.inputs[0].data();
      auto dx = node.inputs[0].grad_mut();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * xin[i];
    });
  }
  return finish(out, "l2_norm");
}

// ---------------------------------------------------------------------------
// Resampling and channel plumbing

namespace {

struct LerpAxis {
  std::vector<std::int64_t> i0, i1;
  std::vector<Real> t;

  LerpAxis(std::int64_t in, std::int64_t out) : i0(out), i1(out), t(out) {
    const Real scale = static_cast<Real>(in) / static_cast<Real>(out);
    for (std::int64_t o = 0; o < out; ++o) {
      Real src = (static_cast<Real>(o) + Real(0.5)) * scale - Real(0.5);
      if (src < 0) src = 0;
      std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
      if (lo > in - 1) lo = in - 1;
      i0[o] = lo;
      i1[o] = std::min(lo + 1, in - 1);
      t[o] = src - static_cast<Real>(lo);
    }
  }
};

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  M2S_CHECK(out_h >= 1 && out_w >= 1, Dimension, "bilinear_resize: target ", out_h, "x", out_w);
  const Shape& s = x.shape();
  auto ys = std::make_shared<LerpAxis>(s.h, out_h);
  auto xs = std::make_shared<LerpAxis>(s.w, out_w);
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    const Real* in = x.ptr() + plane * s.h * s.w;
    Real* o = out.ptr() + plane * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const Real* r0 = in + ys->i0[oy] * s.w;
      const Real* r1 = in + ys->i1[oy] * s.w;
      const Real ty = ys->t[oy];
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const std::int64_t a = xs->i0[ox];
        const std::int64_t b = xs->i1[ox];
        const Real tx = xs->t[ox];
        // Lerp form keeps constant inputs exact.
        const Real top = r0[a] + tx * (r0[b] - r0[a]);
        const Real bot = r1[a] + tx * (r1[b] - r1[a]);
        o[oy * out_w + ox] = top + ty * (bot - top);
      }
    }
  }
  if (needs_tape({&x})) {
    Tape::current()->record("bilinear_resize", {x}, out, [ys, xs](Tape::Node& node) {
      const Shape& in = node.inputs[0].shape();
      const Shape& os = node.output.shape();
      const Real* g = node.output.grad().data();
      Real* dx = node.inputs[0].grad_mut().data();
      for (std::int64_t plane = 0; plane < in.n * in.c; ++plane) {
        const Real* gp = g + plane * os.h * os.w;
        Real* d = dx + plane * in.h * in.w;
        for (std::int64_t oy = 0; oy < os.h; ++oy) {
          Real* r0 = d + ys->i0[oy] * in.w;
          Real* r1 = d + ys->i1[oy] * in.w;
          const Real ty = ys->t[oy];
          for (std::int64_t ox = 0; ox < os.w; ++ox) {
            const Real gv = gp[oy * os.w + ox];
            const Real tx = xs->t[ox];
            const std::int64_t a = xs->i0[ox];
            const std::int64_t b = xs->i1[ox];
            r0[a] += gv * (1 - ty) * (1 - tx);
            r0[b] += gv * (1 - ty) * tx;
            r1[a] += gv * ty * (1 - tx);
            r1[b] += gv * ty * tx;
          }
        }
      }
    });
  }
  return finish(out, "bilinear_resize");
}

Tensor repeat_channels(const Tensor& x, std::int64_t channels) {
  const Shape& s = x.shape();
  M2S_CHECK(s.c == 1, Dimension, "repeat_channels: input must have 1 channel (axis 1), got ", s.c);
  M2S_CHECK(channels >= 1, Dimension, "repeat_channels: channel count ", channels);
  Tensor out(Shape{s.n, channels, s.h, s.w});
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      std::copy_n(x.ptr() + n * plane, plane, out.ptr() + (n * channels + c) * plane);
    }
  }
  if (needs_tape({&x})) {
    Tape::current()->record("repeat_channels", {x}, out, [channels, plane](Tape::Node& node) {
      const Real* g = node.output.grad().data();
      Real* dx = node.inputs[0].grad_mut().data();
      const std::int64_t n_count = node.inputs[0].shape().n;
      for (std::int64_t n = 0; n < n_count; ++n) {
        for (std::int64_t c = 0; c < channels; ++c) {
          const Real* gp = g + (n * channels + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) dx[n * plane + i] += gp[i];
        }
      }
    });
  }
  return finish(out, "repeat_channels");
}

Tensor select_channel(const Tensor& x, std::int64_t channel) {
  const Shape& s = x.shape();
  M2S_CHECK(channel >= 0 && channel < s.c, Dimension, "select_channel: channel ", channel,
            " outside axis 1 extent ", s.c);
  Tensor out(Shape{s.n, 1, s.h, s.w});
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(x.ptr() + (n * s.c + channel) * plane, plane, out.ptr() + n * plane);
  }
  if (needs_tape({&x})) {
    Tape::current()->record("select_channel", {x}, out, [channel, plane](Tape::Node& node) {
      const Shape& in = node.inputs[0].shape();
      const Real* g = node.output.grad().data();
      Real* dx = node.inputs[0].grad_mut().data();
      for (std::int64_t n = 0; n < in.n; ++n) {
        Real* d = dx + (n * in.c + channel) * plane;
        for (std::int64_t i = 0; i < plane; ++i) d[i] += g[n * plane + i];
      }
    });
  }
  return finish(out, "select_channel");
}

}  // namespace m2s
