#include "abunet/ops.hpp"

#include "abunet/error.hpp"
#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <type_traits>
#include <utility>

namespace abunet::ops {

namespace {

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool any_requires_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  return tape.needs_grad(inputs);
}

// Records `backward` when needed and marks the output as part of the graph.
void link(Tape& tape, OpKind kind, std::vector<Tensor> inputs, Tensor& out, std::function<void()> backward) {
  out.set_requires_grad(true);
  tape.record(kind, std::move(inputs), out, std::move(backward));
}

// C (+)= op(A) op(B) in the tape's precision. C is always double.
void gemm_into(Precision precision, bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double beta, double* c) {
  const std::size_t lda = ta ? m : k;
  const std::size_t ldb = tb ? k : n;
  if (precision == Precision::F64) {
    detail::gemm(ta, tb, m, n, k, 1.0, a, lda, b, ldb, beta, c, n);
    return;
  }
  std::vector<float> af(a, a + m * k), bf(b, b + k * n), cf(m * n);
  detail::gemm(ta, tb, m, n, k, 1.0f, af.data(), lda, bf.data(), ldb, 0.0f, cf.data(), n);
  for (std::size_t i = 0; i < m * n; ++i)
    c[i] = beta * c[i] + static_cast<double>(cf[i]);
}

struct ConvGeometry {
  std::size_t batch, height, width, in_ch, kh, kw, out_ch, pad_top, pad_left;
  std::size_t patch() const { return kh * kw * in_ch; }
  std::size_t pixels() const { return height * width; }
};

// Valid kernel-column range [lo, hi) for output column ox.
std::pair<std::size_t, std::size_t> column_span(const ConvGeometry& g, std::size_t ox) {
  const auto x0 = static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(g.pad_left);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -x0));
  const auto hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(w - x0, 0, static_cast<std::ptrdiff_t>(g.kw)));
  return {lo, std::max(lo, hi)};
}

template <typename T>
void im2col(const ConvGeometry& g, const double* image, T* cols) {
  const std::size_t k = g.patch(), c = g.in_ch, run = g.kw * c;
  for (std::size_t oy = 0; oy < g.height; ++oy)
    for (std::size_t ox = 0; ox < g.width; ++ox) {
      T* row = cols + (oy * g.width + ox) * k;
      const auto [lo, hi] = column_span(g, ox);
      for (std::size_t dy = 0; dy < g.kh; ++dy) {
        T* dst = row + dy * run;
        const auto iy = static_cast<std::ptrdiff_t>(oy + dy) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) || lo == hi) {
          std::fill(dst, dst + run, T{0});
          continue;
        }
        std::fill(dst, dst + lo * c, T{0});
        const double* src = image + (static_cast<std::size_t>(iy) * g.width + ox + lo - g.pad_left) * c;
        std::transform(src, src + (hi - lo) * c, dst + lo * c, [](double v) { return static_cast<T>(v); });
        std::fill(dst + hi * c, dst + run, T{0});
      }
    }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, double* image) {
  const std::size_t k = g.patch(), c = g.in_ch, run = g.kw * c;
  for (std::size_t oy = 0; oy < g.height; ++oy)
    for (std::size_t ox = 0; ox < g.width; ++ox) {
      const T* row = cols + (oy * g.width + ox) * k;
      const auto [lo, hi] = column_span(g, ox);
      if (lo == hi)
        continue;
      for (std::size_t dy = 0; dy < g.kh; ++dy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy + dy) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height))
          continue;
        const T* src = row + dy * run + lo * c;
        double* dst = image + (static_cast<std::size_t>(iy) * g.width + ox + lo - g.pad_left) * c;
        for (std::size_t i = 0; i < (hi - lo) * c; ++i)
          dst[i] += static_cast<double>(src[i]);
      }
    }
}

// Images per GEMM, keeping the patch matrix near 1M entries.
std::size_t conv_chunk(const ConvGeometry& g) {
  const std::size_t per_image = g.pixels() * g.patch();
  return std::clamp<std::size_t>((std::size_t{1} << 20) / std::max<std::size_t>(per_image, 1), 1, g.batch);
}

// Scratch storage that every user overwrites completely.
template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
  return std::unique_ptr<T[]>(new T[n]);
}

template <typename T>
void conv_forward(const ConvGeometry& g, const double* x, const double* kernel, double* out) {
  const std::size_t k = g.patch(), hw = g.pixels(), chunk = conv_chunk(g);
  auto cols = scratch<T>(chunk * hw * k);
  std::vector<T> kmat(kernel, kernel + k * g.out_ch);
  auto res = scratch<T>(std::is_same_v<T, double> ? 0 : chunk * hw * g.out_ch);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, g.batch - b0);
    for (std::size_t b = 0; b < nb; ++b)
      im2col(g, x + (b0 + b) * hw * g.in_ch, cols.get() + b * hw * k);
    double* dst = out + b0 * hw * g.out_ch;
    if constexpr (std::is_same_v<T, double>) {
      detail::gemm(false, false, nb * hw, g.out_ch, k, 1.0, cols.get(), k, kmat.data(), g.out_ch, 0.0, dst,
                   g.out_ch);
    } else {
      detail::gemm(false, false, nb * hw, g.out_ch, k, T{1}, cols.get(), k, kmat.data(), g.out_ch, T{0},
                   res.get(), g.out_ch);
      std::transform(res.get(), res.get() + nb * hw * g.out_ch, dst, [](T v) { return static_cast<double>(v); });
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const double* x, const double* kernel, const double* dout,
                   double* dx, double* dkernel) {
  const std::size_t k = g.patch(), hw = g.pixels(), chunk = conv_chunk(g);
  auto cols = scratch<T>(dkernel ? chunk * hw * k : 0);
  auto dcols = scratch<T>(dx ? chunk * hw * k : 0);
  std::vector<T> kmat(kernel, kernel + k * g.out_ch);
  std::vector<T> dk(dkernel ? k * g.out_ch : 0, T{0});
  auto dimg = scratch<T>(std::is_same_v<T, double> ? 0 : chunk * hw * g.out_ch);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, g.batch - b0);
    const double* d = dout + b0 * hw * g.out_ch;
    const T* dt = nullptr;
    if constexpr (std::is_same_v<T, double>) {
      dt = d;
    } else {
      std::transform(d, d + nb * hw * g.out_ch, dimg.get(), [](double v) { return static_cast<T>(v); });
      dt = dimg.get();
    }
    if (dkernel) {
      for (std::size_t b = 0; b < nb; ++b)
        im2col(g, x + (b0 + b) * hw * g.in_ch, cols.get() + b * hw * k);
      detail::gemm(true, false, k, g.out_ch, nb * hw, T{1}, cols.get(), k, dt, g.out_ch, T{1}, dk.data(),
                   g.out_ch);
    }
    if (dx) {
      detail::gemm(false, true, nb * hw, k, g.out_ch, T{1}, dt, g.out_ch, kmat.data(), g.out_ch, T{0},
                   dcols.get(), k);
      for (std::size_t b = 0; b < nb; ++b)
        col2im_add(g, dcols.get() + b * hw * k, dx + (b0 + b) * hw * g.in_ch);
    }
  }
  if (dkernel)
    for (std::size_t i = 0; i < dk.size(); ++i)
      dkernel[i] += static_cast<double>(dk[i]);
}

struct PoolGeometry {
  std::size_t batch, in_h, in_w, ch, out_h, out_w, window, stride, pad_top, pad_left;
};

PoolGeometry pool_geometry(const Shape& s, std::size_t window, std::size_t stride) {
  PoolGeometry g{};
  g.batch = s[0];
  g.in_h = s[1];
  g.in_w = s[2];
  g.ch = s[3];
  g.window = window;
  g.stride = stride;
  g.out_h = (g.in_h + stride - 1) / stride;
  g.out_w = (g.in_w + stride - 1) / stride;
  const auto total = [&](std::size_t out, std::size_t in) {
    const std::size_t need = (out - 1) * stride + window;
    return need > in ? need - in : 0;
  };
  g.pad_top = total(g.out_h, g.in_h) / 2;
  g.pad_left = total(g.out_w, g.in_w) / 2;
  return g;
}

} // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  const Precision precision = tape.precision();
  gemm_into(precision, false, false, m, n, k, a.values().data(), b.values().data(), 0.0, out.values().data());
  if (any_requires_grad(tape, {&a, &b}))
    link(tape, OpKind::MatMul, {a, b}, out, [a, b, out, m, n, k, precision]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad())
        gemm_into(precision, false, true, m, k, n, g, b.values().data(), 1.0, a.grad().data());
      if (b.requires_grad())
        gemm_into(precision, true, false, k, n, m, a.values().data(), g, 1.0, b.grad().data());
    });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_mismatch("add", a.shape(), b.shape());
  Tensor out(a.shape());
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = av[i] + bv[i];
  if (any_requires_grad(tape, {&a, &b}))
    link(tape, OpKind::Add, {a, b}, out, [a, b, out]() mutable {
      if (a.requires_grad())
        a.accumulate_grad(out.grad());
      if (b.requires_grad())
        b.accumulate_grad(out.grad());
    });
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
    shape_mismatch("add_bias", x.shape(), bias.shape());
  const std::size_t c = bias.dim(0);
  Tensor out(x.shape());
  auto o = out.values();
  auto xv = x.values(), bv = bias.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = xv[i] + bv[i % c];
  if (any_requires_grad(tape, {&x, &bias}))
    link(tape, OpKind::AddBias, {x, bias}, out, [x, bias, out, c]() mutable {
      auto g = out.grad();
      if (x.requires_grad())
        x.accumulate_grad(g);
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i % c] += g[i];
      }
    });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_mismatch("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = av[i] * bv[i];
  if (any_requires_grad(tape, {&a, &b}))
    link(tape, OpKind::Mul, {a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += g[i] * av[i];
      }
    });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    shape_mismatch("scalar_mul", x.shape(), s.shape());
  const double factor = s.item();
  Tensor out(x.shape());
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = xv[i] * factor;
  if (any_requires_grad(tape, {&x, &s}))
    link(tape, OpKind::ScalarMul, {x, s}, out, [x, s, out]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        const double f = s.item();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * f;
      }
      if (s.requires_grad()) {
        auto xv = x.values();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
          acc += g[i] * xv[i];
        s.grad()[0] += acc;
      }
    });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  Tensor out(x.shape());
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = xv[i] * c;
  if (any_requires_grad(tape, {&x}))
    link(tape, OpKind::ScalarMul, {x}, out, [x, out, c]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * c;
    });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  auto xv = x.values();
  Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
  if (any_requires_grad(tape, {&x}))
    link(tape, OpKind::Sum, {x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (auto& v : x.grad())
        v += g;
    });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    shape_mismatch("reshape", x.shape(), shape);
  auto xv = x.values();
  Tensor out(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
  if (any_requires_grad(tape, {&x}))
    link(tape, OpKind::Reshape, {x}, out, [x, out]() mutable { x.accumulate_grad(out.grad()); });
  return out;
}

Tensor stack(Tape& tape, std::span<const Tensor> scalars) {
  if (scalars.empty())
    throw ShapeError("stack: no inputs");
  std::vector<double> values;
  values.reserve(scalars.size());
  bool grad = false;
  for (const auto& s : scalars) {
    if (s.size() != 1)
      shape_mismatch("stack", Shape{1}, s.shape());
    values.push_back(s.item());
    grad = grad || tape.needs_grad({&s});
  }
  Tensor out(Shape{scalars.size()}, std::move(values));
  if (grad) {
    std::vector<Tensor> inputs(scalars.begin(), scalars.end());
    link(tape, OpKind::Stack, inputs, out, [inputs, out]() mutable {
      auto g = out.grad();
      for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].requires_grad())
          inputs[i].grad()[0] += g[i];
    });
  }
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 4 || kernel.rank() != 4 || x.dim(3) != kernel.dim(2))
    shape_mismatch("conv2d", x.shape(), kernel.shape());
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != kernel.dim(3)))
    shape_mismatch("conv2d", kernel.shape(), bias.shape());
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(1), kernel.dim(3),
                 (kernel.dim(0) - 1) / 2, (kernel.dim(1) - 1) / 2};
  Tensor out(Shape{g.batch, g.height, g.width, g.out_ch});
  const Precision precision = tape.precision();
  if (precision == Precision::F64)
    conv_forward<double>(g, x.values().data(), kernel.values().data(), out.values().data());
  else
    conv_forward<float>(g, x.values().data(), kernel.values().data(), out.values().data());
  if (bias.defined()) {
    auto o = out.values();
    auto bv = bias.values();
    for (std::size_t i = 0; i < o.size(); ++i)
      o[i] += bv[i % g.out_ch];
  }
  if (any_requires_grad(tape, {&x, &kernel, &bias}))
    link(tape, OpKind::Conv2D, {x, kernel, bias}, out, [x, kernel, bias, out, g, precision]() mutable {
      const double* d = out.grad().data();
      double* dx = x.requires_grad() ? x.grad().data() : nullptr;
      double* dk = kernel.requires_grad() ? kernel.grad().data() : nullptr;
      if (precision == Precision::F64)
        conv_backward<double>(g, x.values().data(), kernel.values().data(), d, dx, dk);
      else
        conv_backward<float>(g, x.values().data(), kernel.values().data(), d, dx, dk);
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < go.size(); ++i)
          gb[i % g.out_ch] += go[i];
      }
    });
  return out;
}

Tensor pool2d(Tape& tape, const Tensor& x, PoolKind kind, std::size_t window, std::size_t stride) {
  if (x.rank() != 4 || window == 0 || stride == 0)
    throw ShapeError(std::string(kind == PoolKind::Max ? "max_pool" : "avg_pool") +
                     ": expected [B,H,W,C] input, got " + shape_str(x.shape()));
  const PoolGeometry g = pool_geometry(x.shape(), window, stride);
  Tensor out(Shape{g.batch, g.out_h, g.out_w, g.ch});
  auto xv = x.values();
  auto o = out.values();
  // Max: winning input index per output. Average: valid cell count per output.
  std::vector<std::size_t> saved(o.size());

  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const auto y0 = static_cast<std::ptrdiff_t>(oy * g.stride) - static_cast<std::ptrdiff_t>(g.pad_top);
        const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride) - static_cast<std::ptrdiff_t>(g.pad_left);
        const std::size_t ylo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(y0, 0));
        const std::size_t xlo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(x0, 0));
        const std::size_t yhi = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(g.in_h)));
        const std::size_t xhi = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(g.in_w)));
        for (std::size_t c = 0; c < g.ch; ++c) {
          const std::size_t oi = ((b * g.out_h + oy) * g.out_w + ox) * g.ch + c;
          if (kind == PoolKind::Max) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t iy = ylo; iy < yhi; ++iy)
              for (std::size_t ix = xlo; ix < xhi; ++ix) {
                const std::size_t ii = ((b * g.in_h + iy) * g.in_w + ix) * g.ch + c;
                if (xv[ii] > best) {
                  best = xv[ii];
                  arg = ii;
                }
              }
            o[oi] = best;
            saved[oi] = arg;
          } else {
            double acc = 0.0;
            for (std::size_t iy = ylo; iy < yhi; ++iy)
              for (std::size_t ix = xlo; ix < xhi; ++ix)
                acc += xv[((b * g.in_h + iy) * g.in_w + ix) * g.ch + c];
            const std::size_t count = (yhi - ylo) * (xhi - xlo);
            o[oi] = acc / static_cast<double>(count);
            saved[oi] = count;
          }
        }
      }

  if (any_requires_grad(tape, {&x})) {
    const OpKind op = kind == PoolKind::Max ? OpKind::MaxPool : OpKind::AvgPool;
    link(tape, op, {x}, out, [x, out, kind, g, saved = std::move(saved)]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      if (kind == PoolKind::Max) {
        for (std::size_t oi = 0; oi < go.size(); ++oi)
          gx[saved[oi]] += go[oi];
        return;
      }
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto y0 = static_cast<std::ptrdiff_t>(oy * g.stride) - static_cast<std::ptrdiff_t>(g.pad_top);
            const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride) - static_cast<std::ptrdiff_t>(g.pad_left);
            for (std::size_t c = 0; c < g.ch; ++c) {
              const std::size_t oi = ((b * g.out_h + oy) * g.out_w + ox) * g.ch + c;
              const double share = go[oi] / static_cast<double>(saved[oi]);
              for (std::ptrdiff_t iy = std::max<std::ptrdiff_t>(y0, 0);
                   iy < std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(g.in_h)); ++iy)
                for (std::ptrdiff_t ix = std::max<std::ptrdiff_t>(x0, 0);
                     ix < std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(g.in_w)); ++ix)
                  gx[((b * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.ch + c] += share;
            }
          }
    });
  }
  return out;
}

Tensor unary(Tape& tape, BaseKind kind, const Tensor& x) {
  if (kind == BaseKind::Swish)
    throw ConfigError("unary: swish needs a beta tensor, use ops::swish");
  Tensor out(x.shape(), eval_base(kind, x.values(), nullptr));
  if (any_requires_grad(tape, {&x}))
    link(tape, OpKind::Unary, {x}, out, [x, out, kind]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      auto xv = x.values();
      for (std::size_t i = 0; i < go.size(); ++i)
        gx[i] += go[i] * grad_base(kind, xv[i]);
    });
  return out;
}

Tensor swish(Tape& tape, const Tensor& x, const Tensor& beta) {
  if (beta.size() != 1)
    shape_mismatch("swish", x.shape(), beta.shape());
  const double b = beta.item();
  Tensor out(x.shape(), eval_base(BaseKind::Swish, x.values(), &b));
  if (any_requires_grad(tape, {&x, &beta}))
    link(tape, OpKind::Swish, {x, beta}, out, [x, beta, out]() mutable {
      auto go = out.grad();
      auto xv = x.values();
      const double bv = beta.item();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < go.size(); ++i)
          gx[i] += go[i] * grad_base(BaseKind::Swish, xv[i], bv);
      }
      if (beta.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i)
          acc += go[i] * swish_grad_beta(xv[i], bv);
        beta.grad()[0] += acc;
      }
    });
  return out;
}

Tensor blend(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& beta) {
  if (weights.rank() != 1 || weights.dim(0) != kAbuSize)
    shape_mismatch("blend", Shape{kAbuSize}, weights.shape());
  if (beta.size() != 1)
    shape_mismatch("blend", Shape{1}, beta.shape());
  const auto w = weights.values();
  const double b = beta.item();
  Tensor out(x.shape());
  auto o = out.values();
  auto xv = x.values();
  double f[kAbuSize];
  for (std::size_t i = 0; i < o.size(); ++i) {
    abu_members(xv[i], b, f);
    double acc = 0.0;
    for (std::size_t j = 0; j < kAbuSize; ++j)
      acc += w[j] * f[j];
    o[i] = acc;
  }
  if (any_requires_grad(tape, {&x, &weights, &beta}))
    link(tape, OpKind::Blend, {x, weights, beta}, out, [x, weights, beta, out]() mutable {
      auto go = out.grad();
      auto xv = x.values();
      auto w = weights.values();
      const double b = beta.item();
      double gw[kAbuSize] = {};
      double gb = 0.0;
      const bool need_x = x.requires_grad();
      std::span<double> gx = need_x ? x.grad() : std::span<double>{};
      double f[kAbuSize], df[kAbuSize], dbeta = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double g = go[i];
        abu_member_grads(xv[i], b, f, df, dbeta);
        double dx = 0.0;
        for (std::size_t j = 0; j < kAbuSize; ++j) {
          gw[j] += g * f[j];
          dx += w[j] * df[j];
        }
        if (need_x)
          gx[i] += g * dx;
        gb += g * dbeta;
      }
      if (weights.requires_grad()) {
        auto gws = weights.grad();
        for (std::size_t j = 0; j < kAbuSize; ++j)
          gws[j] += gw[j];
      }
      if (beta.requires_grad())
        beta.grad()[0] += gb * w[kAbuSize - 1];
    });
  return out;
}

Tensor normalize_weights(Tape& tape, const Tensor& raw, NormMode mode, std::string_view context) {
  if (raw.rank() != 1)
    throw ShapeError("normalize: expected a weight vector, got " + shape_str(raw.shape()));
  if (mode == NormMode::None)
    return raw;
  Tensor out(raw.shape(), effective_weights(raw.values(), mode, context));
  if (any_requires_grad(tape, {&raw}))
    link(tape, OpKind::Normalize, {raw}, out, [raw, out, mode]() mutable {
      raw.accumulate_grad(effective_weights_vjp(raw.values(), mode, out.grad()));
    });
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, std::span<const double> keep_mask, double rate) {
  if (keep_mask.size() != x.size())
    shape_mismatch("dropout", x.shape(), Shape{keep_mask.size()});
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout: rate must lie in [0, 1)");
  const double inv_keep = 1.0 / (1.0 - rate);
  std::vector<double> factor(keep_mask.size());
  for (std::size_t i = 0; i < factor.size(); ++i)
    factor[i] = keep_mask[i] * inv_keep;
  Tensor out(x.shape());
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = xv[i] * factor[i];
  if (any_requires_grad(tape, {&x}))
    link(tape, OpKind::Dropout, {x}, out, [x, out, factor = std::move(factor)]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i)
        gx[i] += go[i] * factor[i];
    });
  return out;
}

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
  if (x.rank() < 2)
    throw ShapeError("batch_norm: expected at least [B,C], got " + shape_str(x.shape()));
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c || state.running_mean.size() != c)
    shape_mismatch("batch_norm", x.shape(), gamma.shape());
  if (training && x.dim(0) < 2)
    throw ShapeError("batch_norm: training mode needs a batch of at least 2, got " + shape_str(x.shape()));

  const std::size_t rows = x.size() / c;
  auto xv = x.values();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t i = 0; i < xv.size(); ++i)
      mean[i % c] += xv[i];
    for (auto& m : mean)
      m /= static_cast<double>(rows);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double d = xv[i] - mean[i % c];
      var[i % c] += d * d;
    }
    for (auto& v : var)
      v /= static_cast<double>(rows);
    for (std::size_t k = 0; k < c; ++k) {
      state.running_mean[k] = state.momentum * state.running_mean[k] + (1.0 - state.momentum) * mean[k];
      state.running_var[k] = state.momentum * state.running_var[k] + (1.0 - state.momentum) * var[k];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(c);
  for (std::size_t k = 0; k < c; ++k)
    inv_std[k] = 1.0 / std::sqrt(var[k] + state.epsilon);
  std::vector<double> normalized(xv.size());
  Tensor out(x.shape());
  auto o = out.values();
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t k = i % c;
    normalized[i] = (xv[i] - mean[k]) * inv_std[k];
    o[i] = normalized[i] * gv[k] + bv[k];
  }

  if (any_requires_grad(tape, {&x, &gamma, &beta}))
    link(tape, OpKind::BatchNorm, {x, gamma, beta}, out,
         [x, gamma, beta, out, c, rows, training, inv_std = std::move(inv_std),
          normalized = std::move(normalized)]() mutable {
           auto go = out.grad();
           std::vector<double> sum_g(c, 0.0), sum_gn(c, 0.0);
           for (std::size_t i = 0; i < go.size(); ++i) {
             sum_g[i % c] += go[i];
             sum_gn[i % c] += go[i] * normalized[i];
           }
           if (gamma.requires_grad())
             gamma.accumulate_grad(sum_gn);
           if (beta.requires_grad())
             beta.accumulate_grad(sum_g);
           if (!x.requires_grad())
             return;
           auto gx = x.grad();
           auto gv = gamma.values();
           const double n = static_cast<double>(rows);
           for (std::size_t i = 0; i < go.size(); ++i) {
             const std::size_t k = i % c;
             if (training)
               gx[i] += gv[k] * inv_std[k] * (go[i] - sum_g[k] / n - normalized[i] * sum_gn[k] / n);
             else
               gx[i] += gv[k] * inv_std[k] * go[i];
           }
         });
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    shape_mismatch("softmax_cross_entropy", logits.shape(), Shape{labels.size()});
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  auto lv = logits.values();
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c)
      throw ConfigError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " outside [0, " +
                        std::to_string(c) + ")");
    const double* row = lv.data() + r * c;
    const double top = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k)
      z += std::exp(row[k] - top);
    const double log_z = top + std::log(z);
    for (std::size_t k = 0; k < c; ++k)
      probs[r * c + k] = std::exp(row[k] - log_z);
    loss += log_z - row[labels[r]];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(b));
  if (any_requires_grad(tape, {&logits})) {
    std::vector<int> lab(labels.begin(), labels.end());
    link(tape, OpKind::SoftmaxCrossEntropy, {logits}, out,
         [logits, out, b, c, probs = std::move(probs), lab = std::move(lab)]() mutable {
           const double scale = out.grad()[0] / static_cast<double>(b);
           auto gl = logits.grad();
           for (std::size_t r = 0; r < b; ++r)
             for (std::size_t k = 0; k < c; ++k) {
               const double target = static_cast<int>(k) == lab[r] ? 1.0 : 0.0;
               gl[r * c + k] += scale * (probs[r * c + k] - target);
             }
         });
  }
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    shape_mismatch("accuracy", logits.shape(), Shape{labels.size()});
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  auto lv = logits.values();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* row = lv.data() + r * c;
    const auto arg = static_cast<int>(std::max_element(row, row + c) - row);
    correct += arg == labels[r] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(b);
}

} // namespace abunet::ops
