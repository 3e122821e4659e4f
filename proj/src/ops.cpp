// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace obiformer {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

namespace ops {
namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <class T>
bool needs_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

struct ConvGeometry {
  int batch, in_channels, height, width;
  int out_channels, kernel, stride, padding;
  int out_height, out_width;
};

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
  require_nchw(x, "conv2d input");
  require_nchw(w, "conv2d weight");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, padding, 0, 0};
  if (w.dim(1) != g.in_channels || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight " + shape_string(w.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  const int span_h = g.height + 2 * padding - g.kernel;
  const int span_w = g.width + 2 * padding - g.kernel;
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d: input smaller than kernel");
  g.out_height = span_h / stride + 1;
  g.out_width = span_w / stride + 1;
  return g;
}

// col has shape (Cin*K*K) x (Hout*Wout), row-major.
template <class T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const int out_area = g.out_height * g.out_width;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* row = col + (static_cast<std::size_t>(c) * g.kernel * g.kernel + ki * g.kernel + kj) * out_area;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const int out_area = g.out_height * g.out_width;
  for (int c = 0; c < g.in_channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c) * g.kernel * g.kernel + ki * g.kernel + kj) * out_area;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.out_width;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T, class Forward, class Backward>
Var<T> unary(const Var<T>& x, Forward f, Backward df) {
  Tensor<T> out(x->value.shape());
  const std::size_t n = out.size();
  const T* in = x->value.data();
  T* o = out.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = f(in[i]);
  return make_result<T>(std::move(out), {x}, [x, df](Node<T>& self) {
    T* gx = x->grad_buffer().data();
    const T* dy = self.grad.data();
    const T* xv = x->value.data();
    const T* yv = self.value.data();
    const std::size_t n = self.value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

template <class T>
Tensor<T> scalar_tensor(T v) {
  return Tensor<T>(Shape{1}, std::vector<T>{v});
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out = a->value;
  const std::size_t n = out.size();
  T* o = out.data();
  const T* bv = b->value.data();
  for (std::size_t i = 0; i < n; ++i) o[i] += bv[i];
  return make_result<T>(std::move(out), {a, b}, [a, b, n](Node<T>& self) {
    const T* dy = self.grad.data();
    for (const auto& v : {a, b}) {
      if (!v->requires_grad) continue;
      T* g = v->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "sub");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary<T>(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var<T> one_minus(const Var<T>& a) {
  return unary<T>(a, [](T x) { return T(1) - x; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary<T>(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return unary<T>(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <class T>
Var<T> gated_gelu(const Var<T>& x) {
  require_nchw(x->value, "gated_gelu");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  if (channels % 2 != 0) throw ShapeError("gated_gelu: channel count must be even");
  const int half = channels / 2;
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  const std::size_t half_block = half * area;
  Tensor<T> out(Shape{batch, half, in.dim(2), in.dim(3)});
  for (int b = 0; b < batch; ++b) {
    const T* gate = in.data() + static_cast<std::size_t>(b) * channels * area;
    const T* value = gate + half_block;
    T* dst = out.data() + b * half_block;
    for (std::size_t i = 0; i < half_block; ++i) dst[i] = gelu(gate[i]) * value[i];
  }
  return make_result<T>(std::move(out), {x}, [x, batch, channels, area, half_block](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (int b = 0; b < batch; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * channels * area;
      const T* gate = x->value.data() + base;
      const T* value = gate + half_block;
      T* dgate = g.data() + base;
      T* dvalue = dgate + half_block;
      const T* dy = self.grad.data() + b * half_block;
      for (std::size_t i = 0; i < half_block; ++i) {
        const T x = gate[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
        dgate[i] += dy[i] * value[i] * (cdf + x * pdf);
        dvalue[i] += dy[i] * x * cdf;
      }
    }
  });
}

template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
  require_nchw(x->value, "scale_channels");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  if (s->value.shape() != Shape{batch, channels, 1, 1}) {
    throw ShapeError("scale_channels: scale " + shape_string(s->value.shape()) + " vs input " +
                     shape_string(in.shape()));
  }
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  Tensor<T> out(in.shape());
  for (std::size_t bc = 0; bc < static_cast<std::size_t>(batch) * channels; ++bc) {
    const T f = s->value[bc];
    for (std::size_t i = 0; i < area; ++i) out[bc * area + i] = in[bc * area + i] * f;
  }
  return make_result<T>(std::move(out), {x, s}, [x, s, batch, channels, area](Node<T>& self) {
    const std::size_t planes = static_cast<std::size_t>(batch) * channels;
    if (x->requires_grad) {
      auto& g = x->grad_buffer();
      for (std::size_t bc = 0; bc < planes; ++bc) {
        const T f = s->value[bc];
        for (std::size_t i = 0; i < area; ++i) g[bc * area + i] += self.grad[bc * area + i] * f;
      }
    }
    if (s->requires_grad) {
      auto& g = s->grad_buffer();
      for (std::size_t bc = 0; bc < planes; ++bc) {
        T acc = 0;
        for (std::size_t i = 0; i < area; ++i) acc += self.grad[bc * area + i] * x->value[bc * area + i];
        g[bc] += acc;
      }
    }
  });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_nchw(x->value, "global_avg_pool");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  Tensor<T> out(Shape{batch, channels, 1, 1});
  for (std::size_t bc = 0; bc < out.size(); ++bc) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += in[bc * area + i];
    out[bc] = acc / static_cast<T>(area);
  }
  return make_result<T>(std::move(out), {x}, [x, area](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (std::size_t bc = 0; bc < self.grad.size(); ++bc) {
      const T d = self.grad[bc] / static_cast<T>(area);
      for (std::size_t i = 0; i < area; ++i) g[bc * area + i] += d;
    }
  });
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const ConvGeometry g = conv_geometry(x->value, weight->value, stride, padding);
  if (bias && bias->value.size() != static_cast<std::size_t>(g.out_channels)) {
    throw ShapeError("conv2d: bias size does not match output channels");
  }
  const int patch = g.in_channels * g.kernel * g.kernel;
  const int out_area = g.out_height * g.out_width;
  const int in_area = g.height * g.width;
  const bool pointwise = g.kernel == 1 && stride == 1 && padding == 0;

  Tensor<T> out(Shape{g.batch, g.out_channels, g.out_height, g.out_width});
  ConstMatMap<T> w(weight->value.data(), g.out_channels, patch);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(patch) * out_area);
  for (int b = 0; b < g.batch; ++b) {
    const T* image = x->value.data() + static_cast<std::size_t>(b) * g.in_channels * in_area;
    const T* col_ptr = image;
    if (!pointwise) {
      im2col(image, g, col.data());
      col_ptr = col.data();
    }
    MatMap<T> y(out.data() + static_cast<std::size_t>(b) * g.out_channels * out_area, g.out_channels, out_area);
    y.noalias() = w * ConstMatMap<T>(col_ptr, patch, out_area);
    if (bias) {
      for (int c = 0; c < g.out_channels; ++c) y.row(c).array() += bias->value[c];
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [x, weight, bias, g, patch, out_area, in_area,
                                                             pointwise](Node<T>& self) {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(patch) * out_area);
    std::vector<T> dcol(static_cast<std::size_t>(patch) * out_area);
    ConstMatMap<T> w(weight->value.data(), g.out_channels, patch);
    for (int b = 0; b < g.batch; ++b) {
      ConstMatMap<T> dy(self.grad.data() + static_cast<std::size_t>(b) * g.out_channels * out_area, g.out_channels,
                        out_area);
      const T* image = x->value.data() + static_cast<std::size_t>(b) * g.in_channels * in_area;
      if (weight->requires_grad) {
        const T* col_ptr = image;
        if (!pointwise) {
          im2col(image, g, col.data());
          col_ptr = col.data();
        }
        MatMap<T> dw(weight->grad_buffer().data(), g.out_channels, patch);
        dw.noalias() += dy * ConstMatMap<T>(col_ptr, patch, out_area).transpose();
      }
      if (x->requires_grad) {
        T* dx = x->grad_buffer().data() + static_cast<std::size_t>(b) * g.in_channels * in_area;
        if (pointwise) {
          MatMap<T>(dx, patch, out_area).noalias() += w.transpose() * dy;
        } else {
          MatMap<T>(dcol.data(), patch, out_area).noalias() = w.transpose() * dy;
          col2im_add(dcol.data(), g, dx);
        }
      }
      if (bias && bias->requires_grad) {
        auto& db = bias->grad_buffer();
        for (int c = 0; c < g.out_channels; ++c) db[c] += dy.row(c).sum();
      }
    }
  });
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& weight, int padding) {
  require_nchw(x->value, "depthwise_conv2d input");
  require_nchw(weight->value, "depthwise_conv2d weight");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int k = weight->value.dim(2);
  if (weight->value.dim(0) != channels || weight->value.dim(1) != 1 || weight->value.dim(3) != k) {
    throw ShapeError("depthwise_conv2d: weight " + shape_string(weight->value.shape()) + " incompatible with input " +
                     shape_string(in.shape()));
  }
  const int out_h = height + 2 * padding - k + 1;
  const int out_w = width + 2 * padding - k + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("depthwise_conv2d: input smaller than kernel");

  // Visits every valid (output row/col, input row/col) tap of one plane.
  auto for_each_tap = [=](auto&& body) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int x0 = std::max(0, padding - kj);
        const int x1 = std::min(out_w, width + padding - kj);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy - padding + ki;
          if (iy < 0 || iy >= height || x0 >= x1) continue;
          body(ki * k + kj, oy * out_w, iy * width + kj - padding, x0, x1);
        }
      }
    }
  };

  Tensor<T> out(Shape{batch, channels, out_h, out_w});
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const T* src = in.data() + (static_cast<std::size_t>(b) * channels + c) * height * width;
      T* dst = out.data() + (static_cast<std::size_t>(b) * channels + c) * out_h * out_w;
      const T* w = weight->value.data() + static_cast<std::size_t>(c) * k * k;
      for_each_tap([&](int tap, int out_row, int in_row, int x0, int x1) {
        const T wv = w[tap];
        T* d = dst + out_row;
        const T* s = src + in_row;
        for (int ox = x0; ox < x1; ++ox) d[ox] += wv * s[ox];
      });
    }
  }

  return make_result<T>(std::move(out), {x, weight}, [=](Node<T>& self) {
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t in_off = (static_cast<std::size_t>(b) * channels + c) * height * width;
        const T* dy = self.grad.data() + (static_cast<std::size_t>(b) * channels + c) * out_h * out_w;
        const T* src = x->value.data() + in_off;
        const T* w = weight->value.data() + static_cast<std::size_t>(c) * k * k;
        T* dx = x->requires_grad ? x->grad_buffer().data() + in_off : nullptr;
        T* dw = weight->requires_grad ? weight->grad_buffer().data() + static_cast<std::size_t>(c) * k * k : nullptr;
        for_each_tap([&](int tap, int out_row, int in_row, int x0, int x1) {
          const T* g = dy + out_row;
          if (dx) {
            const T wv = w[tap];
            T* d = dx + in_row;
            for (int ox = x0; ox < x1; ++ox) d[ox] += wv * g[ox];
          }
          if (dw) {
            const T* s = src + in_row;
            using Vec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
            dw[tap] += Vec(g + x0, x1 - x0).dot(Vec(s + x0, x1 - x0));
          }
        });
      }
    }
  });
}

template <class T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_nchw(x->value, "conv_transpose2x2 input");
  require_nchw(weight->value, "conv_transpose2x2 weight");
  const auto& in = x->value;
  const int batch = in.dim(0), cin = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int cout = weight->value.dim(1);
  if (weight->value.dim(0) != cin || weight->value.dim(2) != 2 || weight->value.dim(3) != 2) {
    throw ShapeError("conv_transpose2x2: weight " + shape_string(weight->value.shape()) + " incompatible with input " +
                     shape_string(in.shape()));
  }
  if (bias && bias->value.size() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv_transpose2x2: bias size does not match output channels");
  }
  const int area = height * width;
  const int out_w = 2 * width;
  Tensor<T> out(Shape{batch, cout, 2 * height, out_w});
  ConstMatMap<T> w(weight->value.data(), cin, cout * 4);
  RowMatrix<T> z(cout * 4, area);
  for (int b = 0; b < batch; ++b) {
    z.noalias() = w.transpose() * ConstMatMap<T>(in.data() + static_cast<std::size_t>(b) * cin * area, cin, area);
    T* dst = out.data() + static_cast<std::size_t>(b) * cout * 4 * area;
    for (int co = 0; co < cout; ++co) {
      const T bv = bias ? bias->value[co] : T(0);
      for (int tap = 0; tap < 4; ++tap) {
        const int di = tap / 2, dj = tap % 2;
        const T* zr = z.data() + static_cast<std::size_t>(co * 4 + tap) * area;
        T* plane = dst + static_cast<std::size_t>(co) * 4 * area;
        for (int i = 0; i < height; ++i) {
          for (int j = 0; j < width; ++j) plane[(2 * i + di) * out_w + 2 * j + dj] = zr[i * width + j] + bv;
        }
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    ConstMatMap<T> w(weight->value.data(), cin, cout * 4);
    RowMatrix<T> dz(cout * 4, area);
    for (int b = 0; b < batch; ++b) {
      const T* dy = self.grad.data() + static_cast<std::size_t>(b) * cout * 4 * area;
      for (int co = 0; co < cout; ++co) {
        for (int tap = 0; tap < 4; ++tap) {
          const int di = tap / 2, dj = tap % 2;
          T* zr = dz.data() + static_cast<std::size_t>(co * 4 + tap) * area;
          const T* plane = dy + static_cast<std::size_t>(co) * 4 * area;
          for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) zr[i * width + j] = plane[(2 * i + di) * out_w + 2 * j + dj];
          }
        }
      }
      const std::size_t in_off = static_cast<std::size_t>(b) * cin * area;
      if (x->requires_grad) {
        MatMap<T>(x->grad_buffer().data() + in_off, cin, area).noalias() += w * dz;
      }
      if (weight->requires_grad) {
        MatMap<T>(weight->grad_buffer().data(), cin, cout * 4).noalias() +=
            ConstMatMap<T>(x->value.data() + in_off, cin, area) * dz.transpose();
      }
      if (bias && bias->requires_grad) {
        auto& db = bias->grad_buffer();
        for (int co = 0; co < cout; ++co) db[co] += dz.middleRows(co * 4, 4).sum();
      }
    }
  });
}

template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_nchw(x->value, "layer_norm_channels");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  if (gamma->value.size() != static_cast<std::size_t>(channels) || beta->value.size() != gamma->value.size()) {
    throw ShapeError("layer_norm_channels: affine size does not match channel count");
  }
  Tensor<T> out(in.shape());
  Tensor<T> xhat(in.shape());
  std::vector<T> rstd(static_cast<std::size_t>(batch) * area);
  for (int b = 0; b < batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * channels * area;
    for (std::size_t p = 0; p < area; ++p) {
      T mean = 0;
      for (int c = 0; c < channels; ++c) mean += in[base + c * area + p];
      mean /= channels;
      T var = 0;
      for (int c = 0; c < channels; ++c) {
        const T d = in[base + c * area + p] - mean;
        var += d * d;
      }
      var /= channels;
      const T r = T(1) / std::sqrt(var + eps);
      rstd[b * area + p] = r;
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = base + c * area + p;
        xhat[i] = (in[i] - mean) * r;
        out[i] = gamma->value[c] * xhat[i] + beta->value[c];
      }
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), batch, channels,
                         area](Node<T>& self) {
                          const auto& dy = self.grad;
                          if (gamma->requires_grad || beta->requires_grad) {
                            auto& dg = gamma->grad_buffer();
                            auto& db = beta->grad_buffer();
                            for (int b = 0; b < batch; ++b) {
                              for (int c = 0; c < channels; ++c) {
                                const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
                                T sg = 0, sb = 0;
                                for (std::size_t p = 0; p < area; ++p) {
                                  sg += dy[off + p] * xhat[off + p];
                                  sb += dy[off + p];
                                }
                                dg[c] += sg;
                                db[c] += sb;
                              }
                            }
                          }
                          if (!x->requires_grad) return;
                          auto& dx = x->grad_buffer();
                          std::vector<T> dxhat(channels);
                          for (int b = 0; b < batch; ++b) {
                            const std::size_t base = static_cast<std::size_t>(b) * channels * area;
                            for (std::size_t p = 0; p < area; ++p) {
                              T sum = 0, sum_xhat = 0;
                              for (int c = 0; c < channels; ++c) {
                                const std::size_t i = base + c * area + p;
                                dxhat[c] = dy[i] * gamma->value[c];
                                sum += dxhat[c];
                                sum_xhat += dxhat[c] * xhat[i];
                              }
                              const T r = rstd[b * area + p] / channels;
                              for (int c = 0; c < channels; ++c) {
                                const std::size_t i = base + c * area + p;
                                dx[i] += r * (channels * dxhat[c] - sum - xhat[i] * sum_xhat);
                              }
                            }
                          }
                        });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T> stats, bool train,
                  T momentum, T eps) {
  require_nchw(x->value, "batch_norm");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  const std::size_t count = batch * area;
  if (gamma->value.size() != static_cast<std::size_t>(channels) || beta->value.size() != gamma->value.size() ||
      stats.running_mean.size() != gamma->value.size() || stats.running_var.size() != gamma->value.size()) {
    throw ShapeError("batch_norm: parameter size does not match channel count");
  }
  std::vector<T> mean(channels), rstd(channels);
  for (int c = 0; c < channels; ++c) {
    if (train) {
      T m = 0;
      for (int b = 0; b < batch; ++b) {
        const T* p = in.data() + (static_cast<std::size_t>(b) * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) m += p[i];
      }
      m /= static_cast<T>(count);
      T v = 0;
      for (int b = 0; b < batch; ++b) {
        const T* p = in.data() + (static_cast<std::size_t>(b) * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const T biased = v / static_cast<T>(count);
      const T unbiased = count > 1 ? v / static_cast<T>(count - 1) : biased;
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * m;
      stats.running_var[c] = (T(1) - momentum) * stats.running_var[c] + momentum * unbiased;
      mean[c] = m;
      rstd[c] = T(1) / std::sqrt(biased + eps);
    } else {
      mean[c] = stats.running_mean[c];
      rstd[c] = T(1) / std::sqrt(stats.running_var[c] + eps);
    }
  }
  Tensor<T> out(in.shape());
  Tensor<T> xhat(in.shape());
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) {
        xhat[off + i] = (in[off + i] - mean[c]) * rstd[c];
        out[off + i] = gamma->value[c] * xhat[off + i] + beta->value[c];
      }
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), batch, channels, area, count,
       train](Node<T>& self) {
        const auto& dy = self.grad;
        std::vector<T> sum(channels, 0), sum_xhat(channels, 0);
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < channels; ++c) {
            const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              sum[c] += dy[off + i];
              sum_xhat[c] += dy[off + i] * xhat[off + i];
            }
          }
        }
        if (gamma->requires_grad) {
          auto& dg = gamma->grad_buffer();
          for (int c = 0; c < channels; ++c) dg[c] += sum_xhat[c];
        }
        if (beta->requires_grad) {
          auto& db = beta->grad_buffer();
          for (int c = 0; c < channels; ++c) db[c] += sum[c];
        }
        if (!x->requires_grad) return;
        auto& dx = x->grad_buffer();
        const T n = static_cast<T>(count);
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < channels; ++c) {
            const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
            const T gr = gamma->value[c] * rstd[c];
            for (std::size_t i = 0; i < area; ++i) {
              if (train) {
                dx[off + i] += gr * (dy[off + i] - sum[c] / n - xhat[off + i] * sum_xhat[c] / n);
              } else {
                dx[off + i] += gr * dy[off + i];
              }
            }
          }
        }
      });
}

template <class T>
Var<T> channel_attention(const Var<T>& qkv, const Var<T>& alpha, Tensor<T>* attention_map) {
  require_nchw(qkv->value, "channel_attention");
  const auto& in = qkv->value;
  const int batch = in.dim(0);
  if (in.dim(1) % 3 != 0) throw ShapeError("channel_attention: packed q|k|v channel count must be divisible by 3");
  if (alpha->value.size() != 1) throw ShapeError("channel_attention: temperature must be a scalar");
  const int channels = in.dim(1) / 3;
  const int area = in.dim(2) * in.dim(3);
  const T temperature = alpha->value[0];

  Tensor<T> out(Shape{batch, channels, in.dim(2), in.dim(3)});
  Tensor<T> maps(Shape{batch, channels, channels});
  for (int b = 0; b < batch; ++b) {
    const T* base = in.data() + static_cast<std::size_t>(b) * 3 * channels * area;
    ConstMatMap<T> q(base, channels, area);
    ConstMatMap<T> k(base + static_cast<std::size_t>(channels) * area, channels, area);
    ConstMatMap<T> v(base + static_cast<std::size_t>(2) * channels * area, channels, area);
    MatMap<T> a(maps.data() + static_cast<std::size_t>(b) * channels * channels, channels, channels);
    a.noalias() = (k * q.transpose()) / temperature;
    for (int i = 0; i < channels; ++i) {
      const T m = a.row(i).maxCoeff();
      a.row(i) = (a.row(i).array() - m).exp();
      a.row(i) /= a.row(i).sum();
    }
    MatMap<T>(out.data() + static_cast<std::size_t>(b) * channels * area, channels, area).noalias() = a * v;
  }
  if (attention_map) *attention_map = maps;

  return make_result<T>(std::move(out), {qkv, alpha}, [=, maps = std::move(maps)](Node<T>& self) {
    RowMatrix<T> da(channels, channels), ds(channels, channels);
    T dalpha = 0;
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = static_cast<std::size_t>(b) * 3 * channels * area;
      const T* base = qkv->value.data() + off;
      ConstMatMap<T> q(base, channels, area);
      ConstMatMap<T> k(base + static_cast<std::size_t>(channels) * area, channels, area);
      ConstMatMap<T> v(base + static_cast<std::size_t>(2) * channels * area, channels, area);
      ConstMatMap<T> a(maps.data() + static_cast<std::size_t>(b) * channels * channels, channels, channels);
      ConstMatMap<T> dy(self.grad.data() + static_cast<std::size_t>(b) * channels * area, channels, area);
      da.noalias() = dy * v.transpose();
      // Row-wise softmax Jacobian.
      for (int i = 0; i < channels; ++i) {
        const T dot = (da.row(i).array() * a.row(i).array()).sum();
        ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
      }
      if (qkv->requires_grad) {
        T* g = qkv->grad_buffer().data() + off;
        MatMap<T> dq(g, channels, area);
        MatMap<T> dk(g + static_cast<std::size_t>(channels) * area, channels, area);
        MatMap<T> dv(g + static_cast<std::size_t>(2) * channels * area, channels, area);
        dv.noalias() += a.transpose() * dy;
        dk.noalias() += (ds * q) / temperature;
        dq.noalias() += (ds.transpose() * k) / temperature;
      }
      if (alpha->requires_grad) {
        // logits = M / alpha  =>  d/dalpha = -sum(ds * logits) / alpha
        const RowMatrix<T> logits = (k * q.transpose()) / temperature;
        dalpha -= (ds.array() * logits.array()).sum() / temperature;
      }
    }
    if (alpha->requires_grad) alpha->grad_buffer()[0] += dalpha;
  });
}

template <class T>
Var<T> max_pool2x2(const Var<T>& x) {
  require_nchw(x->value, "max_pool2x2");
  const auto& in = x->value;
  const int planes = in.dim(0) * in.dim(1), height = in.dim(2), width = in.dim(3);
  const int oh = height / 2, ow = width / 2;
  Tensor<T> out(Shape{in.dim(0), in.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (int p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * height * width;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * width + 2 * j;
        for (int d = 1; d < 4; ++d) {
          const std::size_t idx = base + static_cast<std::size_t>(2 * i + d / 2) * width + 2 * j + d % 2;
          if (in[idx] > in[best]) best = idx;
        }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + i) * ow + j;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [x, argmax = std::move(argmax)](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
  });
}

template <class T>
Var<T> repeat_channels(const Var<T>& x, int channels) {
  require_nchw(x->value, "repeat_channels");
  const auto& in = x->value;
  if (in.dim(1) != 1) throw ShapeError("repeat_channels: input must have one channel");
  const int batch = in.dim(0);
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  Tensor<T> out(Shape{batch, channels, in.dim(2), in.dim(3)});
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      std::copy_n(in.data() + b * area, area, out.data() + (static_cast<std::size_t>(b) * channels + c) * area);
    }
  }
  return make_result<T>(std::move(out), {x}, [x, batch, channels, area](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(b) * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) g[b * area + i] += src[i];
      }
    }
  });
}

template <class T>
Var<T> normalize_channels(const Var<T>& x, const std::vector<T>& mean, const std::vector<T>& stddev) {
  require_nchw(x->value, "normalize_channels");
  const auto& in = x->value;
  const int batch = in.dim(0), channels = in.dim(1);
  if (mean.size() != static_cast<std::size_t>(channels) || stddev.size() != mean.size()) {
    throw ShapeError("normalize_channels: statistics do not match channel count");
  }
  const std::size_t area = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
  Tensor<T> out(in.shape());
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) out[off + i] = (in[off + i] - mean[c]) / stddev[c];
    }
  }
  return make_result<T>(std::move(out), {x}, [x, stddev, batch, channels, area](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) g[off + i] += self.grad[off + i] / stddev[c];
      }
    }
  });
}

template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mse");
  const std::size_t n = a->value.size();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
    acc += d * d;
  }
  return make_result<T>(scalar_tensor(static_cast<T>(acc / static_cast<double>(n))), {a, b}, [a, b, n](Node<T>& self) {
    const T f = T(2) * self.grad[0] / static_cast<T>(n);
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += f * (a->value[i] - b->value[i]);
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= f * (a->value[i] - b->value[i]);
    }
  });
}

template <class T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "l1_mean");
  const std::size_t n = a->value.size();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(a->value[i]) - b->value[i]);
  return make_result<T>(scalar_tensor(static_cast<T>(acc / static_cast<double>(n))), {a, b}, [a, b, n](Node<T>& self) {
    const T f = self.grad[0] / static_cast<T>(n);
    auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += f * sign(a->value[i] - b->value[i]);
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= f * sign(a->value[i] - b->value[i]);
    }
  });
}

template <class T>
Var<T> psnr_loss(const Var<T>& pred, const Var<T>& gt, T dynamic_range, T mse_floor) {
  auto err = mse(pred, gt);
  const T m = err->value[0];
  const T floored = std::max(m, mse_floor);
  const T value = T(10) * std::log10(floored) - T(20) * std::log10(dynamic_range);
  return make_result<T>(scalar_tensor(value), {err}, [err, m, mse_floor](Node<T>& self) {
    if (m <= mse_floor) return;
    err->grad_buffer()[0] += self.grad[0] * T(10) / (std::numbers::ln10_v<T> * m);
  });
}

#define OBIFORMER_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> scale<T>(const Var<T>&, T);                                                          \
  template Var<T> one_minus<T>(const Var<T>&);                                                         \
  template Var<T> relu<T>(const Var<T>&);                                                              \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                           \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                                       \
  template Var<T> gated_gelu<T>(const Var<T>&);                                                        \
  template Var<T> scale_channels<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                    \
  template Var<T> depthwise_conv2d<T>(const Var<T>&, const Var<T>&, int);                              \
  template Var<T> conv_transpose2x2<T>(const Var<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> layer_norm_channels<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>, bool, T, \
                                T);                                                                    \
  template Var<T> channel_attention<T>(const Var<T>&, const Var<T>&, Tensor<T>*);                      \
  template Var<T> max_pool2x2<T>(const Var<T>&);                                                       \
  template Var<T> repeat_channels<T>(const Var<T>&, int);                                              \
  template Var<T> normalize_channels<T>(const Var<T>&, const std::vector<T>&, const std::vector<T>&);  \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> l1_mean<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> psnr_loss<T>(const Var<T>&, const Var<T>&, T, T);

OBIFORMER_INSTANTIATE_OPS(float)
OBIFORMER_INSTANTIATE_OPS(double)

#undef OBIFORMER_INSTANTIATE_OPS

}  // namespace ops
}  // namespace obiformer
