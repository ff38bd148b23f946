// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "suitein/common/error.hpp"

namespace suitein::diffnet {

namespace {

using detail::make_result;
using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::atomic<double> g_linear_fault{0.0};

// Gradient buffer of parent i, or nullptr when that parent is not tracked.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op, const char* layout) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected " + layout + ", got shape " +
                     to_string(x.shape()));
  }
}

template <class F, class D>
Tensor unary(const Tensor& x, std::string_view op, F f, D derivative) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, op, [derivative](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      (*g)[i] += self.grad[i] * derivative(xv[i], self.value[i]);
    }
  });
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

namespace testing {
void set_linear_gradient_fault(double factor) { g_linear_fault.store(factor); }
}  // namespace testing

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, "div", [](Node& self) {
    const auto& bv = self.parents[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] / bv[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] -= self.grad[i] * self.value[i] / bv[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ----------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result(Shape{1}, {total}, {x}, "sum", [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const Shape& in = x.shape();
  if (axis >= in.size()) throw ShapeError("sum_axis: axis out of range for " + to_string(in));
  const AxisSplit s = split_at(in, axis);
  Shape out_shape = in;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      const double* src = xv.data() + (o * s.n + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "sum_axis", [s](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.n; ++k) {
        double* dst = g->data() + (o * s.n + k) * s.inner;
        const double* src = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

// -------------------------------------------------------------------- shapes

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw ShapeError("permute: axes do not match rank of " + to_string(in));
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: invalid axis permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[axes[i]];
    step[i] = in_stride[axes[i]];
  }
  // Source offset of every destination element, in destination order.
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    source[k] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        offset += step[d];
        break;
      }
      offset -= step[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[source[k]];
  return make_result(std::move(out_shape), std::move(out), {x}, "permute",
                     [source = std::move(source)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t k = 0; k < source.size(); ++k) {
                         (*g)[source[k]] += self.grad[k];
                       }
                     });
}

Tensor expand(const Tensor& x, std::size_t axis, std::size_t n) {
  const Shape& in = x.shape();
  if (axis > in.size()) throw ShapeError("expand: axis out of range for " + to_string(in));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  const std::size_t inner = x.numel() / outer;
  Shape out_shape = in;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  auto xv = x.values();
  std::vector<double> out(outer * n * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      std::copy_n(xv.data() + o * inner, inner, out.data() + (o * n + k) * inner);
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "expand",
                     [outer, n, inner](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t k = 0; k < n; ++k) {
                           const double* src = self.grad.data() + (o * n + k) * inner;
                           double* dst = g->data() + o * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no tensors given");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " + to_string(s));
      }
    }
    lengths.push_back(s[axis]);
    total += s[axis];
  }
  const AxisSplit s = split_at(first, axis);
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(s.outer * total * s.inner);
  std::size_t base = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    const std::size_t block = lengths[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + (o * total + base) * s.inner);
    }
    base += lengths[p];
  }
  return make_result(std::move(out_shape), std::move(out), parts, "concat",
                     [s, total, lengths](Node& self) {
                       std::size_t base = 0;
                       for (std::size_t p = 0; p < lengths.size(); ++p) {
                         const std::size_t block = lengths[p] * s.inner;
                         if (auto* g = grad_of(self, p)) {
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             const double* src = self.grad.data() + (o * total + base) * s.inner;
                             double* dst = g->data() + o * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         base += lengths[p];
                       }
                     });
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack: axis out of range for " + to_string(s));
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = x.shape();
  if (axis >= in.size() || start + length > in[axis] || length == 0) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") invalid for axis " +
                     std::to_string(axis) + " of " + to_string(in));
  }
  const AxisSplit s = split_at(in, axis);
  Shape out_shape = in;
  out_shape[axis] = length;
  auto xv = x.values();
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.n + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "slice",
                     [s, start, length](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       const std::size_t block = length * s.inner;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const double* src = self.grad.data() + o * block;
                         double* dst = g->data() + (o * s.n + start) * s.inner;
                         for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor t = slice(x, axis, index, 1);
  Shape s = t.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  if (s.empty()) s.push_back(1);
  return reshape(t, std::move(s));
}

// ------------------------------------------------------------ linear algebra

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear", "weight [out, in]");
  const std::size_t in = weight.dim(1);
  const std::size_t out_dim = weight.dim(0);
  if (x.rank() == 0 || x.shape().back() != in) {
    throw ShapeError("linear: trailing dimension of input " + to_string(x.shape()) +
                     " must equal in_features " + std::to_string(in));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw ShapeError("linear: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(out_dim) + " outputs");
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  {
    ConstMap X(x.values().data(), rows, in);
    ConstMap W(weight.values().data(), out_dim, in);
    MutMap Y(out.data(), rows, out_dim);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::RowVectorXd> b(bias.values().data(), out_dim);
      Y.rowwise() += b;
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out_shape), std::move(out), inputs, "linear",
                     [rows, in, out_dim](Node& self) {
                       ConstMap dY(self.grad.data(), rows, out_dim);
                       if (auto* g = grad_of(self, 0)) {
                         ConstMap W(self.parents[1]->value.data(), out_dim, in);
                         MutMap dX(g->data(), rows, in);
                         dX.noalias() += dY * W;
                       }
                       if (auto* g = grad_of(self, 1)) {
                         ConstMap X(self.parents[0]->value.data(), rows, in);
                         MutMap dW(g->data(), out_dim, in);
                         const double fault = g_linear_fault.load();
                         if (fault != 0.0) {
                           dW.noalias() += (1.0 + fault) * (dY.transpose() * X);
                         } else {
                           dW.noalias() += dY.transpose() * X;
                         }
                       }
                       if (self.parents.size() > 2) {
                         if (auto* g = grad_of(self, 2)) {
                           Eigen::Map<Eigen::RowVectorXd> db(g->data(), out_dim);
                           db += dY.colwise().sum();
                         }
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm", "[B, n, k]");
  require_rank(b, 3, "bmm", "[B, k, m]");
  const std::size_t batch = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ShapeError("bmm: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  std::vector<double> out(batch * n * m);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMap A(a.values().data() + i * n * k, n, k);
    ConstMap B(b.values().data() + i * k * m, k, m);
    MutMap C(out.data() + i * n * m, n, m);
    C.noalias() = A * B;
  }
  return make_result(Shape{batch, n, m}, std::move(out), {a, b}, "bmm",
                     [batch, n, k, m](Node& self) {
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < batch; ++i) {
                         ConstMap dC(self.grad.data() + i * n * m, n, m);
                         if (ga) {
                           ConstMap B(self.parents[1]->value.data() + i * k * m, k, m);
                           MutMap dA(ga->data() + i * n * k, n, k);
                           dA.noalias() += dC * B.transpose();
                         }
                         if (gb) {
                           ConstMap A(self.parents[0]->value.data() + i * n * k, n, k);
                           MutMap dB(gb->data() + i * k * m, k, m);
                           dB.noalias() += A.transpose() * dC;
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * width;
    double* dst = out.data() + r * width;
    const double peak = *std::max_element(src, src + width);
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) total += dst[i] = std::exp(src[i] - peak);
    for (std::size_t i = 0; i < width; ++i) dst[i] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, "softmax", [rows, width](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * width;
      const double* dy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t i = 0; i < width; ++i) dot += dy[i] * y[i];
      for (std::size_t i = 0; i < width; ++i) (*g)[r * width + i] += y[i] * (dy[i] - dot);
    }
  });
}

// ----------------------------------------------------------- sequence layers

Tensor conv1d(const Tensor& x, const Tensor& weight) {
  require_rank(x, 3, "conv1d", "input [batch, channels, time]");
  require_rank(weight, 3, "conv1d", "weight [out, in, kernel]");
  const std::size_t batch = x.dim(0), cin = x.dim(1), time = x.dim(2);
  const std::size_t cout = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv1d: input channels " + std::to_string(cin) +
                     " do not match weight in_channels " + std::to_string(weight.dim(1)));
  }
  if (time < kernel) {
    throw ShapeError("conv1d: time dimension " + std::to_string(time) +
                     " is shorter than kernel length " + std::to_string(kernel));
  }
  const std::size_t tout = time - kernel + 1;
  const std::size_t patch = cin * kernel;
  auto xv = x.values();
  std::vector<double> out(batch * cout * tout);
  RowMat cols(patch, tout);
  ConstMap W(weight.values().data(), cout, patch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = xv.data() + b * cin * time;
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t k = 0; k < kernel; ++k) {
        std::copy_n(xb + c * time + k, tout, cols.row(c * kernel + k).data());
      }
    }
    MutMap Y(out.data() + b * cout * tout, cout, tout);
    Y.noalias() = W * cols;
  }
  return make_result(
      Shape{batch, cout, tout}, std::move(out), {x, weight}, "conv1d",
      [batch, cin, time, cout, kernel, tout, patch](Node& self) {
        auto* gx = grad_of(self, 0);
        auto* gw = grad_of(self, 1);
        const auto& xv = self.parents[0]->value;
        ConstMap W(self.parents[1]->value.data(), cout, patch);
        RowMat cols(patch, tout);
        RowMat dcols(patch, tout);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMap dY(self.grad.data() + b * cout * tout, cout, tout);
          if (gw) {
            const double* xb = xv.data() + b * cin * time;
            for (std::size_t c = 0; c < cin; ++c) {
              for (std::size_t k = 0; k < kernel; ++k) {
                std::copy_n(xb + c * time + k, tout, cols.row(c * kernel + k).data());
              }
            }
            MutMap dW(gw->data(), cout, patch);
            dW.noalias() += dY * cols.transpose();
          }
          if (gx) {
            dcols.noalias() = W.transpose() * dY;
            double* gxb = gx->data() + b * cin * time;
            for (std::size_t c = 0; c < cin; ++c) {
              for (std::size_t k = 0; k < kernel; ++k) {
                const double* src = dcols.row(c * kernel + k).data();
                double* dst = gxb + c * time + k;
                for (std::size_t t = 0; t < tout; ++t) dst[t] += src[t];
              }
            }
          }
        }
      });
}

Tensor max_pool1d(const Tensor& x, std::size_t width) {
  require_rank(x, 3, "max_pool1d", "[batch, channels, time]");
  if (width == 0) throw ShapeError("max_pool1d: zero width");
  const std::size_t rows = x.dim(0) * x.dim(1), time = x.dim(2);
  const std::size_t tout = time / width;
  if (tout == 0) {
    throw ShapeError("max_pool1d: time dimension " + std::to_string(time) +
                     " is shorter than pool width " + std::to_string(width));
  }
  auto xv = x.values();
  std::vector<double> out(rows * tout);
  std::vector<std::size_t> argmax(rows * tout);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < tout; ++t) {
      std::size_t best = r * time + t * width;
      for (std::size_t k = 1; k < width; ++k) {
        const std::size_t i = r * time + t * width + k;
        if (xv[i] > xv[best]) best = i;
      }
      argmax[r * tout + t] = best;
      out[r * tout + t] = xv[best];
    }
  }
  return make_result(Shape{x.dim(0), x.dim(1), tout}, std::move(out), {x}, "max_pool1d",
                     [argmax = std::move(argmax)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < argmax.size(); ++i) {
                         (*g)[argmax[i]] += self.grad[i];
                       }
                     });
}

Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t segments) {
  require_rank(x, 3, "adaptive_avg_pool1d", "[batch, channels, time]");
  const std::size_t rows = x.dim(0) * x.dim(1), time = x.dim(2);
  if (segments == 0 || segments > time) {
    throw ShapeError("adaptive_avg_pool1d: cannot pool time " + std::to_string(time) + " into " +
                     std::to_string(segments) + " segments");
  }
  std::vector<std::pair<std::size_t, std::size_t>> bins(segments);
  for (std::size_t s = 0; s < segments; ++s) {
    bins[s] = {s * time / segments, ((s + 1) * time + segments - 1) / segments};
  }
  auto xv = x.values();
  std::vector<double> out(rows * segments);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < segments; ++s) {
      double acc = 0.0;
      for (std::size_t t = bins[s].first; t < bins[s].second; ++t) acc += xv[r * time + t];
      out[r * segments + s] = acc / static_cast<double>(bins[s].second - bins[s].first);
    }
  }
  return make_result(Shape{x.dim(0), x.dim(1), segments}, std::move(out), {x},
                     "adaptive_avg_pool1d", [rows, time, segments, bins](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t s = 0; s < segments; ++s) {
                           const double share =
                               self.grad[r * segments + s] /
                               static_cast<double>(bins[s].second - bins[s].first);
                           for (std::size_t t = bins[s].first; t < bins[s].second; ++t) {
                             (*g)[r * time + t] += share;
                           }
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError("batch_norm: expected [batch, channels(, time)], got " +
                     to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t time = x.rank() == 3 ? x.dim(2) : 1;
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
    if (p->numel() != channels) {
      throw ShapeError("batch_norm: per-channel tensor of size " + std::to_string(p->numel()) +
                       " does not match " + std::to_string(channels) + " channels");
    }
  }
  const double count = static_cast<double>(batch * time);
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> mu(channels), inv_std(channels);
  if (training) {
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* row = xv.data() + (b * channels + c) * time;
        for (std::size_t t = 0; t < time; ++t) s += row[t];
      }
      const double m = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* row = xv.data() + (b * channels + c) * time;
        for (std::size_t t = 0; t < time; ++t) ss += (row[t] - m) * (row[t] - m);
      }
      const double var = ss / count;
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
      rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * m;
      rv[c] = (1.0 - state.momentum) * rv[c] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.values();
    auto rv = state.running_var.values();
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    }
  }
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * time;
      for (std::size_t t = 0; t < time; ++t) {
        xhat[base + t] = (xv[base + t] - mu[c]) * inv_std[c];
        out[base + t] = gv[c] * xhat[base + t] + bv[c];
      }
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta}, "batch_norm",
      [batch, channels, time, count, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->value;
        auto* gx = grad_of(self, 0);
        auto* gg = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * time;
            for (std::size_t t = 0; t < time; ++t) {
              sum_dy += self.grad[base + t];
              sum_dy_xhat += self.grad[base + t] * xhat[base + t];
            }
          }
          if (gg) (*gg)[c] += sum_dy_xhat;
          if (gb) (*gb)[c] += sum_dy;
          if (!gx) continue;
          const double k = gv[c] * inv_std[c];
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * time;
            for (std::size_t t = 0; t < time; ++t) {
              const double dy = self.grad[base + t];
              if (training) {
                (*gx)[base + t] +=
                    k * (dy - sum_dy / count - xhat[base + t] * sum_dy_xhat / count);
              } else {
                (*gx)[base + t] += k * dy;
              }
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto xv = x.values();
  std::vector<double> mask(xv.size()), out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = uniform(rng) < keep ? 1.0 / keep : 0.0;
    out[i] = xv[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, "dropout",
                     [mask = std::move(mask)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < mask.size(); ++i) {
                         (*g)[i] += self.grad[i] * mask[i];
                       }
                     });
}

// ------------------------------------------------------------------- losses

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "cosine_similarity", "[batch, features]");
  require_same_shape(a, b, "cosine_similarity");
  const std::size_t rows = a.dim(0), width = a.dim(1);
  auto av = a.values();
  auto bv = b.values();
  // norms below kCosineEps are clamped and then treated as constants
  std::vector<double> out(rows), norm_a(rows), norm_b(rows);
  std::vector<char> free_a(rows), free_b(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      const double x = av[r * width + i], y = bv[r * width + i];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    free_a[r] = na > kCosineEps;
    free_b[r] = nb > kCosineEps;
    norm_a[r] = std::max(na, kCosineEps);
    norm_b[r] = std::max(nb, kCosineEps);
    out[r] = dot / (norm_a[r] * norm_b[r]);
  }
  return make_result(Shape{rows}, std::move(out), {a, b}, "cosine_similarity",
                     [rows, width, norm_a = std::move(norm_a), norm_b = std::move(norm_b),
                      free_a = std::move(free_a), free_b = std::move(free_b)](Node& self) {
                       const auto& av = self.parents[0]->value;
                       const auto& bv = self.parents[1]->value;
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double g = self.grad[r], c = self.value[r];
                         const double nab = norm_a[r] * norm_b[r];
                         const double ka = free_a[r] ? c / (norm_a[r] * norm_a[r]) : 0.0;
                         const double kb = free_b[r] ? c / (norm_b[r] * norm_b[r]) : 0.0;
                         for (std::size_t i = 0; i < width; ++i) {
                           const double x = av[r * width + i], y = bv[r * width + i];
                           if (ga) (*ga)[r * width + i] += g * (y / nab - ka * x);
                           if (gb) (*gb)[r * width + i] += g * (x / nab - kb * y);
                         }
                       }
                     });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse_loss");
  auto pv = prediction.values();
  auto tv = target.values();
  const double n = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  return make_result(Shape{1}, {total / n}, {prediction, target}, "mse_loss", [n](Node& self) {
    const auto& pv = self.parents[0]->value;
    const auto& tv = self.parents[1]->value;
    const double g = self.grad[0] * 2.0 / n;
    if (auto* gp = grad_of(self, 0)) {
      for (std::size_t i = 0; i < pv.size(); ++i) (*gp)[i] += g * (pv[i] - tv[i]);
    }
    if (auto* gt = grad_of(self, 1)) {
      for (std::size_t i = 0; i < pv.size(); ++i) (*gt)[i] -= g * (pv[i] - tv[i]);
    }
  });
}

}  // namespace suitein::diffnet
