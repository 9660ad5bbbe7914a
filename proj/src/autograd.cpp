// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace resprune {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

template <typename T>
void same_tape(const char* op, Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw InvalidArgument(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  same_tape(op, a, b);
  if (a.shape() != b.shape()) {
    shape_fail(op, "operand shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " differ");
  }
}

template <typename T>
void require_rank(const char* op, Var<T> a, std::size_t rank, const char* what) {
  if (a.shape().size() != rank) {
    shape_fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_str(a.shape()));
  }
}

// Column layout: row (c*kh + i)*kw + j, column oh*Wo + ow.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            T* col) {
  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= sh) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          const T* src = plane + ih * sw;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(pad);
            dst[ow] = (iw >= 0 && iw < sw) ? src[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
                T* x) {
  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= sh) continue;
          const T* src = row + oh * wo;
          T* dst = plane + ih * sw;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (iw >= 0 && iw < sw) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, ho, wo, groups, cg, og, k, p, stride, pad;
  bool pointwise;
};

template <typename T>
ConvGeometry conv_geometry(const char* op, Var<T> x, Var<T> weight, const Conv2dAttrs& a) {
  require_rank(op, x, 4, "input");
  require_rank(op, weight, 4, "weight");
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (a.groups == 0) shape_fail(op, "groups must be positive");
  if (a.stride == 0) shape_fail(op, "stride must be positive");
  ConvGeometry g{};
  g.n = xs[0];
  g.c = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.o = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.groups = a.groups;
  g.stride = a.stride;
  g.pad = a.padding;
  if (g.c % g.groups != 0 || g.o % g.groups != 0) {
    shape_fail(op, "channels in=" + std::to_string(g.c) + " out=" + std::to_string(g.o) +
                       " not divisible by groups=" + std::to_string(g.groups));
  }
  g.cg = g.c / g.groups;
  g.og = g.o / g.groups;
  if (ws[1] != g.cg) {
    shape_fail(op, "input has " + std::to_string(g.c) + " channels but weight " + shape_str(ws) +
                       " expects in_c/groups=" + std::to_string(ws[1]) + " with groups=" +
                       std::to_string(g.groups));
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    shape_fail(op, "spatial extent " + std::to_string(g.h) + "x" + std::to_string(g.w) +
                       " smaller than kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  g.k = g.cg * g.kh * g.kw;
  g.p = g.ho * g.wo;
  g.pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
  return g;
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace

// --- Tape --------------------------------------------------------------------

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v) {
  if (v.tape != this || v.id >= nodes_.size()) throw InvalidArgument("tape: stale or foreign variable");
  return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw InvalidArgument("tape: stale or foreign variable");
  return nodes_[v.id];
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::watch(Parameter<T>& param) {
  Node n;
  n.value = param.value;
  if (param.trainable) {
    n.requires_grad = true;
    n.param = &param;
  }
  nodes_.push_back(std::move(n));
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape != this) throw InvalidArgument("tape: op input recorded on a different tape");
    if (node(in).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var<T> v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, const Tensor<T>& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw InternalError("tape: gradient shape " + shape_str(g.shape()) + " does not match value " +
                        shape_str(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  const Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  }
  if (nodes_.empty()) throw InvalidArgument("backward: empty tape");
  if (root.requires_grad) {
    Tensor<T>& g = grad_buffer(loss);
    g.fill(T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) {
        Parameter<T>& p = *n.param;
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
        auto dst = p.grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }
  clear();
}

template class Tape<float>;
template class Tape<double>;

// --- ops ---------------------------------------------------------------------

namespace ops {

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (!t.requires_grad(b)) return;
    Tensor<T> neg = g;
    for (auto& v : neg.data()) v = -v;
    t.accumulate(b, neg);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    auto gd = g.data();
    if (t.requires_grad(a)) {
      Tensor<T> ga = t.value(b);
      auto d = ga.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gd[i];
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb = t.value(a);
      auto d = gb.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gd[i];
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape->record(std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    for (auto& v : ga.data()) v *= factor;
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    auto x = t.value(a).data();
    auto d = ga.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(x[i] > T{0})) d[i] = T{0};
    }
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> log(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = std::log(v);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    auto x = t.value(a).data();
    auto d = ga.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s{0};
  for (auto v : a.value().data()) s += v;
  return a.tape->record(Tensor<T>::scalar(s), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, Tensor<T>(t.value(a).shape(), g.item()));
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().numel();
  if (n == 0) shape_fail("mean", "empty input");
  T s{0};
  for (auto v : a.value().data()) s += v;
  return a.tape->record(Tensor<T>::scalar(s / static_cast<T>(n)), {a},
                        [a, n](Tape<T>& t, const Tensor<T>& g) {
                          t.accumulate(a, Tensor<T>(t.value(a).shape(), g.item() / static_cast<T>(n)));
                        });
}

template <typename T>
Var<T> softmax(Var<T> a) {
  require_rank("softmax", a, 2, "input");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.ptr() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= z;
  }
  Tensor<T> y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y), rows, cols](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga(g.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.ptr() + r * cols;
      const T* gr = g.ptr() + r * cols;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
      T* dr = ga.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dr[c] = yr[c] * (gr[c] - dot);
    }
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> log_softmax(Var<T> a) {
  require_rank("log_softmax", a, 2, "input");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.ptr() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
  }
  Tensor<T> y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y), rows, cols](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga(g.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.ptr() + r * cols;
      const T* gr = g.ptr() + r * cols;
      T gs{0};
      for (std::size_t c = 0; c < cols; ++c) gs += gr[c];
      T* dr = ga.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dr[c] = gr[c] - std::exp(yr[c]) * gs;
    }
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape("matmul", a, b);
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    shape_fail("matmul", "inner dims differ: lhs " + shape_str(a.shape()) + " rhs " + shape_str(b.shape()));
  }
  Tensor<T> out({m, n});
  MapR<T>(out.ptr(), m, n).noalias() = CMapR<T>(a.value().ptr(), m, k) * CMapR<T>(b.value().ptr(), k, n);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    CMapR<T> G(g.ptr(), m, n);
    if (t.requires_grad(a)) {
      Tensor<T> ga({m, k});
      MapR<T>(ga.ptr(), m, k).noalias() = G * CMapR<T>(t.value(b).ptr(), k, n).transpose();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb({k, n});
      MapR<T>(gb.ptr(), k, n).noalias() = CMapR<T>(t.value(a).ptr(), m, k).transpose() * G;
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  same_tape("linear", x, weight);
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  const std::size_t n = x.shape()[0], in = x.shape()[1], out_f = weight.shape()[0];
  if (weight.shape()[1] != in) {
    shape_fail("linear", "input features " + std::to_string(in) + " but weight " + shape_str(weight.shape()));
  }
  if (bias) {
    same_tape("linear", x, *bias);
    if (bias->shape() != Shape{out_f}) shape_fail("linear", "bias shape " + shape_str(bias->shape()));
  }
  Tensor<T> out({n, out_f});
  MapR<T> Y(out.ptr(), n, out_f);
  Y.noalias() = CMapR<T>(x.value().ptr(), n, in) * CMapR<T>(weight.value().ptr(), out_f, in).transpose();
  if (bias) {
    const T* bv = bias->value().ptr();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < out_f; ++c) Y(r, c) += bv[c];
  }
  auto fn = [x, weight, bias, n, in, out_f](Tape<T>& t, const Tensor<T>& g) {
    CMapR<T> G(g.ptr(), n, out_f);
    if (t.requires_grad(x)) {
      Tensor<T> gx({n, in});
      MapR<T>(gx.ptr(), n, in).noalias() = G * CMapR<T>(t.value(weight).ptr(), out_f, in);
      t.accumulate(x, gx);
    }
    if (t.requires_grad(weight)) {
      Tensor<T> gw({out_f, in});
      MapR<T>(gw.ptr(), out_f, in).noalias() = G.transpose() * CMapR<T>(t.value(x).ptr(), n, in);
      t.accumulate(weight, gw);
    }
    if (bias && t.requires_grad(*bias)) {
      Tensor<T> gb({out_f});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < out_f; ++c) gb[c] += G(r, c);
      t.accumulate(*bias, gb);
    }
  };
  if (bias) return x.tape->record(std::move(out), {x, weight, *bias}, std::move(fn));
  return x.tape->record(std::move(out), {x, weight}, std::move(fn));
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, const Conv2dAttrs& attrs) {
  same_tape("conv2d", x, weight);
  const ConvGeometry g = conv_geometry("conv2d", x, weight, attrs);
  if (bias) {
    same_tape("conv2d", x, *bias);
    if (bias->shape() != Shape{g.o}) shape_fail("conv2d", "bias shape " + shape_str(bias->shape()) +
                                                               " for " + std::to_string(g.o) + " filters");
  }
  Tensor<T> out({g.n, g.o, g.ho, g.wo});
  const T* xv = x.value().ptr();
  const T* wv = weight.value().ptr();
  std::vector<T> col(g.pointwise ? 0 : g.k * g.p);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const T* xin = xv + (n * g.c + grp * g.cg) * g.h * g.w;
      const T* cptr = xin;
      if (!g.pointwise) {
        im2col(xin, g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo, col.data());
        cptr = col.data();
      }
      MapR<T>(out.ptr() + (n * g.o + grp * g.og) * g.p, g.og, g.p).noalias() =
          CMapR<T>(wv + grp * g.og * g.k, g.og, g.k) * CMapR<T>(cptr, g.k, g.p);
    }
    if (bias) {
      const T* bv = bias->value().ptr();
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        T* plane = out.ptr() + (n * g.o + oc) * g.p;
        for (std::size_t i = 0; i < g.p; ++i) plane[i] += bv[oc];
      }
    }
  }
  auto fn = [x, weight, bias, g](Tape<T>& t, const Tensor<T>& gout) {
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(weight);
    const T* xv = t.value(x).ptr();
    const T* wv = t.value(weight).ptr();
    Tensor<T> gx = need_x ? Tensor<T>(t.value(x).shape()) : Tensor<T>();
    Tensor<T> gw = need_w ? Tensor<T>(t.value(weight).shape()) : Tensor<T>();
    std::vector<T> col(g.pointwise || !need_w ? 0 : g.k * g.p);
    std::vector<T> dcol(need_x ? g.k * g.p : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        CMapR<T> G(gout.ptr() + (n * g.o + grp * g.og) * g.p, g.og, g.p);
        const T* xin = xv + (n * g.c + grp * g.cg) * g.h * g.w;
        if (need_w) {
          const T* cptr = xin;
          if (!g.pointwise) {
            im2col(xin, g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo, col.data());
            cptr = col.data();
          }
          MapR<T>(gw.ptr() + grp * g.og * g.k, g.og, g.k).noalias() +=
              G * CMapR<T>(cptr, g.k, g.p).transpose();
        }
        if (need_x) {
          T* xg = gx.ptr() + (n * g.c + grp * g.cg) * g.h * g.w;
          if (g.pointwise) {
            MapR<T>(xg, g.k, g.p).noalias() += CMapR<T>(wv + grp * g.og * g.k, g.og, g.k).transpose() * G;
          } else {
            MapR<T>(dcol.data(), g.k, g.p).noalias() =
                CMapR<T>(wv + grp * g.og * g.k, g.og, g.k).transpose() * G;
            col2im_add(dcol.data(), g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo, xg);
          }
        }
      }
    }
    if (need_x) t.accumulate(x, gx);
    if (need_w) t.accumulate(weight, gw);
    if (bias && t.requires_grad(*bias)) {
      Tensor<T> gb({g.o});
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t oc = 0; oc < g.o; ++oc) {
          const T* plane = gout.ptr() + (n * g.o + oc) * g.p;
          T s{0};
          for (std::size_t i = 0; i < g.p; ++i) s += plane[i];
          gb[oc] += s;
        }
      t.accumulate(*bias, gb);
    }
  };
  if (bias) return x.tape->record(std::move(out), {x, weight, *bias}, std::move(fn));
  return x.tape->record(std::move(out), {x, weight}, std::move(fn));
}

template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, std::size_t stride,
                        std::size_t padding) {
  require_rank("depthwise_conv2d", x, 4, "input");
  require_rank("depthwise_conv2d", weight, 4, "weight");
  const std::size_t c = x.shape()[1];
  if (weight.shape()[0] != c || weight.shape()[1] != 1) {
    shape_fail("depthwise_conv2d", "weight " + shape_str(weight.shape()) + " incompatible with " +
                                       std::to_string(c) + " input channels (expected [" +
                                       std::to_string(c) + "x1xkxk])");
  }
  return conv2d(x, weight, bias, Conv2dAttrs{stride, padding, c});
}

template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& running_mean,
                 const Tensor<T>& running_var, const BatchNormAttrs& attrs, Tensor<T>* batch_mean,
                 Tensor<T>* batch_var) {
  same_tape("batchnorm", x, gamma);
  same_tape("batchnorm", x, beta);
  const auto& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4) shape_fail("batchnorm", "input must be rank 2 or 4, got " + shape_str(xs));
  const std::size_t n = xs[0], c = xs[1];
  const std::size_t hw = xs.size() == 4 ? xs[2] * xs[3] : 1;
  for (const auto* s : {&gamma.shape(), &beta.shape()}) {
    if (*s != Shape{c}) {
      shape_fail("batchnorm", "input has " + std::to_string(c) + " channels but parameter shape is " +
                                  shape_str(*s));
    }
  }
  const bool training = attrs.mode == BnMode::kTraining;
  if (!training && (running_mean.shape() != Shape{c} || running_var.shape() != Shape{c})) {
    shape_fail("batchnorm", "running statistics do not match " + std::to_string(c) + " channels");
  }
  const std::size_t m = n * hw;
  if (training && m == 0) throw InvalidArgument("batchnorm: empty batch in training mode");

  std::vector<T> mu(c), invstd(c), var(c);
  const T* xv = x.value().ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      const double mean_v = s / static_cast<double>(m);
      double sq = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          const double d = p[k] - mean_v;
          sq += d * d;
        }
      }
      mu[ch] = static_cast<T>(mean_v);
      var[ch] = static_cast<T>(sq / static_cast<double>(m));
    } else {
      mu[ch] = running_mean[ch];
      var[ch] = running_var[ch];
    }
    invstd[ch] = T{1} / std::sqrt(var[ch] + static_cast<T>(attrs.eps));
  }
  if (batch_mean) *batch_mean = Tensor<T>({c}, mu);
  if (batch_var) *batch_var = Tensor<T>({c}, var);

  Tensor<T> out(xs);
  const T* gv = gamma.value().ptr();
  const T* bv = beta.value().ptr();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xv + (i * c + ch) * hw;
      T* o = out.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) o[k] = gv[ch] * ((p[k] - mu[ch]) * invstd[ch]) + bv[ch];
    }
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mu = std::move(mu), invstd = std::move(invstd), n, c, hw, m, training](
          Tape<T>& t, const Tensor<T>& g) {
        const T* xv = t.value(x).ptr();
        const T* gv = t.value(gamma).ptr();
        std::vector<T> dgamma(c, T{0}), dbeta(c, T{0});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T* p = xv + (i * c + ch) * hw;
            const T* gp = g.ptr() + (i * c + ch) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              dgamma[ch] += gp[k] * (p[k] - mu[ch]) * invstd[ch];
              dbeta[ch] += gp[k];
            }
          }
        if (t.requires_grad(x)) {
          Tensor<T> gx(t.value(x).shape());
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T* p = xv + (i * c + ch) * hw;
              const T* gp = g.ptr() + (i * c + ch) * hw;
              T* d = gx.ptr() + (i * c + ch) * hw;
              if (training) {
                const T inv_m = T{1} / static_cast<T>(m);
                for (std::size_t k = 0; k < hw; ++k) {
                  const T xhat = (p[k] - mu[ch]) * invstd[ch];
                  d[k] = gv[ch] * invstd[ch] * inv_m *
                         (static_cast<T>(m) * gp[k] - dbeta[ch] - xhat * dgamma[ch]);
                }
              } else {
                for (std::size_t k = 0; k < hw; ++k) d[k] = gp[k] * gv[ch] * invstd[ch];
              }
            }
          t.accumulate(x, gx);
        }
        if (t.requires_grad(gamma)) t.accumulate(gamma, Tensor<T>({c}, std::move(dgamma)));
        if (t.requires_grad(beta)) t.accumulate(beta, Tensor<T>({c}, std::move(dbeta)));
      });
}

template <typename T>
Var<T> pad(Var<T> x, std::size_t padding) {
  require_rank("pad", x, 4, "input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t ph = h + 2 * padding, pw = w + 2 * padding;
  Tensor<T> out({s[0], s[1], ph, pw});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(x.value().ptr() + (p * h + i) * w, w, out.ptr() + (p * ph + i + padding) * pw + padding);
  return x.tape->record(std::move(out), {x}, [x, planes, h, w, ph, pw, padding](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(t.value(x).shape());
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < h; ++i)
        std::copy_n(g.ptr() + (p * ph + i + padding) * pw + padding, w, gx.ptr() + (p * h + i) * w);
    t.accumulate(x, gx);
  });
}

template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  require_rank("crop", x, 4, "input");
  const auto& s = x.shape();
  if (top + height > s[2] || left + width > s[3] || height == 0 || width == 0) {
    shape_fail("crop", "window " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                           std::to_string(top) + "," + std::to_string(left) + ") outside " + shape_str(s));
  }
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor<T> out({s[0], s[1], height, width});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < height; ++i)
      std::copy_n(x.value().ptr() + (p * h + top + i) * w + left, width, out.ptr() + (p * height + i) * width);
  return x.tape->record(std::move(out), {x},
                        [x, planes, h, w, top, left, height, width](Tape<T>& t, const Tensor<T>& g) {
                          Tensor<T> gx(t.value(x).shape());
                          for (std::size_t p = 0; p < planes; ++p)
                            for (std::size_t i = 0; i < height; ++i)
                              std::copy_n(g.ptr() + (p * height + i) * width, width,
                                          gx.ptr() + (p * h + top + i) * w + left);
                          t.accumulate(x, gx);
                        });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  require_rank("global_avg_pool", x, 4, "input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * hw;
    T acc{0};
    for (std::size_t k = 0; k < hw; ++k) acc += src[k];
    out[p] = acc / static_cast<T>(hw);
  }
  return x.tape->record(std::move(out), {x}, [x, planes, hw](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(t.value(x).shape());
    for (std::size_t p = 0; p < planes; ++p) std::fill_n(gx.ptr() + p * hw, hw, g[p] / static_cast<T>(hw));
    t.accumulate(x, gx);
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g.reshaped(t.value(x).shape()));
  });
}

#define RESPRUNE_INSTANTIATE_OPS(T)                                                                \
  template Var<T> add(Var<T>, Var<T>);                                                             \
  template Var<T> sub(Var<T>, Var<T>);                                                             \
  template Var<T> mul(Var<T>, Var<T>);                                                             \
  template Var<T> scale(Var<T>, T);                                                                \
  template Var<T> relu(Var<T>);                                                                    \
  template Var<T> log(Var<T>);                                                                     \
  template Var<T> sum(Var<T>);                                                                     \
  template Var<T> mean(Var<T>);                                                                    \
  template Var<T> softmax(Var<T>);                                                                 \
  template Var<T> log_softmax(Var<T>);                                                             \
  template Var<T> matmul(Var<T>, Var<T>);                                                          \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                                   \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, const Conv2dAttrs&);               \
  template Var<T> depthwise_conv2d(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t); \
  template Var<T> batchnorm(Var<T>, Var<T>, Var<T>, const Tensor<T>&, const Tensor<T>&,            \
                            const BatchNormAttrs&, Tensor<T>*, Tensor<T>*);                        \
  template Var<T> pad(Var<T>, std::size_t);                                                        \
  template Var<T> crop(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);                \
  template Var<T> global_avg_pool(Var<T>);                                                         \
  template Var<T> reshape(Var<T>, Shape);

RESPRUNE_INSTANTIATE_OPS(float)
RESPRUNE_INSTANTIATE_OPS(double)

}  // namespace ops

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kDepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kRelu: return "relu";
    case OpKind::kBatchnorm: return "batchnorm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kPad: return "pad";
    case OpKind::kCrop: return "crop";
  }
  return "unknown";
}

template <typename T>
Var<T> forward_op(OpKind kind, std::span<const Var<T>> in, const OpAttrs& attrs) {
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (in.size() < lo || in.size() > hi) {
      throw InvalidArgument(std::string(op_name(kind)) + ": expected " + std::to_string(lo) +
                            (lo == hi ? "" : ".." + std::to_string(hi)) + " inputs, got " +
                            std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2, 2); return ops::matmul(in[0], in[1]);
    case OpKind::kConv2d:
      need(2, 3);
      return ops::conv2d(in[0], in[1], in.size() == 3 ? std::optional<Var<T>>(in[2]) : std::nullopt, attrs.conv);
    case OpKind::kDepthwiseConv2d:
      need(2, 3);
      return ops::depthwise_conv2d(in[0], in[1], in.size() == 3 ? std::optional<Var<T>>(in[2]) : std::nullopt,
                                   attrs.conv.stride, attrs.conv.padding);
    case OpKind::kAdd: need(2, 2); return ops::add(in[0], in[1]);
    case OpKind::kMul: need(2, 2); return ops::mul(in[0], in[1]);
    case OpKind::kRelu: need(1, 1); return ops::relu(in[0]);
    case OpKind::kBatchnorm:
      need(5, 5);
      return ops::batchnorm(in[0], in[1], in[2], in[3].value(), in[4].value(), attrs.bn);
    case OpKind::kSoftmax: need(1, 1); return ops::softmax(in[0]);
    case OpKind::kLog: need(1, 1); return ops::log(in[0]);
    case OpKind::kSum: need(1, 1); return ops::sum(in[0]);
    case OpKind::kMean: need(1, 1); return ops::mean(in[0]);
    case OpKind::kPad: need(1, 1); return ops::pad(in[0], attrs.padding);
    case OpKind::kCrop:
      need(1, 1);
      return ops::crop(in[0], attrs.crop_top, attrs.crop_left, attrs.crop_height, attrs.crop_width);
  }
  throw InvalidArgument("forward_op: unknown op kind");
}

template Var<float> forward_op<float>(OpKind, std::span<const Var<float>>, const OpAttrs&);
template Var<double> forward_op<double>(OpKind, std::span<const Var<double>>, const OpAttrs&);

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr, double momentum, double weight_decay) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw InvalidArgument("sgd_step: learning rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidArgument("sgd_step: momentum must lie in [0,1)");
  if (!(weight_decay >= 0)) throw InvalidArgument("sgd_step: weight decay must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    if (!all_finite<T>(p.grad.data())) {
      for (auto* q : params) q->zero_grad();
      throw NumericError("sgd_step: non-finite gradient in parameter #" + std::to_string(i) + " " +
                         shape_str(p.value.shape()) + "; step aborted");
    }
  }
  const T lr_t = static_cast<T>(lr), mom = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
  for (auto* pp : params) {
    Parameter<T>& p = *pp;
    if (p.trainable) {
      if (p.velocity.shape() != p.value.shape()) p.velocity = Tensor<T>(p.value.shape());
      auto v = p.value.data();
      auto g = p.grad.data();
      auto vel = p.velocity.data();
      for (std::size_t k = 0; k < v.size(); ++k) {
        const T d = g[k] + wd * v[k];
        vel[k] = mom * vel[k] + d;
        v[k] -= lr_t * vel[k];
      }
    }
    p.zero_grad();
  }
}

template void sgd_step<float>(std::span<Parameter<float>* const>, double, double, double);
template void sgd_step<double>(std::span<Parameter<double>* const>, double, double, double);

}  // namespace resprune
