// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "resprune/tensor.hpp"

namespace resprune {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Reverse-mode tape. One tape covers one forward pass; backward() consumes
/// it. Gradients of watched Parameters are accumulated into Parameter::grad.
/// A tape is not thread-safe.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Records a parameter. Non-trainable parameters enter as constants.
  Var<T> watch(Parameter<T>& param);

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every watched parameter,
  /// then clears the tape. Rejects non-scalar losses.
  void backward(Var<T> loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  void accumulate(Var<T> v, const Tensor<T>& g);
  /// Lazily zero-initialised gradient buffer of `v`.
  Tensor<T>& grad_buffer(Var<T> v);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Node& node(Var<T> v);
  const Node& node(Var<T> v) const;

  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(*this);
}

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

enum class BnMode { kTraining, kEval };

/// Training mode normalises by batch statistics and writes them to the
/// optional out-params; eval mode uses the supplied running statistics.
struct BatchNormAttrs {
  BnMode mode = BnMode::kEval;
  double eps = 1e-5;
};

namespace ops {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> log(Var<T> a);
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
/// Row-wise softmax over the last axis of a rank-2 tensor.
template <typename T> Var<T> softmax(Var<T> a);
template <typename T> Var<T> log_softmax(Var<T> a);
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// x[N,in] * W[out,in]^T + b[out].
template <typename T> Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias);
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, const Conv2dAttrs& attrs);
template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, std::size_t stride,
                        std::size_t padding);
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& running_mean,
                 const Tensor<T>& running_var, const BatchNormAttrs& attrs,
                 Tensor<T>* batch_mean = nullptr, Tensor<T>* batch_var = nullptr);
/// Zero padding of the two trailing (spatial) axes.
template <typename T> Var<T> pad(Var<T> x, std::size_t padding);
template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
template <typename T> Var<T> global_avg_pool(Var<T> x);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);

}  // namespace ops

enum class OpKind {
  kMatmul,
  kConv2d,
  kDepthwiseConv2d,
  kAdd,
  kMul,
  kRelu,
  kBatchnorm,
  kSoftmax,
  kLog,
  kSum,
  kMean,
  kPad,
  kCrop,
};

const char* op_name(OpKind kind);

struct OpAttrs {
  Conv2dAttrs conv;
  BatchNormAttrs bn;
  std::size_t padding = 0;
  std::size_t crop_top = 0, crop_left = 0, crop_height = 0, crop_width = 0;
};

/// Generic dispatcher. Input order per kind: conv (x, w[, b]); batchnorm
/// (x, gamma, beta, running_mean, running_var), the last two read by value.
template <typename T>
Var<T> forward_op(OpKind kind, std::span<const Var<T>> inputs, const OpAttrs& attrs = {});

/// Momentum SGD with L2 weight decay. Zeroes every gradient afterwards. A
/// non-finite gradient aborts the whole step before any value moves.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr, double momentum,
              double weight_decay);

}  // namespace resprune
