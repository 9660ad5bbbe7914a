// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <doctest.h>

#include <sstream>

#include "gradcheck.hpp"
#include "resprune/autograd.hpp"

using namespace resprune;
using resprune::testing::grad_check;
using resprune::testing::random_tensor;

namespace {

Tensor<float> vec(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor<float>({n}, std::move(v));
}

}  // namespace

TEST_CASE("relu clamps negatives") {
  Tape<float> tape;
  auto y = ops::relu(tape.constant(vec({-1, 0, 2})));
  CHECK(y.value() == vec({0, 0, 2}));
}

TEST_CASE("adding zeros is exact") {
  Tape<float> tape;
  const Tensor<float> x = vec({1.5f, -2.25f, 3e-7f});
  auto y = ops::add(tape.constant(x), tape.constant(Tensor<float>(x.shape())));
  CHECK(y.value() == x);
}

TEST_CASE("conv2d output shape follows (H+2p-k)/s+1") {
  Tape<float> tape;
  auto x = tape.constant(Tensor<float>({1, 3, 8, 8}, 1.0f));
  auto w = tape.constant(Tensor<float>({4, 3, 3, 3}, 0.5f));
  auto y = ops::conv2d<float>(x, w, std::nullopt, Conv2dAttrs{1, 1, 1});
  CHECK(y.shape() == Shape{1, 4, 8, 8});
  auto y2 = ops::conv2d<float>(x, w, std::nullopt, Conv2dAttrs{2, 0, 1});
  CHECK(y2.shape() == Shape{1, 4, 3, 3});
}

TEST_CASE("shape mismatches name the op and dims") {
  Tape<float> tape;
  auto x = tape.constant(Tensor<float>({1, 3, 8, 8}));
  auto w = tape.constant(Tensor<float>({4, 2, 3, 3}));
  try {
    ops::conv2d<float>(x, w, std::nullopt, {});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("conv2d") != std::string::npos);
    CHECK(msg.find("3 channels") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(tape.constant(Tensor<float>({2})), tape.constant(Tensor<float>({3}))), ShapeError);
  CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor<float>({2, 3})), tape.constant(Tensor<float>({2, 3}))),
                  ShapeError);
}

TEST_CASE("backward of sum(w*w) is 2w") {
  Parameter<float> w(vec({1, 2}));
  Tape<float> tape;
  auto wv = tape.watch(w);
  tape.backward(ops::sum(ops::mul(wv, wv)));
  CHECK(w.grad == vec({2, 4}));
  CHECK(tape.size() == 0);
}

TEST_CASE("backward of mean(relu(w)) uses zero subgradient at negatives") {
  Parameter<float> w(vec({-1, 3}));
  Tape<float> tape;
  tape.backward(ops::mean(ops::relu(tape.watch(w))));
  CHECK(w.grad == vec({0, 0.5f}));
}

TEST_CASE("backward rejects non-scalar loss") {
  Parameter<float> w(vec({1, 2}));
  Tape<float> tape;
  auto y = ops::relu(tape.watch(w));
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("sgd_step arithmetic") {
  Parameter<float> w(Tensor<float>::scalar(1.0f));
  w.grad = Tensor<float>::scalar(2.0f);
  std::vector<Parameter<float>*> ps{&w};
  sgd_step<float>(ps, 0.1, 0.0, 0.0);
  CHECK(w.value.item() == doctest::Approx(0.8f));
  CHECK(w.grad.item() == 0.0f);

  w.grad = Tensor<float>::scalar(5.0f);
  sgd_step<float>(ps, 0.0, 0.0, 0.0);
  CHECK(w.value.item() == doctest::Approx(0.8f));
}

TEST_CASE("sgd_step momentum accumulates velocity") {
  Parameter<double> w(Tensor<double>::scalar(0.0));
  std::vector<Parameter<double>*> ps{&w};
  w.grad = Tensor<double>::scalar(1.0);
  sgd_step<double>(ps, 1.0, 0.9, 0.0);
  CHECK(w.value.item() == doctest::Approx(-1.0));
  w.grad = Tensor<double>::scalar(1.0);
  sgd_step<double>(ps, 1.0, 0.9, 0.0);
  CHECK(w.value.item() == doctest::Approx(-2.9));
}

TEST_CASE("sgd_step aborts on non-finite gradients") {
  Parameter<float> a(vec({1, 1}));
  Parameter<float> b(vec({1}));
  a.grad = vec({0.5f, 0.5f});
  b.grad = vec({std::numeric_limits<float>::quiet_NaN()});
  std::vector<Parameter<float>*> ps{&a, &b};
  CHECK_THROWS_AS(sgd_step<float>(ps, 0.1, 0.0, 0.0), NumericError);
  CHECK(a.value == vec({1, 1}));
  CHECK(b.value == vec({1}));
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(3);
  Tape<double> tape;
  auto x = tape.constant(random_tensor({5, 7}, rng));
  auto y = ops::softmax(ops::scale(x, 30.0)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y[r * 7 + c] >= 0.0);
      s += y[r * 7 + c];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("forward is bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(11);
    Parameter<double> x(random_tensor({2, 3, 6, 6}, rng));
    Parameter<double> w(random_tensor({4, 3, 3, 3}, rng));
    Tape<double> tape;
    auto y = ops::conv2d<double>(tape.watch(x), tape.watch(w), std::nullopt, Conv2dAttrs{1, 1, 1});
    auto loss = ops::sum(ops::relu(y));
    Tensor<double> out = y.value();
    tape.backward(loss);
    return std::make_tuple(out, x.grad, w.grad);
  };
  CHECK(run() == run());
}

TEST_CASE("forward_op dispatches every kind") {
  Tape<double> tape;
  std::mt19937_64 rng(5);
  auto x = tape.constant(random_tensor({2, 2, 4, 4}, rng));
  auto w = tape.constant(random_tensor({2, 1, 3, 3}, rng));
  OpAttrs attrs;
  attrs.conv = Conv2dAttrs{1, 1, 2};
  std::vector<Var<double>> in{x, w};
  CHECK(forward_op<double>(OpKind::kDepthwiseConv2d, in, attrs).shape() == Shape{2, 2, 4, 4});
  attrs.padding = 2;
  std::vector<Var<double>> one{x};
  CHECK(forward_op<double>(OpKind::kPad, one, attrs).shape() == Shape{2, 2, 8, 8});
  attrs.crop_top = 1;
  attrs.crop_left = 1;
  attrs.crop_height = 2;
  attrs.crop_width = 3;
  CHECK(forward_op<double>(OpKind::kCrop, one, attrs).shape() == Shape{2, 2, 2, 3});
  CHECK(forward_op<double>(OpKind::kSum, one, attrs).shape() == Shape{});
  CHECK_THROWS_AS(forward_op<double>(OpKind::kMatmul, one, attrs), InvalidArgument);
}

TEST_CASE("tensor wire format round-trips and rejects dtype mismatch") {
  std::mt19937_64 rng(1);
  Tensor<double> t = random_tensor({3, 1, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 2 + 3 * 4 + t.numel() * 8);
  CHECK(static_cast<unsigned char>(bytes[0]) == 1);
  CHECK(static_cast<unsigned char>(bytes[1]) == 3);
  CHECK(static_cast<unsigned char>(bytes[2]) == 3);  // first extent, little-endian
  std::stringstream in(bytes);
  CHECK(read_tensor<double>(in) == t);
  std::stringstream in2(bytes);
  CHECK_THROWS_AS(read_tensor<float>(in2), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor<double>(truncated), FormatError);
}

// --- finite-difference checks, one per op kind ---------------------------------

TEST_CASE("finite differences agree for every op kind") {
  using V = Var<double>;
  std::mt19937_64 rng(2024);
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    resprune::testing::LossFn fn;
  };
  // Weighted sums keep the loss sensitive to every output element.
  auto wsum = [](Tape<double>& t, V y) {
    Tensor<double> w(y.shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
    return ops::sum(ops::mul(y, t.constant(w)));
  };
  std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 5}}, [&](auto& t, auto& v) { return wsum(t, ops::matmul(v[0], v[1])); }},
      {"conv2d", {{2, 3, 5, 5}, {4, 3, 3, 3}, {4}},
       [&](auto& t, auto& v) { return wsum(t, ops::conv2d<double>(v[0], v[1], std::optional<V>(v[2]), {2, 1, 1})); }},
      {"conv2d_grouped", {{1, 4, 4, 4}, {6, 2, 3, 3}},
       [&](auto& t, auto& v) { return wsum(t, ops::conv2d<double>(v[0], v[1], std::nullopt, {1, 1, 2})); }},
      {"conv2d_pointwise", {{2, 3, 4, 4}, {5, 3, 1, 1}},
       [&](auto& t, auto& v) { return wsum(t, ops::conv2d<double>(v[0], v[1], std::nullopt, {1, 0, 1})); }},
      {"depthwise_conv2d", {{2, 3, 5, 5}, {3, 1, 3, 3}},
       [&](auto& t, auto& v) { return wsum(t, ops::depthwise_conv2d<double>(v[0], v[1], std::nullopt, 1, 1)); }},
      {"add", {{3, 4}, {3, 4}}, [&](auto& t, auto& v) { return wsum(t, ops::add(v[0], v[1])); }},
      {"mul", {{3, 4}, {3, 4}}, [&](auto& t, auto& v) { return wsum(t, ops::mul(v[0], v[1])); }},
      {"relu", {{4, 5}}, [&](auto& t, auto& v) { return wsum(t, ops::relu(v[0])); }},
      {"batchnorm_train", {{3, 2, 3, 3}, {2}, {2}},
       [&](auto& t, auto& v) {
         Tensor<double> rm({2}), rv({2}, 1.0);
         return wsum(t, ops::batchnorm(v[0], v[1], v[2], rm, rv, BatchNormAttrs{BnMode::kTraining, 1e-5}));
       }},
      {"batchnorm_eval", {{2, 3, 2, 2}, {3}, {3}},
       [&](auto& t, auto& v) {
         Tensor<double> rm({3}, std::vector<double>{0.1, -0.2, 0.3}), rv({3}, std::vector<double>{0.5, 1.5, 2.0});
         return wsum(t, ops::batchnorm(v[0], v[1], v[2], rm, rv, BatchNormAttrs{BnMode::kEval, 1e-5}));
       }},
      {"softmax", {{3, 6}}, [&](auto& t, auto& v) { return wsum(t, ops::softmax(v[0])); }},
      {"log_softmax", {{3, 6}}, [&](auto& t, auto& v) { return wsum(t, ops::log_softmax(v[0])); }},
      {"log", {{3, 4}},
       [&](auto& t, auto& v) {
         // log(x*x + 0.5) keeps the argument positive.
         Tensor<double> half(v[0].shape(), 0.5);
         return wsum(t, ops::log(ops::add(ops::mul(v[0], v[0]), t.constant(half))));
       }},
      {"sum", {{2, 3, 2}}, [&](auto& t, auto& v) { return ops::sum(ops::mul(v[0], v[0])); }},
      {"mean", {{2, 3, 2}}, [&](auto& t, auto& v) { return ops::mean(ops::mul(v[0], v[0])); }},
      {"pad", {{1, 2, 3, 3}}, [&](auto& t, auto& v) { return wsum(t, ops::pad(v[0], 2)); }},
      {"crop", {{1, 2, 5, 5}}, [&](auto& t, auto& v) { return wsum(t, ops::crop(v[0], 1, 2, 3, 2)); }},
      {"global_avg_pool", {{2, 3, 3, 3}}, [&](auto& t, auto& v) { return wsum(t, ops::global_avg_pool(v[0])); }},
      {"linear", {{3, 4}, {5, 4}, {5}},
       [&](auto& t, auto& v) { return wsum(t, ops::linear(v[0], v[1], std::optional<V>(v[2]))); }},
      {"sub_scale", {{3, 4}, {3, 4}}, [&](auto& t, auto& v) { return wsum(t, ops::scale(ops::sub(v[0], v[1]), 1.7)); }},
  };
  for (auto& c : cases) {
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<Tensor<double>> inputs;
      for (auto& s : c.shapes) inputs.push_back(random_tensor(s, rng, 0.05));
      const auto r = grad_check(c.fn, inputs);
      INFO(c.name);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}
