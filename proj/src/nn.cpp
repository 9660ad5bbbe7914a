// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/nn.hpp"

#include <cmath>
#include <random>

#include "resprune/digest.hpp"

namespace resprune {

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : gamma(Tensor<float>({channels}, 1.0f)),
      beta(Tensor<float>({channels}, 0.0f)),
      running_mean({channels}, 0.0f),
      running_var({channels}, 1.0f) {}

std::string unit_name(const UnitRef& ref) {
  if (ref.is_stem()) return "stem";
  std::string s = "stage" + std::to_string(ref.stage + 1);
  if (ref.is_downsample()) return s + ".downsample";
  return s + ".block" + std::to_string(ref.block + 1) + ".conv" + std::to_string(ref.layer + 1);
}

ConvUnit& NetworkGraph::unit(const UnitRef& ref) {
  return const_cast<ConvUnit&>(static_cast<const NetworkGraph&>(*this).unit(ref));
}

const ConvUnit& NetworkGraph::unit(const UnitRef& ref) const {
  if (ref.is_stem()) return stem;
  if (ref.stage < 0 || static_cast<std::size_t>(ref.stage) >= stages.size()) {
    throw InvalidArgument("network: no stage " + std::to_string(ref.stage));
  }
  const ResidualStage& st = stages[ref.stage];
  if (ref.is_downsample()) {
    if (!st.downsample) throw InvalidArgument("network: " + unit_name(ref) + " does not exist");
    return *st.downsample;
  }
  if (ref.block < 0 || static_cast<std::size_t>(ref.block) >= st.blocks.size() || ref.layer < 0 ||
      static_cast<std::size_t>(ref.layer) >= st.blocks[ref.block].layers.size()) {
    throw InvalidArgument("network: " + unit_name(ref) + " does not exist");
  }
  return st.blocks[ref.block].layers[ref.layer];
}

std::vector<UnitRef> NetworkGraph::units() const {
  std::vector<UnitRef> out{UnitRef{UnitRef::kStem, 0, 0}};
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].downsample) out.push_back({static_cast<int>(s), 0, UnitRef::kDownsample});
    for (std::size_t b = 0; b < stages[s].blocks.size(); ++b)
      for (std::size_t l = 0; l < stages[s].blocks[b].layers.size(); ++l)
        out.push_back({static_cast<int>(s), static_cast<int>(b), static_cast<int>(l)});
  }
  return out;
}

std::vector<Parameter<float>*> NetworkGraph::parameters() {
  std::vector<Parameter<float>*> out;
  for (const auto& ref : units()) {
    ConvUnit& u = unit(ref);
    out.push_back(&u.conv.weight);
    if (u.conv.bias) out.push_back(&*u.conv.bias);
    if (u.bn) {
      out.push_back(&u.bn->gamma);
      out.push_back(&u.bn->beta);
    }
  }
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

namespace {

void check_unit(const ConvUnit& u, std::size_t expected_in) {
  const ConvLayer& c = u.conv;
  if (c.weight.value.rank() != 4) throw InternalError(u.name + ": weight must be rank 4");
  if (c.groups == 0 || c.in_channels() % c.groups != 0 || c.out_channels() % c.groups != 0) {
    throw InternalError(u.name + ": channels not divisible by groups");
  }
  if (c.in_channels() != expected_in) {
    throw InternalError(u.name + ": expects " + std::to_string(c.in_channels()) + " input channels, producer gives " +
                        std::to_string(expected_in));
  }
  if (c.bias && c.bias->value.shape() != Shape{c.out_channels()}) throw InternalError(u.name + ": bias width");
  if (u.bn) {
    const std::size_t w = u.bn->width();
    if (w != c.out_channels() || u.bn->beta.value.numel() != w || u.bn->running_mean.numel() != w ||
        u.bn->running_var.numel() != w) {
      throw InternalError(u.name + ": batch-norm width does not match " + std::to_string(c.out_channels()) +
                          " conv outputs");
    }
    for (float v : u.bn->running_var.data())
      if (v < 0) throw InternalError(u.name + ": negative running variance");
  }
}

}  // namespace

void NetworkGraph::validate() const {
  check_unit(stem, in_channels);
  std::size_t prev = stem.out_channels();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const ResidualStage& st = stages[s];
    const std::string sname = "stage" + std::to_string(s + 1);
    if (st.blocks.empty()) throw InternalError(sname + ": no blocks");
    if (st.downsample) {
      check_unit(*st.downsample, prev);
      if (st.downsample->out_channels() != st.width) {
        throw InternalError(sname + ".downsample: width " + std::to_string(st.downsample->out_channels()) +
                            " differs from stage width " + std::to_string(st.width));
      }
    } else if (prev != st.width) {
      throw InternalError(sname + ": identity shortcut from width " + std::to_string(prev) + " to " +
                          std::to_string(st.width) + " needs a downsample");
    }
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const auto& layers = st.blocks[b].layers;
      if (layers.empty()) throw InternalError(sname + ": empty block");
      std::size_t in = b == 0 ? prev : st.width;
      for (const auto& u : layers) {
        check_unit(u, in);
        in = u.out_channels();
      }
      if (in != st.width) {
        throw InternalError(layers.back().name + ": block output width " + std::to_string(in) +
                            " differs from stage width " + std::to_string(st.width));
      }
    }
    prev = st.width;
  }
  if (classifier.weight.value.rank() != 2 || classifier.weight.value.dim(1) != prev ||
      classifier.weight.value.dim(0) != class_count || classifier.bias.value.shape() != Shape{class_count}) {
    throw InternalError("classifier: expects [" + std::to_string(class_count) + "x" + std::to_string(prev) +
                        "], has " + shape_str(classifier.weight.value.shape()));
  }
}

std::string NetworkGraph::architecture_digest() const {
  Fnv1a h;
  for (const auto& ref : units()) {
    const ConvUnit& u = unit(ref);
    h.update(u.name);
    for (auto d : u.conv.weight.value.shape()) h.update_value(static_cast<std::uint64_t>(d));
    h.update_value(static_cast<std::uint64_t>(u.conv.stride));
    h.update_value(static_cast<std::uint64_t>(u.conv.padding));
    h.update_value(static_cast<std::uint64_t>(u.conv.groups));
    h.update_value(static_cast<std::uint8_t>(u.bn.has_value()));
  }
  for (auto d : classifier.weight.value.shape()) h.update_value(static_cast<std::uint64_t>(d));
  return h.hex();
}

// --- construction --------------------------------------------------------------

namespace {

ConvUnit make_unit(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t groups, std::mt19937_64& rng) {
  ConvUnit u;
  u.name = std::move(name);
  u.conv.stride = stride;
  u.conv.padding = k / 2;
  u.conv.groups = groups;
  Tensor<float> w({out, in / groups, k, k});
  const double fan_out = static_cast<double>(out * k * k) / static_cast<double>(groups);
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_out)));
  for (auto& v : w.data()) v = dist(rng);
  u.conv.weight = Parameter<float>(std::move(w));
  u.bn = BatchNormLayer(out);
  return u;
}

}  // namespace

NetworkGraph build_tiny_resnet(const TinyResNetConfig& cfg) {
  if (cfg.stage_widths.empty()) throw InvalidArgument("build_tiny_resnet: at least one stage required");
  if (cfg.stage_widths.size() != cfg.blocks_per_stage.size()) {
    throw InvalidArgument("build_tiny_resnet: stage_widths and blocks_per_stage differ in length");
  }
  if (cfg.class_count == 0) throw InvalidArgument("build_tiny_resnet: class_count must be positive");
  if (cfg.in_channels == 0 || cfg.stem_width == 0) {
    throw InvalidArgument("build_tiny_resnet: in_channels and stem_width must be positive");
  }
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    if (cfg.stage_widths[s] < 4) {
      throw InvalidArgument("build_tiny_resnet: stage " + std::to_string(s + 1) + " width " +
                            std::to_string(cfg.stage_widths[s]) + " < 4 cannot form a bottleneck");
    }
    if (cfg.blocks_per_stage[s] == 0) {
      throw InvalidArgument("build_tiny_resnet: stage " + std::to_string(s + 1) + " has no blocks");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  NetworkGraph net;
  net.in_channels = cfg.in_channels;
  net.class_count = cfg.class_count;
  net.stem = make_unit("stem", cfg.in_channels, cfg.stem_width, 3, 1, 1, rng);

  std::size_t prev = cfg.stem_width;
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const std::size_t width = cfg.stage_widths[s];
    const std::size_t mid = width / 4;
    const std::size_t stride = s == 0 ? 1 : 2;
    ResidualStage st;
    st.width = width;
    st.prunable_output = s + 1 < cfg.stage_widths.size();
    const int si = static_cast<int>(s);
    st.downsample = make_unit(unit_name({si, 0, UnitRef::kDownsample}), prev, width, 1, stride, 1, rng);
    for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      const int bi = static_cast<int>(b);
      const std::size_t in = b == 0 ? prev : width;
      ResidualBlock block;
      block.layers.push_back(make_unit(unit_name({si, bi, 0}), in, mid, 1, 1, 1, rng));
      block.layers.push_back(
          make_unit(unit_name({si, bi, 1}), mid, mid, 3, b == 0 ? stride : 1, cfg.depthwise ? mid : 1, rng));
      block.layers.push_back(make_unit(unit_name({si, bi, 2}), mid, width, 1, 1, 1, rng));
      st.blocks.push_back(std::move(block));
    }
    net.stages.push_back(std::move(st));
    prev = width;
  }

  Tensor<float> w({cfg.class_count, prev});
  const float bound = 1.0f / std::sqrt(static_cast<float>(prev));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : w.data()) v = dist(rng);
  net.classifier.weight = Parameter<float>(std::move(w));
  net.classifier.bias = Parameter<float>(Tensor<float>({cfg.class_count}));
  net.validate();
  return net;
}

// --- forward -----------------------------------------------------------------------

namespace {

Var<float> param_var(Tape<float>& tape, Parameter<float>& p, bool track) {
  return track ? tape.watch(p) : tape.constant(p.value);
}

// Running variance uses the unbiased batch estimate.
void update_running_stats(BatchNormLayer& bn, const Tensor<float>& mean, const Tensor<float>& var, double m) {
  const float unbias = m > 1 ? static_cast<float>(m / (m - 1)) : 1.0f;
  for (std::size_t c = 0; c < bn.width(); ++c) {
    bn.running_mean[c] = (1 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean[c];
    bn.running_var[c] = (1 - bn.momentum) * bn.running_var[c] + bn.momentum * var[c] * unbias;
  }
}

template <typename F>
Var<float> named(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(name + ": " + e.what());
  }
}

}  // namespace

Var<float> unit_forward(Tape<float>& tape, ConvUnit& u, Var<float> x, const ForwardOptions& opt) {
  return named(u.name, [&] {
    Var<float> w = param_var(tape, u.conv.weight, opt.track);
    std::optional<Var<float>> b;
    if (u.conv.bias) b = param_var(tape, *u.conv.bias, opt.track);
    Var<float> y = ops::conv2d(x, w, b, Conv2dAttrs{u.conv.stride, u.conv.padding, u.conv.groups});
    if (!u.bn) return y;
    BatchNormLayer& bn = *u.bn;
    Var<float> g = param_var(tape, bn.gamma, opt.track);
    Var<float> be = param_var(tape, bn.beta, opt.track);
    if (opt.mode == Mode::kEval) {
      return ops::batchnorm(y, g, be, bn.running_mean, bn.running_var, BatchNormAttrs{BnMode::kEval, bn.eps});
    }
    Tensor<float> mean, var;
    Var<float> out = ops::batchnorm(y, g, be, bn.running_mean, bn.running_var,
                                    BatchNormAttrs{BnMode::kTraining, bn.eps}, &mean, &var);
    const auto& s = y.shape();
    update_running_stats(bn, mean, var, static_cast<double>(s[0] * s[2] * s[3]));
    return out;
  });
}

Var<float> stem_forward(Tape<float>& tape, NetworkGraph& net, Var<float> x, const ForwardOptions& opt) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != net.in_channels) {
    throw ShapeError("stem: expects [N x " + std::to_string(net.in_channels) + " x H x W] input, got " +
                     shape_str(s));
  }
  return ops::relu(unit_forward(tape, net.stem, x, opt));
}

Var<float> block_forward(Tape<float>& tape, NetworkGraph& net, std::size_t stage, std::size_t block,
                         Var<float> x, const ForwardOptions& opt) {
  ResidualStage& st = net.stages.at(stage);
  ResidualBlock& blk = st.blocks.at(block);
  Var<float> h = x;
  for (std::size_t i = 0; i < blk.layers.size(); ++i) {
    h = unit_forward(tape, blk.layers[i], h, opt);
    if (i + 1 < blk.layers.size()) h = ops::relu(h);
  }
  Var<float> shortcut = x;
  if (block == 0 && st.downsample) shortcut = unit_forward(tape, *st.downsample, x, opt);
  const std::string name = "stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1) + ".add";
  return named(name, [&] { return ops::relu(ops::add(h, shortcut)); });
}

Var<float> head_forward(Tape<float>& tape, NetworkGraph& net, Var<float> x, const ForwardOptions& opt) {
  return named("classifier", [&] {
    Var<float> pooled = ops::global_avg_pool(x);
    return ops::linear(pooled, param_var(tape, net.classifier.weight, opt.track),
                       std::optional<Var<float>>(param_var(tape, net.classifier.bias, opt.track)));
  });
}

Var<float> forward_from(Tape<float>& tape, NetworkGraph& net, std::size_t stage, std::size_t block,
                        Var<float> x, const ForwardOptions& opt) {
  for (std::size_t s = stage; s < net.stages.size(); ++s) {
    for (std::size_t b = (s == stage ? block : 0); b < net.stages[s].blocks.size(); ++b) {
      x = block_forward(tape, net, s, b, x, opt);
    }
  }
  return head_forward(tape, net, x, opt);
}

Var<float> forward(Tape<float>& tape, NetworkGraph& net, Var<float> batch, const ForwardOptions& opt) {
  return forward_from(tape, net, 0, 0, stem_forward(tape, net, batch, opt), opt);
}

Tensor<float> forward_logits(NetworkGraph& net, const Tensor<float>& batch, Mode mode) {
  Tape<float> tape;
  return forward(tape, net, tape.constant(batch), ForwardOptions{mode, false}).value();
}

Tensor<float> predict_logits(NetworkGraph& net, const Tensor<float>& batch, std::size_t chunk) {
  if (batch.rank() != 4) throw ShapeError("predict_logits: batch must be rank 4, got " + shape_str(batch.shape()));
  const std::size_t n = batch.dim(0);
  const std::size_t per = batch.numel() / std::max<std::size_t>(n, 1);
  Tensor<float> out({n, net.class_count});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    Shape s = batch.shape();
    s[0] = len;
    Tensor<float> part(s, std::vector<float>(batch.ptr() + start * per, batch.ptr() + (start + len) * per));
    Tensor<float> logits = forward_logits(net, part, Mode::kEval);
    std::copy(logits.data().begin(), logits.data().end(), out.ptr() + start * net.class_count);
  }
  return out;
}

Tensor<float> bn_forward(const Tensor<float>& x, BatchNormLayer& bn, Mode mode) {
  Tape<float> tape;
  Var<float> xv = tape.constant(x);
  Var<float> g = tape.constant(bn.gamma.value);
  Var<float> b = tape.constant(bn.beta.value);
  if (mode == Mode::kEval) {
    return ops::batchnorm(xv, g, b, bn.running_mean, bn.running_var, BatchNormAttrs{BnMode::kEval, bn.eps}).value();
  }
  Tensor<float> mean, var;
  Tensor<float> out = ops::batchnorm(xv, g, b, bn.running_mean, bn.running_var,
                                     BatchNormAttrs{BnMode::kTraining, bn.eps}, &mean, &var)
                          .value();
  const auto& s = x.shape();
  double m = static_cast<double>(s[0]);
  if (s.size() == 4) m *= static_cast<double>(s[2] * s[3]);
  update_running_stats(bn, mean, var, m);
  return out;
}

}  // namespace resprune
