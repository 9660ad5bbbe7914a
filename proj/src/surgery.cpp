// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <algorithm>
#include <set>

#include "resprune/prune.hpp"

namespace resprune {

namespace {

UnitRef last_unit(const NetworkGraph& net, std::size_t stage, std::size_t block) {
  return UnitRef{static_cast<int>(stage), static_cast<int>(block),
                 static_cast<int>(net.stages[stage].blocks[block].layers.size()) - 1};
}

// Unit whose output channels are the stage's output channels.
UnitRef stage_output_unit(const NetworkGraph& net, std::size_t stage) { return last_unit(net, stage, 0); }

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw ShapeError("conv output would be empty");
  return (in + 2 * pad - k) / stride + 1;
}

struct Spatial {
  std::size_t h = 0, w = 0;
};

// Input spatial size of every unit for a given network input size.
std::map<UnitRef, Spatial> unit_inputs(const NetworkGraph& net, std::size_t h, std::size_t w) {
  std::map<UnitRef, Spatial> in;
  auto out_of = [](const ConvLayer& c, Spatial s) {
    return Spatial{conv_out(s.h, c.kernel_h(), c.stride, c.padding), conv_out(s.w, c.kernel_w(), c.stride, c.padding)};
  };
  const UnitRef stem{UnitRef::kStem, 0, 0};
  in[stem] = {h, w};
  Spatial cur = out_of(net.stem.conv, {h, w});
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const ResidualStage& st = net.stages[s];
    const int si = static_cast<int>(s);
    if (st.downsample) in[UnitRef{si, 0, UnitRef::kDownsample}] = cur;
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      Spatial x = cur;
      for (std::size_t l = 0; l < st.blocks[b].layers.size(); ++l) {
        in[UnitRef{si, static_cast<int>(b), static_cast<int>(l)}] = x;
        x = out_of(st.blocks[b].layers[l].conv, x);
      }
      cur = x;
    }
  }
  return in;
}

std::size_t lookup(const std::map<UnitRef, std::size_t>& m, const UnitRef& r) {
  auto it = m.find(r);
  return it == m.end() ? 0 : it->second;
}

}  // namespace

std::optional<UnitRef> input_producer(const NetworkGraph& net, const UnitRef& ref) {
  if (ref.is_stem()) return std::nullopt;
  const auto s = static_cast<std::size_t>(ref.stage);
  const bool stage_entry = ref.is_downsample() || (ref.block == 0 && ref.layer == 0);
  if (stage_entry) {
    if (s == 0) return UnitRef{UnitRef::kStem, 0, 0};
    return stage_output_unit(net, s - 1);
  }
  if (ref.layer == 0) return stage_output_unit(net, s);
  return UnitRef{ref.stage, ref.block, ref.layer - 1};
}

std::map<UnitRef, std::size_t> unit_widths(const NetworkGraph& net) {
  std::map<UnitRef, std::size_t> w;
  for (const auto& ref : net.units()) w[ref] = net.unit(ref).out_channels();
  return w;
}

std::uint64_t conv_macs(const ConvLayer& conv, std::size_t in_height, std::size_t in_width) {
  const std::uint64_t oh = conv_out(in_height, conv.kernel_h(), conv.stride, conv.padding);
  const std::uint64_t ow = conv_out(in_width, conv.kernel_w(), conv.stride, conv.padding);
  return oh * ow * conv.out_channels() * (conv.in_channels() / conv.groups) * conv.kernel_h() * conv.kernel_w();
}

std::uint64_t unit_params(const ConvUnit& unit) {
  std::uint64_t p = unit.conv.weight.value.numel();
  if (unit.conv.bias) p += unit.conv.bias->value.numel();
  if (unit.bn) p += 2 * unit.bn->width();
  return p;
}

Cost count_macs_params(const NetworkGraph& net, std::size_t in_height, std::size_t in_width) {
  return count_macs_params(net, in_height, in_width, {});
}

Cost count_macs_params(const NetworkGraph& net, std::size_t in_height, std::size_t in_width,
                       const std::map<UnitRef, std::size_t>& removed) {
  const auto inputs = unit_inputs(net, in_height, in_width);
  Cost cost;
  for (const auto& ref : net.units()) {
    const ConvUnit& u = net.unit(ref);
    const ConvLayer& c = u.conv;
    const std::size_t out = c.out_channels() - lookup(removed, ref);
    const auto producer = input_producer(net, ref);
    const std::size_t in = c.in_channels() - (producer ? lookup(removed, *producer) : 0);
    std::size_t per_group_in = 0;
    if (c.depthwise()) {
      per_group_in = 1;
    } else {
      if (c.groups > 1 && in != c.in_channels()) {
        throw InvalidArgument(u.name + ": channel removal on a grouped, non-depthwise conv is not supported");
      }
      per_group_in = in / c.groups;
    }
    const Spatial s = inputs.at(ref);
    const std::uint64_t oh = conv_out(s.h, c.kernel_h(), c.stride, c.padding);
    const std::uint64_t ow = conv_out(s.w, c.kernel_w(), c.stride, c.padding);
    const std::uint64_t k = c.kernel_h() * c.kernel_w();
    cost.macs += oh * ow * out * per_group_in * k;
    cost.params += out * per_group_in * k;
    if (c.bias) cost.params += out;
    if (u.bn) cost.params += 2 * out;
  }
  const std::size_t cls_in =
      net.classifier.weight.value.dim(1) - lookup(removed, stage_output_unit(net, net.stages.size() - 1));
  const std::uint64_t cls_out = net.classifier.weight.value.dim(0);
  cost.macs += cls_in * cls_out;
  cost.params += cls_in * cls_out + cls_out;
  return cost;
}

// --- surgery -------------------------------------------------------------------

namespace {

std::map<UnitRef, std::set<std::size_t>> removed_channels(const NetworkGraph& net,
                                                          const std::vector<PruneGroup>& groups,
                                                          const std::vector<std::size_t>& removed_ids) {
  std::map<UnitRef, std::set<std::size_t>> removed;
  std::set<std::size_t> seen;
  for (std::size_t id : removed_ids) {
    if (id >= groups.size()) throw InvalidArgument("surgery: group id " + std::to_string(id) + " out of range");
    if (!seen.insert(id).second) throw InvalidArgument("surgery: group " + std::to_string(id) + " listed twice");
    const PruneGroup& g = groups[id];
    if (g.role == SlotRole::kBlockOutput && !net.stages.at(static_cast<std::size_t>(g.stage)).prunable_output) {
      throw InvalidArgument("surgery: group " + std::to_string(id) + " touches the outputs of a frozen stage");
    }
    for (const auto& slot : g.slots) {
      if (slot.channel >= net.unit(slot.unit).out_channels()) {
        throw InvalidArgument("surgery: group " + std::to_string(id) + " channel out of range");
      }
      removed[slot.unit].insert(slot.channel);
    }
  }
  return removed;
}

std::vector<std::size_t> kept(std::size_t width, const std::set<std::size_t>* removed) {
  std::vector<std::size_t> k;
  for (std::size_t c = 0; c < width; ++c) {
    if (!removed || !removed->count(c)) k.push_back(c);
  }
  return k;
}

Tensor<float> take(const Tensor<float>& t, const std::vector<std::size_t>& rows) {
  const std::size_t per = t.dim(0) ? t.numel() / t.dim(0) : 0;
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(t.ptr() + rows[i] * per, per, out.ptr() + i * per);
  return out;
}

// Keeps columns `cols` of axis 1 for a [rows, cols, ...] tensor.
Tensor<float> take_axis1(const Tensor<float>& t, const std::vector<std::size_t>& cols) {
  const std::size_t rows = t.dim(0), width = t.dim(1);
  const std::size_t inner = rows && width ? t.numel() / (rows * width) : 0;
  Shape shape = t.shape();
  shape[1] = cols.size();
  Tensor<float> out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::copy_n(t.ptr() + (r * width + cols[j]) * inner, inner, out.ptr() + (r * cols.size() + j) * inner);
    }
  }
  return out;
}

void shrink_parameter(Parameter<float>& p, Tensor<float> value) {
  const bool trainable = p.trainable;
  p = Parameter<float>(std::move(value));
  p.trainable = trainable;
}

}  // namespace

NetworkGraph apply_surgery(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                           const std::vector<std::size_t>& removed_ids) {
  const auto removed = removed_channels(net, groups, removed_ids);
  auto removed_of = [&](const UnitRef& r) -> const std::set<std::size_t>* {
    auto it = removed.find(r);
    return it == removed.end() ? nullptr : &it->second;
  };
  NetworkGraph out = net;
  for (const auto& ref : net.units()) {
    const ConvUnit& src = net.unit(ref);
    ConvUnit& dst = out.unit(ref);
    const auto keep_out = kept(src.out_channels(), removed_of(ref));
    const auto producer = input_producer(net, ref);
    const auto* removed_in = producer ? removed_of(*producer) : nullptr;
    const auto keep_in = kept(src.conv.in_channels(), removed_in);

    Tensor<float> w = take(src.conv.weight.value, keep_out);
    if (src.conv.depthwise()) {
      if (keep_in != keep_out) {
        throw InternalError("surgery: " + src.name + " is depthwise but its kept channels differ from its input's");
      }
      dst.conv.groups = keep_out.size();
    } else if (src.conv.groups > 1) {
      if (keep_in.size() != src.conv.in_channels() || keep_out.size() != src.out_channels()) {
        throw InvalidArgument("surgery: " + src.name + " is a grouped conv; channel removal is not supported");
      }
    } else {
      w = take_axis1(w, keep_in);
    }
    shrink_parameter(dst.conv.weight, std::move(w));
    if (src.conv.bias) shrink_parameter(*dst.conv.bias, take(src.conv.bias->value, keep_out));
    if (src.bn) {
      shrink_parameter(dst.bn->gamma, take(src.bn->gamma.value, keep_out));
      shrink_parameter(dst.bn->beta, take(src.bn->beta.value, keep_out));
      dst.bn->running_mean = take(src.bn->running_mean, keep_out);
      dst.bn->running_var = take(src.bn->running_var, keep_out);
    }
  }
  for (std::size_t s = 0; s < out.stages.size(); ++s) out.stages[s].width = out.unit(stage_output_unit(out, s)).out_channels();
  const auto last_keep = kept(net.classifier.weight.value.dim(1), removed_of(stage_output_unit(net, net.stages.size() - 1)));
  shrink_parameter(out.classifier.weight, take_axis1(net.classifier.weight.value, last_keep));
  try {
    out.validate();
  } catch (const InternalError& e) {
    throw InternalError(std::string("surgery left an inconsistent graph: ") + e.what());
  }
  return out;
}

NetworkGraph apply_surgery(const NetworkGraph& net, const PruningPlan& plan) {
  if (!plan.architecture.empty() && plan.architecture != net.architecture_digest()) {
    throw InvalidArgument("surgery: plan was made for architecture " + plan.architecture + ", network is " +
                          net.architecture_digest());
  }
  const auto groups = discover_groups(net);
  if (plan.group_count != groups.size()) {
    throw InvalidArgument("surgery: plan lists " + std::to_string(plan.group_count) + " groups, network has " +
                          std::to_string(groups.size()));
  }
  return apply_surgery(net, groups, plan.removed_ids());
}

NetworkGraph apply_zeroing(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                           const std::vector<std::size_t>& removed_ids) {
  removed_channels(net, groups, removed_ids);
  NetworkGraph out = net;
  for (std::size_t id : removed_ids) zero_group(out, groups[id]);
  return out;
}

}  // namespace resprune
