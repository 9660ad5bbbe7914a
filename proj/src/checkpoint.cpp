// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "resprune/nn.hpp"

namespace resprune {

namespace {

constexpr char kMagic[8] = {'R', 'P', 'C', 'K', 'P', 'T', '0', '1'};

using nlohmann::json;

json unit_manifest(const UnitRef& ref, const ConvUnit& u) {
  const ConvLayer& c = u.conv;
  json j = {{"name", u.name},
            {"ref", {ref.stage, ref.block, ref.layer}},
            {"weight_shape", c.weight.value.shape()},
            {"stride", c.stride},
            {"padding", c.padding},
            {"groups", c.groups},
            {"bias", c.bias.has_value()},
            {"bn", u.bn.has_value()}};
  if (u.bn) {
    j["eps"] = u.bn->eps;
    j["bn_momentum"] = u.bn->momentum;
  }
  return j;
}

std::vector<std::string> unit_tensor_names(const ConvUnit& u) {
  std::vector<std::string> names{u.name + ".weight"};
  if (u.conv.bias) names.push_back(u.name + ".bias");
  if (u.bn) {
    for (const char* n : {".bn.gamma", ".bn.beta", ".bn.running_mean", ".bn.running_var"}) names.push_back(u.name + n);
  }
  return names;
}

ConvUnit unit_from_manifest(const json& j) {
  ConvUnit u;
  u.name = j.at("name").get<std::string>();
  const Shape ws = j.at("weight_shape").get<Shape>();
  if (ws.size() != 4) throw FormatError("checkpoint: " + u.name + " weight shape must have rank 4");
  u.conv.stride = j.at("stride").get<std::size_t>();
  u.conv.padding = j.at("padding").get<std::size_t>();
  u.conv.groups = j.at("groups").get<std::size_t>();
  u.conv.weight = Parameter<float>(Tensor<float>(ws));
  if (j.at("bias").get<bool>()) u.conv.bias = Parameter<float>(Tensor<float>({ws[0]}));
  if (j.at("bn").get<bool>()) {
    u.bn = BatchNormLayer(ws[0]);
    u.bn->eps = j.at("eps").get<float>();
    u.bn->momentum = j.at("bn_momentum").get<float>();
  }
  return u;
}

void read_into(std::istream& in, Tensor<float>& dst, const std::string& name) {
  Tensor<float> t = read_tensor<float>(in);
  if (t.shape() != dst.shape()) {
    throw FormatError("checkpoint: tensor " + name + " has shape " + shape_str(t.shape()) + ", manifest says " +
                      shape_str(dst.shape()));
  }
  dst = std::move(t);
}

void read_unit(std::istream& in, ConvUnit& u) {
  read_into(in, u.conv.weight.value, u.name + ".weight");
  u.conv.weight.zero_grad();
  if (u.conv.bias) {
    read_into(in, u.conv.bias->value, u.name + ".bias");
    u.conv.bias->zero_grad();
  }
  if (u.bn) {
    read_into(in, u.bn->gamma.value, u.name + ".bn.gamma");
    read_into(in, u.bn->beta.value, u.name + ".bn.beta");
    read_into(in, u.bn->running_mean, u.name + ".bn.running_mean");
    read_into(in, u.bn->running_var, u.name + ".bn.running_var");
    u.bn->gamma.zero_grad();
    u.bn->beta.zero_grad();
  }
}

void write_unit(std::ostream& out, const ConvUnit& u) {
  write_tensor(out, u.conv.weight.value);
  if (u.conv.bias) write_tensor(out, u.conv.bias->value);
  if (u.bn) {
    write_tensor(out, u.bn->gamma.value);
    write_tensor(out, u.bn->beta.value);
    write_tensor(out, u.bn->running_mean);
    write_tensor(out, u.bn->running_var);
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const NetworkGraph& net) {
  net.validate();
  json manifest;
  manifest["format"] = "resprune-checkpoint";
  manifest["version"] = 1;
  manifest["in_channels"] = net.in_channels;
  manifest["class_count"] = net.class_count;
  json units = json::array();
  std::vector<std::string> tensors;
  for (const auto& ref : net.units()) {
    const ConvUnit& u = net.unit(ref);
    units.push_back(unit_manifest(ref, u));
    for (auto& n : unit_tensor_names(u)) tensors.push_back(std::move(n));
  }
  json stages = json::array();
  for (const auto& st : net.stages) {
    json blocks = json::array();
    for (const auto& b : st.blocks) blocks.push_back(b.layers.size());
    stages.push_back({{"width", st.width},
                      {"blocks", blocks},
                      {"downsample", st.downsample.has_value()},
                      {"prunable_output", st.prunable_output}});
  }
  tensors.push_back("classifier.weight");
  tensors.push_back("classifier.bias");
  manifest["units"] = units;
  manifest["stages"] = stages;
  manifest["classifier"] = {{"in", net.classifier.weight.value.dim(1)}, {"out", net.classifier.weight.value.dim(0)}};
  manifest["tensors"] = tensors;

  const std::string text = manifest.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& ref : net.units()) write_unit(out, net.unit(ref));
  write_tensor(out, net.classifier.weight.value);
  write_tensor(out, net.classifier.bias.value);
  if (!out) throw IoError("checkpoint: write failed");
}

NetworkGraph read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic at byte 0");
  }
  std::uint32_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) throw FormatError("checkpoint: truncated manifest length");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw FormatError("checkpoint: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }
  NetworkGraph net;
  try {
    if (manifest.at("format") != "resprune-checkpoint") throw FormatError("checkpoint: unknown format tag");
    net.in_channels = manifest.at("in_channels").get<std::size_t>();
    net.class_count = manifest.at("class_count").get<std::size_t>();
    const json& stages = manifest.at("stages");
    for (const auto& sj : stages) {
      ResidualStage st;
      st.width = sj.at("width").get<std::size_t>();
      st.prunable_output = sj.at("prunable_output").get<bool>();
      for (const auto& nl : sj.at("blocks")) st.blocks.emplace_back().layers.resize(nl.get<std::size_t>());
      if (sj.at("downsample").get<bool>()) st.downsample.emplace();
      net.stages.push_back(std::move(st));
    }
    for (const auto& uj : manifest.at("units")) {
      const auto r = uj.at("ref");
      const UnitRef ref{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()};
      net.unit(ref) = unit_from_manifest(uj);
    }
    const std::size_t cin = manifest.at("classifier").at("in").get<std::size_t>();
    const std::size_t cout = manifest.at("classifier").at("out").get<std::size_t>();
    net.classifier.weight = Parameter<float>(Tensor<float>({cout, cin}));
    net.classifier.bias = Parameter<float>(Tensor<float>({cout}));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: manifest references ") + e.what());
  }
  for (const auto& ref : net.units()) read_unit(in, net.unit(ref));
  read_into(in, net.classifier.weight.value, "classifier.weight");
  read_into(in, net.classifier.bias.value, "classifier.bias");
  net.classifier.weight.zero_grad();
  net.classifier.bias.zero_grad();
  try {
    net.validate();
  } catch (const InternalError& e) {
    throw FormatError(std::string("checkpoint: inconsistent structure: ") + e.what());
  }
  return net;
}

void save_checkpoint(const NetworkGraph& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, net);
}

NetworkGraph load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace resprune
