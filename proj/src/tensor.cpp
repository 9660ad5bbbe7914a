// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/tensor.hpp"

#include <bit>
#include <istream>
#include <ostream>

namespace resprune {

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  if (t.rank() > 255) throw InvalidArgument("write_tensor: rank above 255");
  const std::uint8_t header[2] = {static_cast<std::uint8_t>(Tensor<T>::dtype()),
                                  static_cast<std::uint8_t>(t.rank())};
  out.write(reinterpret_cast<const char*>(header), 2);
  for (auto d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw InvalidArgument("write_tensor: extent exceeds u32");
    const auto e = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&e), sizeof e);
  }
  out.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!out) throw IoError("write_tensor: stream write failed");
}

DType peek_dtype(std::istream& in) {
  const int c = in.peek();
  if (c == std::char_traits<char>::eof()) throw FormatError("tensor: unexpected end of stream");
  if (c > 1) throw FormatError("tensor: unknown dtype tag " + std::to_string(c));
  return static_cast<DType>(c);
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  std::uint8_t header[2];
  if (!in.read(reinterpret_cast<char*>(header), 2)) {
    throw FormatError("tensor: truncated header");
  }
  if (header[0] != static_cast<std::uint8_t>(Tensor<T>::dtype())) {
    throw FormatError("tensor: dtype tag " + std::to_string(header[0]) + " does not match " +
                      std::to_string(static_cast<int>(Tensor<T>::dtype())));
  }
  Shape shape(header[1]);
  for (auto& d : shape) {
    std::uint32_t e = 0;
    if (!in.read(reinterpret_cast<char*>(&e), sizeof e)) throw FormatError("tensor: truncated extents");
    d = e;
  }
  Tensor<T> t(shape);
  if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(T)))) {
    throw FormatError("tensor: truncated payload for shape " + shape_str(shape));
  }
  return t;
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);

}  // namespace resprune
