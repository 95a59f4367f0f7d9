// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "avsal/errors.hpp"

namespace avsal {
namespace {

constexpr char kMagic[4] = {'A', 'V', 'S', 'T'};
constexpr uint32_t kVersion = 1;

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  const uint32_t rank = static_cast<uint32_t>(tensor.rank());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (int64_t d : tensor.shape()) out.write(reinterpret_cast<const char*>(&d), sizeof d);
  std::vector<float> values(static_cast<size_t>(tensor.numel()));
  for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(tensor.values()[i]);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw ValidationError("short write to " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read tensor file " + path.string());
  char magic[4];
  uint32_t version = 0, rank = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != kVersion || rank > 8) {
    throw ValidationError(path.string() + " is not a tensor file");
  }
  Shape shape(rank);
  for (auto& d : shape) {
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in || d < 0) throw ValidationError(path.string() + " has a corrupt shape header");
  }
  std::vector<float> values(static_cast<size_t>(shape_numel(shape)));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw ValidationError(path.string() + " is truncated");
  Tensor out(shape);
  for (size_t i = 0; i < values.size(); ++i) out.values()[i] = values[i];
  return out;
}

}  // namespace avsal
