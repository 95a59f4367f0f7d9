// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace avsal {
namespace {

constexpr char kMagic[8] = {'A', 'V', 'S', 'A', 'L', 'C', 'K', 'P'};

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::string get_string(std::istream& in) {
  const uint32_t n = get_u32(in);
  if (!in || n > (1u << 20)) throw CheckpointError("corrupt checkpoint string");
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_string(out, ckpt.format);
  put_string(out, ckpt.signature);
  put_string(out, ckpt.stage);
  put_u32(out, static_cast<uint32_t>(ckpt.entries.size()));
  for (const CheckpointEntry& e : ckpt.entries) {
    put_string(out, e.name);
    put_u32(out, static_cast<uint32_t>(e.value.rank()));
    for (int64_t d : e.value.shape()) out.write(reinterpret_cast<const char*>(&d), sizeof d);
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(e.value.numel())));
  }
  if (!out) throw ConfigError("short write to checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint not found: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  Checkpoint ckpt;
  ckpt.format = get_string(in);
  if (ckpt.format != kCheckpointFormat) {
    throw CheckpointError("checkpoint " + path.string() + " has format '" + ckpt.format + "', expected '" +
                          kCheckpointFormat + "'");
  }
  ckpt.signature = get_string(in);
  ckpt.stage = get_string(in);
  const uint32_t count = get_u32(in);
  for (uint32_t i = 0; i < count && in; ++i) {
    CheckpointEntry e;
    e.name = get_string(in);
    const uint32_t rank = get_u32(in);
    if (!in || rank > 8) throw CheckpointError("corrupt checkpoint entry in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), sizeof d);
    e.value = Tensor(shape);
    in.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(e.value.numel())));
    ckpt.entries.push_back(std::move(e));
  }
  if (!in) throw CheckpointError("checkpoint " + path.string() + " is truncated");
  return ckpt;
}

Checkpoint make_checkpoint(const SaliencyModel& model, const std::string& stage,
                           const std::function<bool(const std::string&)>& keep) {
  Checkpoint ckpt;
  ckpt.signature = model.config().signature();
  ckpt.stage = stage;
  for (const auto& [name, var] : model.parameters().entries()) {
    if (keep && !keep(name)) continue;
    ckpt.entries.push_back({name, var.value()});
  }
  return ckpt;
}

int64_t load_into(SaliencyModel& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes) {
  const std::string expected = std::string(kCheckpointFormat) + " " + model.config().signature();
  if (ckpt.version() != expected) {
    throw CheckpointError("checkpoint version '" + ckpt.version() + "' does not match model version '" + expected +
                          "'");
  }
  int64_t loaded = 0;
  for (const CheckpointEntry& e : ckpt.entries) {
    bool wanted = prefixes.empty();
    for (const std::string& p : prefixes) wanted = wanted || e.name.rfind(p, 0) == 0;
    if (!wanted) continue;
    if (!model.parameters().contains(e.name)) {
      throw CheckpointError("checkpoint entry " + e.name + " has no matching parameter");
    }
    Var param = model.parameters().get(e.name);
    if (param.shape() != e.value.shape()) {
      throw CheckpointError("checkpoint entry " + e.name + " has shape " + shape_to_string(e.value.shape()) +
                            ", parameter has " + shape_to_string(param.shape()));
    }
    param.mutable_value() = e.value;
    ++loaded;
  }
  return loaded;
}

ModelConfig config_from_signature(const std::string& signature) {
  ModelConfig config;
  std::istringstream fields(signature);
  std::string item;
  while (std::getline(fields, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed topology signature '" + signature + "'");
    const std::string key = item.substr(0, eq);
    const int64_t value = std::stoll(item.substr(eq + 1));
    if (key == "res") config.resolution = value;
    else if (key == "width_div") config.width_divisor = value;
    else if (key == "audio_stack") config.audio_stack = value;
    else throw CheckpointError("unknown topology key '" + key + "' in '" + signature + "'");
  }
  if (config.signature() != signature) throw CheckpointError("malformed topology signature '" + signature + "'");
  return config;
}

SaliencyModel load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  SaliencyModel model(config_from_signature(ckpt.signature));
  load_into(model, ckpt);
  return model;
}

int64_t load_asset(SaliencyModel& model, const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& renames) {
  const Checkpoint asset = read_checkpoint(path);
  int64_t loaded = 0;
  for (const CheckpointEntry& e : asset.entries) {
    for (const auto& [from, to] : renames) {
      if (e.name.rfind(from, 0) != 0) continue;
      const std::string target = to + e.name.substr(from.size());
      if (!model.parameters().contains(target)) continue;
      Var param = model.parameters().get(target);
      if (param.shape() != e.value.shape()) {
        throw ConfigError("asset " + path.string() + " entry " + e.name + " has shape " +
                          shape_to_string(e.value.shape()) + ", " + target + " needs " +
                          shape_to_string(param.shape()));
      }
      param.mutable_value() = e.value;
      ++loaded;
    }
  }
  return loaded;
}

}  // namespace avsal
