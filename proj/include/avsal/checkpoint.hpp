// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint files: "AVSALCKP" magic, then length-prefixed strings for the
// format version, the topology signature and the producing stage, a uint32
// entry count and per entry: name, uint32 rank, int64 dims, float64 values.
// Little-endian.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "avsal/errors.hpp"
#include "avsal/model.hpp"

namespace avsal {

inline constexpr const char* kCheckpointFormat = "avsal-checkpoint/1";

/// Topology or format mismatch between a checkpoint and the model.
class CheckpointError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct CheckpointEntry {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::string format = kCheckpointFormat;
  std::string signature;
  std::string stage;
  std::vector<CheckpointEntry> entries;

  /// "<format> <signature>", quoted in mismatch errors.
  std::string version() const { return format + " " + signature; }
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter accepted by `keep` (all when empty).
Checkpoint make_checkpoint(const SaliencyModel& model, const std::string& stage,
                           const std::function<bool(const std::string&)>& keep = {});

/// Copies entries whose names start with one of `prefixes` (all when empty)
/// into the model. Throws CheckpointError quoting both version strings when
/// the signatures differ, or when a tensor's shape disagrees. Returns the
/// number of tensors loaded.
int64_t load_into(SaliencyModel& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes = {});

/// Rebuilds a model from a checkpoint's signature and loads every entry.
SaliencyModel load_model(const std::filesystem::path& path);
ModelConfig config_from_signature(const std::string& signature);

/// Pretrained-weight assets use the checkpoint layout without a topology
/// check. `renames` maps asset prefixes to model prefixes, e.g.
/// {"conv1_1.", "visual.rgb.conv1_1."}; unmatched asset entries are
/// ignored. Returns the number of tensors loaded.
int64_t load_asset(SaliencyModel& model, const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& renames);

}  // namespace avsal
