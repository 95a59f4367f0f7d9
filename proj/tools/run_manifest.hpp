// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace avsal::cli {

/// One per command run, written into the command's output directory.
struct RunManifest {
  RunManifest(std::string cmd, std::vector<std::string> args) : command(std::move(cmd)), argv(std::move(args)) {}

  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  uint64_t seed = 0;
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();
  std::vector<std::string> outputs;

  void write(const std::filesystem::path& out_dir, const std::string& file_name = "run_manifest.json") const;
};

std::string version_string();

}  // namespace avsal::cli
