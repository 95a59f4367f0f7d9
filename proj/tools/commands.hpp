// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace avsal::cli {

struct IngestArgs {
  std::filesystem::path root;  // dataset root; unused with --synthetic
  std::filesystem::path out;
  int64_t synthetic = 0;
  int64_t resolution = 256;
  int64_t clip_length = 12;
  uint64_t seed = 0;
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::string> stage;
  std::optional<uint64_t> seed;
  std::optional<int64_t> resolution;
  std::optional<std::string> out;
  std::optional<std::string> data;
};

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;  // clip archive directory or a video file
  std::filesystem::path out;
};

struct EvaluateArgs {
  std::filesystem::path predictions;
  std::filesystem::path ground_truth;  // clip archive
  std::filesystem::path out;
};

struct AnalyzeArgs {
  std::filesystem::path dataset;  // clip archive
  std::filesystem::path out;
  std::filesystem::path flow;     // optional flow-magnitude maps
  double threshold = 0.5;
};

// Each command writes its outputs plus one run manifest, and throws
// ConfigError / ValidationError on bad input.
void cmd_ingest(const IngestArgs& args, const std::vector<std::string>& argv);
void cmd_train(const TrainArgs& args, const std::vector<std::string>& argv);
void cmd_predict(const PredictArgs& args, const std::vector<std::string>& argv);
void cmd_evaluate(const EvaluateArgs& args, const std::vector<std::string>& argv);
void cmd_analyze(const AnalyzeArgs& args, const std::vector<std::string>& argv);

/// <dir>/<video>/frame_NNNNN.<ext>
std::filesystem::path frame_file(const std::filesystem::path& dir, const std::string& video, int64_t frame,
                                 const std::string& ext);

}  // namespace avsal::cli
