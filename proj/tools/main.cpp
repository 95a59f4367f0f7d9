// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// avsal command-line entry point. Exit codes: 0 success, 2 configuration
// error, 3 data-validation error, 1 anything else.

#include <CLI11.hpp>

#include <iostream>

#include "avsal/errors.hpp"
#include "avsal/tensor.hpp"
#include "commands.hpp"
#include "run_manifest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace avsal::cli;
  const std::vector<std::string> args(argv, argv + argc);

  CLI::App app{"Audio-visual video saliency: ingest, train, predict, evaluate, analyze"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a clip archive from a dataset root or synthetic clips");
  ingest_cmd->add_option("root", ingest.root, "dataset root (videos/, faces/, fixations/)");
  ingest_cmd->add_option("--out", ingest.out, "archive directory")->required();
  ingest_cmd->add_option("--synthetic", ingest.synthetic, "generate N procedural clips instead")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--resolution", ingest.resolution, "square frame size")->capture_default_str();
  ingest_cmd->add_option("--clip-length", ingest.clip_length, "frames per clip")->capture_default_str();
  ingest_cmd->add_option("--seed", ingest.seed, "synthetic generator seed")->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run one training stage");
  train_cmd->add_option("--config", train.config, "key = value config file")->required();
  train_cmd->add_option("--stage", train.stage, "pretrain_visual | pretrain_face | pretrain_audio_joint | joint");
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--resolution", train.resolution);
  train_cmd->add_option("--out", train.out, "output directory");
  train_cmd->add_option("--data", train.data, "clip archive");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "write saliency maps and face weights");
  predict_cmd->add_option("--checkpoint", predict.checkpoint)->required();
  predict_cmd->add_option("input", predict.input, "clip archive directory or video file")->required();
  predict_cmd->add_option("--out", predict.out)->required();

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against a ground-truth archive");
  evaluate_cmd->add_option("predictions", evaluate.predictions)->required();
  evaluate_cmd->add_option("ground_truth", evaluate.ground_truth)->required();
  evaluate_cmd->add_option("--out", evaluate.out)->required();

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "entropy, dispersion, landmark/contextual NSS, transition time");
  analyze_cmd->add_option("dataset", analyze.dataset, "clip archive")->required();
  analyze_cmd->add_option("--out", analyze.out)->required();
  analyze_cmd->add_option("--flow", analyze.flow, "flow-magnitude maps, <video>/frame_NNNNN.bin");
  analyze_cmd->add_option("--threshold", analyze.threshold, "in-box fixation share for a transition")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*ingest_cmd) cmd_ingest(ingest, args);
    if (*train_cmd) cmd_train(train, args);
    if (*predict_cmd) cmd_predict(predict, args);
    if (*evaluate_cmd) cmd_evaluate(evaluate, args);
    if (*analyze_cmd) cmd_analyze(analyze, args);
  } catch (const avsal::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const avsal::ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const avsal::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
