// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "avsal/checkpoint.hpp"
#include "avsal/errors.hpp"
#include "avsal/evaluation.hpp"
#include "avsal/ingest.hpp"
#include "avsal/synthetic.hpp"
#include "avsal/tensor_io.hpp"
#include "avsal/training.hpp"
#include "png_writer.hpp"
#include "run_manifest.hpp"

namespace avsal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

json config_json(const TrainConfig& c) {
  json j = json::object();
  std::istringstream in(c.to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

/// Distribution form of a stored map; float32 files lose a little mass.
Tensor renormalized(Tensor t) {
  const double total = t.sum();
  if (!(total > 0.0)) throw ValidationError("map has no positive mass");
  for (double& v : t.values()) v /= total;
  return t;
}

Tensor frame_plane(const ClipSample& clip, int64_t t) { return clip.gt_density[static_cast<size_t>(t)].values(); }

}  // namespace

fs::path frame_file(const fs::path& dir, const std::string& video, int64_t frame, const std::string& ext) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05lld.", static_cast<long long>(frame));
  return dir / video / (name + ext);
}

// ---------------------------------------------------------------- ingest

void cmd_ingest(const IngestArgs& args, const std::vector<std::string>& argv) {
  RunManifest manifest("ingest", argv);
  manifest.seed = args.seed;
  std::vector<ClipSample> clips;
  if (args.synthetic > 0) {
    SyntheticOptions o;
    o.resolution = args.resolution;
    o.length = args.clip_length;
    o.seed = args.seed;
    o.turn_frame = args.clip_length / 2;
    clips = make_synthetic_set(args.synthetic, o);
    manifest.config = {{"synthetic", args.synthetic}, {"resolution", args.resolution}, {"clip_length", args.clip_length}};
  } else {
    if (args.root.empty()) throw ConfigError("ingest needs a dataset root or --synthetic N");
    IngestOptions opts;
    opts.resolution = args.resolution;
    opts.clip_length = args.clip_length;
    const DatasetLayout layout = scan_dataset(args.root);
    for (const VideoEntry& e : layout.videos) {
      auto v = ingest_video(e, opts);
      std::cout << e.id << ": " << v.size() << " clips\n";
      clips.insert(clips.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    }
    manifest.config = {{"root", args.root.string()}, {"resolution", args.resolution}, {"clip_length", args.clip_length}};
  }
  for (const ClipSample& c : clips) {
    const auto violations = validate_clip(c);
    if (!violations.empty())
      throw ValidationError("clip " + c.video_id + "@" + std::to_string(c.first_frame) + ": " +
                            to_string(violations.front()));
  }
  write_clip_archive(args.out, clips);
  manifest.outputs = {args.out.string()};
  manifest.write(args.out);
  std::cout << "wrote " << clips.size() << " clips to " << args.out.string() << "\n";
}

// ---------------------------------------------------------------- train

void cmd_train(const TrainArgs& args, const std::vector<std::string>& argv) {
  TrainConfig c = TrainConfig::load(args.config);
  if (args.stage) c.stage = parse_stage(*args.stage);
  if (args.seed) c.seed = *args.seed;
  if (args.resolution) c.resolution = *args.resolution;
  if (args.out) c.out_dir = *args.out;
  if (args.data) c.data_dir = *args.data;
  c.validate();
  if (c.data_dir.empty()) throw ConfigError("no clip archive configured (data_dir or --data)");
  if (c.out_dir.empty()) throw ConfigError("no output directory configured (out_dir or --out)");
  // Unset prerequisites default to the earlier stages' outputs in out_dir.
  const auto in_out = [&c](const char* stage) { return (fs::path(c.out_dir) / (std::string(stage) + ".ckpt")).string(); };
  if (c.visual_checkpoint.empty()) c.visual_checkpoint = in_out("pretrain_visual");
  if (c.face_checkpoint.empty()) c.face_checkpoint = in_out("pretrain_face");
  if (c.audio_checkpoint.empty()) c.audio_checkpoint = in_out("pretrain_audio_joint");

  RunManifest manifest("train", argv);
  manifest.seed = c.seed;
  manifest.config = config_json(c);
  const std::vector<ClipSample> clips = read_clip_archive(c.data_dir);
  const TrainResult r = train_stage(c, clips);
  std::cout << to_string(c.stage) << ": " << r.steps << " steps, stop " << r.stop_reason;
  if (!r.losses.empty()) std::cout << ", loss " << r.losses.front() << " -> " << r.losses.back();
  std::cout << "\n" << "checkpoint " << r.checkpoint.string() << "\n";
  write_text(fs::path(c.out_dir) / (to_string(c.stage) + ".cfg"), c.to_text());
  manifest.outputs = {r.checkpoint.string(), r.loss_curve.string(),
                      (fs::path(c.out_dir) / (to_string(c.stage) + ".cfg")).string()};
  manifest.write(c.out_dir, "run_manifest_" + to_string(c.stage) + ".json");  // stages share out_dir
}

// ---------------------------------------------------------------- predict

void cmd_predict(const PredictArgs& args, const std::vector<std::string>& argv) {
  RunManifest manifest("predict", argv);
  const SaliencyModel model = load_model(args.checkpoint);
  std::vector<ClipSample> clips;
  if (fs::is_directory(args.input)) {
    clips = read_clip_archive(args.input);
  } else if (fs::is_regular_file(args.input)) {
    IngestOptions opts;
    opts.resolution = model.config().resolution;
    clips = ingest_video(VideoEntry{args.input.stem().string(), args.input, {}, {}}, opts);
  } else {
    throw ValidationError("prediction input " + args.input.string() + " does not exist");
  }
  manifest.config = {{"checkpoint", args.checkpoint.string()}, {"input", args.input.string()},
                     {"model", model.config().signature()}};

  std::ostringstream weights;
  weights << "video,frame,face_id,weight\n" << std::setprecision(17);
  int64_t written = 0;
  for (const ClipSample& clip : clips) {
    if (clip.resolution() != model.config().resolution)
      throw ValidationError("clip " + clip.video_id + " has resolution " + std::to_string(clip.resolution()) +
                            ", checkpoint expects " + std::to_string(model.config().resolution));
    const Prediction p = predict(model, clip);
    fs::create_directories(args.out / clip.video_id);
    for (size_t t = 0; t < p.maps.size(); ++t) {
      const int64_t frame = clip.first_frame + static_cast<int64_t>(t);
      write_tensor_file(frame_file(args.out, clip.video_id, frame, "bin"), p.maps[t].values());
      write_map_png(frame_file(args.out, clip.video_id, frame, "png"), p.maps[t].values());
      const int64_t n = static_cast<int64_t>(p.face_ids.size());
      for (int64_t i = 0; i < n; ++i)
        weights << clip.video_id << ',' << frame << ',' << p.face_ids[static_cast<size_t>(i)] << ','
                << p.face_weights[static_cast<int64_t>(t) * n + i] << '\n';
      ++written;
    }
  }
  fs::create_directories(args.out);
  write_text(args.out / "face_weights.csv", weights.str());
  manifest.outputs = {args.out.string(), (args.out / "face_weights.csv").string()};
  manifest.write(args.out);
  std::cout << "wrote " << written << " frames to " << args.out.string() << "\n";
}

// ---------------------------------------------------------------- evaluate

void cmd_evaluate(const EvaluateArgs& args, const std::vector<std::string>& argv) {
  RunManifest manifest("evaluate", argv);
  manifest.config = {{"predictions", args.predictions.string()}, {"ground_truth", args.ground_truth.string()}};
  const std::vector<ClipSample> gt = read_clip_archive(args.ground_truth);
  std::vector<FrameEval> frames;
  std::vector<std::string> problems;
  std::map<std::string, std::set<int64_t>> expected;
  for (const ClipSample& clip : gt) {
    for (int64_t t = 0; t < clip.length(); ++t) {
      const int64_t frame = clip.first_frame + t;
      expected[clip.video_id].insert(frame);
      const fs::path file = frame_file(args.predictions, clip.video_id, frame, "bin");
      if (!fs::exists(file)) {
        problems.push_back(clip.video_id + " frame " + std::to_string(frame) + ": no prediction");
        continue;
      }
      FrameEval f;
      f.video = clip.video_id;
      f.frame = frame;
      f.prediction = read_tensor_file(file);
      f.density = frame_plane(clip, t);
      if (f.prediction.shape() != f.density.shape()) {
        problems.push_back(clip.video_id + " frame " + std::to_string(frame) + ": prediction " +
                           shape_to_string(f.prediction.shape()) + " vs ground truth " +
                           shape_to_string(f.density.shape()));
        continue;
      }
      f.prediction = renormalized(std::move(f.prediction));
      f.fixations = clip.gt_fixations[static_cast<size_t>(t)];
      frames.push_back(std::move(f));
    }
  }
  for (const auto& [video, wanted] : expected) {
    if (!fs::is_directory(args.predictions / video)) continue;
    for (const auto& entry : fs::directory_iterator(args.predictions / video)) {
      const std::string name = entry.path().filename().string();
      long long frame = -1;
      if (entry.path().extension() != ".bin" || std::sscanf(name.c_str(), "frame_%lld.bin", &frame) != 1) continue;
      if (!wanted.contains(frame)) problems.push_back(video + " frame " + std::to_string(frame) + ": no ground truth");
    }
  }
  if (!problems.empty()) {
    std::string msg = "predictions and ground truth are misaligned (" + std::to_string(problems.size()) + " frames):";
    for (size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    if (problems.size() > 20) msg += "\n  ...";
    throw ValidationError(msg);
  }
  const MetricReport report = evaluate_frames(frames);
  fs::create_directories(args.out);
  write_text(args.out / "metrics.csv", report.to_csv());
  write_text(args.out / "metrics.txt", report.to_table());
  std::cout << report.to_table();
  manifest.outputs = {(args.out / "metrics.csv").string(), (args.out / "metrics.txt").string()};
  manifest.write(args.out);
}

// ---------------------------------------------------------------- analyze

namespace {

struct Mean {
  double sum = 0.0;
  int64_t count = 0;
  void add(std::optional<double> v) {
    if (v) sum += *v, ++count;
  }
  json value() const { return count == 0 ? json(nullptr) : json(sum / static_cast<double>(count)); }
};

struct VideoFindings {
  Mean entropy, dispersion, contextual;
  std::array<Mean, 3> landmark;
  std::vector<int64_t> transitions;
  int64_t events = 0, unreached = 0, frames = 0;

  json to_json() const {
    Mean transition;
    for (int64_t v : transitions) transition.add(static_cast<double>(v));
    return {{"frames", frames},
            {"entropy_bits", entropy.value()},
            {"dispersion_px", dispersion.value()},
            {"nss_eyes", landmark[0].value()},
            {"nss_nose", landmark[1].value()},
            {"nss_mouth", landmark[2].value()},
            {"contextual_nss", contextual.value()},
            {"transition_frames", transition.value()},
            {"turn_events", events},
            {"unreached_events", unreached}};
  }
};

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  std::ostringstream os;
  os << std::setprecision(10) << v.get<double>();
  return os.str();
}

}  // namespace

void cmd_analyze(const AnalyzeArgs& args, const std::vector<std::string>& argv) {
  RunManifest manifest("analyze", argv);
  manifest.config = {{"dataset", args.dataset.string()}, {"flow", args.flow.string()}, {"threshold", args.threshold}};
  const std::vector<ClipSample> clips = read_clip_archive(args.dataset);
  std::map<std::string, VideoFindings> per_video;
  VideoFindings all;
  for (const ClipSample& clip : clips) {
    VideoFindings& v = per_video[clip.video_id];
    for (int64_t t = 0; t < clip.length(); ++t) {
      const size_t ts = static_cast<size_t>(t);
      const Tensor density = frame_plane(clip, t);
      const auto& fix = clip.gt_fixations[ts];
      for (VideoFindings* f : {&v, &all}) {
        ++f->frames;
        f->entropy.add(stat_entropy(density));
        f->dispersion.add(stat_dispersion(fix));
      }
      for (const FaceTrack& track : clip.face_tracks) {
        if (ts >= track.landmarks.size() || !track.landmarks[ts]) continue;
        const auto nss = stat_landmark_nss(density, *track.landmarks[ts]);
        for (size_t k = 0; k < 3; ++k) {
          v.landmark[k].add(nss[k]);
          all.landmark[k].add(nss[k]);
        }
      }
      if (!args.flow.empty()) {
        const fs::path file = frame_file(args.flow, clip.video_id, clip.first_frame + t, "bin");
        if (!fs::exists(file)) throw ValidationError("missing flow map " + file.string());
        const auto c = stat_contextual_nss(read_tensor_file(file), fix);
        v.contextual.add(c);
        all.contextual.add(c);
      }
    }
    const auto events = turn_events(clip.face_tracks);
    if (!events.empty()) {
      const TransitionStats st = stat_transition_time(clip.gt_fixations, clip.face_tracks, events, args.threshold);
      for (VideoFindings* f : {&v, &all}) {
        f->transitions.insert(f->transitions.end(), st.per_event.begin(), st.per_event.end());
        f->events += st.events;
        f->unreached += st.unreached;
      }
    }
  }

  json doc = {{"videos", json::object()}, {"aggregate", all.to_json()}};
  std::ostringstream csv;
  const char* columns[] = {"frames",         "entropy_bits",      "dispersion_px", "nss_eyes",
                           "nss_nose",       "nss_mouth",         "contextual_nss", "transition_frames",
                           "turn_events",    "unreached_events"};
  csv << "video";
  for (const char* c : columns) csv << ',' << c;
  csv << '\n';
  auto row = [&](const std::string& name, const json& j) {
    csv << name;
    for (const char* c : columns) csv << ',' << (j[c].is_number_integer() ? std::to_string(j[c].get<int64_t>()) : csv_cell(j[c]));
    csv << '\n';
  };
  for (const auto& [id, f] : per_video) {
    doc["videos"][id] = f.to_json();
    row(id, doc["videos"][id]);
  }
  row("all", doc["aggregate"]);
  fs::create_directories(args.out);
  write_text(args.out / "findings.json", doc.dump(2) + "\n");
  write_text(args.out / "findings.csv", csv.str());
  std::cout << csv.str();
  manifest.outputs = {(args.out / "findings.json").string(), (args.out / "findings.csv").string()};
  manifest.write(args.out);
}

}  // namespace avsal::cli
