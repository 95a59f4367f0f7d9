// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "avsal/ingest.hpp"
#include "avsal/tensor_io.hpp"

namespace avsal {
namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

Point read_point(const json& j, double sx, double sy) {
  return {j.at(0).get<double>() * sx, j.at(1).get<double>() * sy};
}

// Parses the face-annotation schema; frames outside [0, frame_count) are
// ignored and boxes are clipped to the `limit`×`limit` frame.
std::vector<FaceTrack> tracks_from_json(const json& root, int64_t frame_count, double sx, double sy, double limit,
                                        const std::string& origin) {
  std::vector<FaceTrack> out;
  try {
    for (const json& face : root.at("faces")) {
      FaceTrack track;
      track.face_id = face.at("face_id").get<int>();
      track.boxes.assign(static_cast<size_t>(frame_count), std::nullopt);
      track.talking.assign(static_cast<size_t>(frame_count), false);
      track.landmarks.assign(static_cast<size_t>(frame_count), std::nullopt);
      for (const json& f : face.at("frames")) {
        const int64_t t = f.at("frame").get<int64_t>();
        if (t < 0 || t >= frame_count) continue;
        const json& b = f.at("box");
        double x0 = b.at(0).get<double>() * sx, y0 = b.at(1).get<double>() * sy;
        double x1 = x0 + b.at(2).get<double>() * sx, y1 = y0 + b.at(3).get<double>() * sy;
        x0 = std::clamp(x0, 0.0, limit);
        y0 = std::clamp(y0, 0.0, limit);
        x1 = std::clamp(x1, 0.0, limit);
        y1 = std::clamp(y1, 0.0, limit);
        if (x1 <= x0 || y1 <= y0) continue;
        const size_t i = static_cast<size_t>(t);
        track.boxes[i] = Box{x0, y0, x1 - x0, y1 - y0};
        track.talking[i] = f.value("talking", false);
        if (f.contains("landmarks")) {
          FaceLandmarks lm;
          for (size_t c = 0; c < kLandmarkNames.size(); ++c) {
            if (!f["landmarks"].contains(kLandmarkNames[c])) continue;
            for (const json& p : f["landmarks"][kLandmarkNames[c]]) lm.points[c].push_back(read_point(p, sx, sy));
          }
          track.landmarks[i] = std::move(lm);
        }
      }
      out.push_back(std::move(track));
    }
  } catch (const json::exception& e) {
    throw IngestError("bad face annotation in " + origin + ": " + e.what());
  }
  return out;
}

json tracks_to_json(const std::vector<FaceTrack>& tracks) {
  json faces = json::array();
  for (const FaceTrack& track : tracks) {
    json frames = json::array();
    for (size_t t = 0; t < track.boxes.size(); ++t) {
      if (!track.boxes[t]) continue;
      const Box& b = *track.boxes[t];
      json f = {{"frame", t}, {"box", {b.x, b.y, b.w, b.h}}, {"talking", t < track.talking.size() && track.talking[t]}};
      if (t < track.landmarks.size() && track.landmarks[t]) {
        json lm = json::object();
        for (size_t c = 0; c < kLandmarkNames.size(); ++c) {
          json pts = json::array();
          for (const Point& p : track.landmarks[t]->points[c]) pts.push_back({p.x, p.y});
          if (!pts.empty()) lm[kLandmarkNames[c]] = pts;
        }
        f["landmarks"] = lm;
      }
      frames.push_back(f);
    }
    faces.push_back({{"face_id", track.face_id}, {"frames", frames}});
  }
  return {{"faces", faces}};
}

std::string clip_dir_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%04zu", index);
  return buf;
}

}  // namespace

DatasetLayout scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root / "videos")) throw IngestError("missing directory " + (root / "videos").string());
  DatasetLayout layout;
  layout.root = root;
  std::vector<std::string> missing;
  for (const auto& e : fs::directory_iterator(root / "videos")) {
    if (!e.is_regular_file() || e.path().extension() != ".mp4") continue;
    VideoEntry v;
    v.id = e.path().stem().string();
    v.video = e.path();
    v.faces = root / "faces" / (v.id + ".json");
    v.fixations = root / "fixations" / (v.id + ".csv");
    if (!fs::is_regular_file(v.faces)) missing.push_back(v.faces.string());
    if (!fs::is_regular_file(v.fixations)) missing.push_back(v.fixations.string());
    layout.videos.push_back(std::move(v));
  }
  if (!missing.empty()) {
    std::string msg = "dataset layout incomplete, missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IngestError(msg);
  }
  if (layout.videos.empty()) throw IngestError("no .mp4 videos under " + (root / "videos").string());
  std::sort(layout.videos.begin(), layout.videos.end(),
            [](const VideoEntry& a, const VideoEntry& b) { return a.id < b.id; });
  return layout;
}

std::vector<FaceTrack> load_face_tracks(const std::filesystem::path& path, int64_t frame_count, double scale_x,
                                        double scale_y) {
  // Boxes are clipped to the larger rescaled side; callers pass square
  // model-frame scales so both sides agree.
  return tracks_from_json(read_json(path), frame_count, scale_x, scale_y, std::numeric_limits<double>::max(),
                          path.string());
}

std::vector<std::vector<FixationPoint>> load_fixations(const std::filesystem::path& path, int64_t frame_count,
                                                       double scale_x, double scale_y, int64_t resolution) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read fixation file " + path.string());
  std::vector<std::vector<FixationPoint>> out(static_cast<size_t>(frame_count));
  std::string line;
  int64_t line_no = 0;
  const double limit = static_cast<double>(resolution);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("frame", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    int64_t frame = 0;
    int subject = 0;
    double x = 0.0, y = 0.0;
    if (!(fields >> frame >> subject >> x >> y)) {
      throw IngestError(path.string() + ":" + std::to_string(line_no) + ": expected frame,subject,x,y");
    }
    if (frame < 0 || frame >= frame_count) continue;
    const FixationPoint p{x * scale_x, y * scale_y, subject};
    if (p.x < 0.0 || p.x >= limit || p.y < 0.0 || p.y >= limit) continue;
    out[static_cast<size_t>(frame)].push_back(p);
  }
  return out;
}

std::vector<ClipSample> ingest_video(const VideoEntry& entry, const IngestOptions& options) {
  const int64_t r = options.resolution;
  const DecodedVideo video = decode_video(entry.video, r);
  const int64_t count = video.frame_count();
  const double sx = static_cast<double>(r) / static_cast<double>(video.source_width);
  const double sy = static_cast<double>(r) / static_cast<double>(video.source_height);

  AudioTrack audio = decode_audio(entry.video);
  std::vector<double> wave;
  if (audio.samples.empty()) {
    wave.assign(static_cast<size_t>(static_cast<double>(count) / video.frame_rate * kAudioRate) + 1, 0.0);
  } else {
    wave = resample_audio(audio.samples, audio.sample_rate, options.mel.sample_rate);
  }
  const LogMelSpec spec = logmel(wave, options.mel);

  const std::vector<FaceTrack> tracks =
      entry.faces.empty() ? std::vector<FaceTrack>{}
                          : tracks_from_json(read_json(entry.faces), count, sx, sy, static_cast<double>(r),
                                             entry.faces.string());
  const auto fixations = entry.fixations.empty() ? std::vector<std::vector<FixationPoint>>(static_cast<size_t>(count))
                                                 : load_fixations(entry.fixations, count, sx, sy, r);
  const double sigma = options.density_sigma > 0.0 ? options.density_sigma : static_cast<double>(r) / 16.0;

  std::vector<ClipSample> clips;
  for (const ClipRange& range : extract_clips(count, options.clip_length)) {
    ClipSample clip;
    clip.video_id = entry.id;
    clip.first_frame = range.first;
    clip.frame_rate = video.frame_rate;
    clip.frames = video.frames(range.first, range.length);
    clip.audio_windows = frame_audio_windows(spec, video.frame_rate, range.first, range.length, r);
    clip.face_tracks = slice_tracks(tracks, range.first, range.length);
    for (int64_t t = range.first; t < range.first + range.length; ++t) {
      const auto& fx = fixations[static_cast<size_t>(t)];
      clip.gt_fixations.push_back(fx);
      clip.gt_density.push_back(fixation_density(fx, r, r, sigma));
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

void write_clip_archive(const std::filesystem::path& dir, std::span<const ClipSample> clips) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest = {{"format", "avsal-clip-archive"}, {"version", 1}, {"clips", json::array()}};
  for (size_t i = 0; i < clips.size(); ++i) {
    const ClipSample& c = clips[i];
    const std::string name = clip_dir_name(i);
    fs::create_directories(dir / name);
    write_tensor_file(dir / name / "frames.bin", c.frames);
    write_tensor_file(dir / name / "audio.bin", c.audio_windows);
    const int64_t t_len = c.length(), r = c.resolution();
    Tensor density({t_len, r, r});
    for (int64_t t = 0; t < t_len; ++t) {
      const Tensor& m = c.gt_density[static_cast<size_t>(t)].values();
      std::copy(m.values().begin(), m.values().end(), density.data() + t * r * r);
    }
    write_tensor_file(dir / name / "density.bin", density);

    json annotations = tracks_to_json(c.face_tracks);
    json fixations = json::array();
    for (size_t t = 0; t < c.gt_fixations.size(); ++t)
      for (const FixationPoint& f : c.gt_fixations[t]) fixations.push_back({t, f.subject_id, f.x, f.y});
    annotations["fixations"] = fixations;
    std::ofstream(dir / name / "annotations.json") << annotations.dump(1) << "\n";

    manifest["clips"].push_back({{"dir", name},
                                 {"video_id", c.video_id},
                                 {"first_frame", c.first_frame},
                                 {"last_frame", c.first_frame + t_len - 1},
                                 {"length", t_len},
                                 {"frame_rate", c.frame_rate},
                                 {"resolution", r}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

std::vector<ClipSample> read_clip_archive(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  if (!std::filesystem::is_regular_file(manifest_path)) {
    throw ValidationError("no clip archive at " + dir.string() + " (missing manifest.json)");
  }
  std::vector<ClipSample> out;
  try {
    const json manifest = read_json(manifest_path);
    for (const json& entry : manifest.at("clips")) {
      const std::filesystem::path cdir = dir / entry.at("dir").get<std::string>();
      ClipSample c;
      c.video_id = entry.at("video_id").get<std::string>();
      c.first_frame = entry.at("first_frame").get<int64_t>();
      c.frame_rate = entry.at("frame_rate").get<double>();
      c.frames = read_tensor_file(cdir / "frames.bin");
      c.audio_windows = read_tensor_file(cdir / "audio.bin");
      const Tensor density = read_tensor_file(cdir / "density.bin");
      const int64_t t_len = c.frames.dim(0);
      if (density.rank() != 3 || density.dim(0) != t_len) throw ValidationError(cdir.string() + ": density shape");
      const int64_t plane = density.dim(1) * density.dim(2);
      for (int64_t t = 0; t < t_len; ++t) {
        Tensor m({density.dim(1), density.dim(2)});
        std::copy(density.data() + t * plane, density.data() + (t + 1) * plane, m.data());
        c.gt_density.push_back(normalize_map(m));
      }
      const json annotations = read_json(cdir / "annotations.json");
      c.face_tracks = tracks_from_json(annotations, t_len, 1.0, 1.0, std::numeric_limits<double>::max(),
                                       (cdir / "annotations.json").string());
      c.gt_fixations.assign(static_cast<size_t>(t_len), {});
      for (const json& f : annotations.at("fixations")) {
        const int64_t t = f.at(0).get<int64_t>();
        if (t < 0 || t >= t_len) throw ValidationError(cdir.string() + ": fixation frame out of range");
        c.gt_fixations[static_cast<size_t>(t)].push_back(
            {f.at(2).get<double>(), f.at(3).get<double>(), f.at(1).get<int>()});
      }
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed clip archive " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace avsal
