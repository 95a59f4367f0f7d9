// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "avsal/ingest.hpp"
#include "avsal/layers.hpp"

namespace avsal {
namespace {

constexpr double kFaceSize = 0.25;  // box side as a fraction of the frame
constexpr double kToneHz[2] = {440.0, 880.0};
constexpr double kSkin[2][3] = {{0.92, 0.72, 0.58}, {0.55, 0.40, 0.30}};

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Scene geometry in normalized [0, 1] coordinates.
struct Scene {
  double fx[2], fy[2];  // face centers
  double bx, by;        // blob center
  int talker;
  bool mouth_open;
};

struct Script {
  int64_t period;  // frames between talker changes
  int first_talker;
  double phase;
};

int talker_at(const Script& s, int64_t t) { return static_cast<int>((s.first_talker + t / s.period) % 2); }

Scene scene_at(const Script& s, int64_t t) {
  Scene sc{};
  const double a = 2.0 * std::numbers::pi * static_cast<double>(t) / 24.0 + s.phase;
  sc.fx[0] = 0.30 + 0.05 * std::sin(a);
  sc.fy[0] = 0.42 + 0.03 * std::cos(a);
  sc.fx[1] = 0.70 - 0.05 * std::sin(a + 1.0);
  sc.fy[1] = 0.58 + 0.03 * std::cos(a + 1.0);
  sc.bx = 0.5 + 0.3 * std::cos(0.5 * a);
  sc.by = 0.12;
  sc.talker = talker_at(s, t);
  sc.mouth_open = t % 2 == 1;
  return sc;
}

// Renders a scene into planar 8-bit RGB of size w×h.
void render(const Scene& sc, int64_t w, int64_t h, uint8_t* out) {
  const int64_t plane = w * h;
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      const double v = (static_cast<double>(r) + 0.5) / static_cast<double>(h);
      double rgb[3] = {0.18 + 0.1 * v, 0.22 + 0.08 * u, 0.28};
      const double blob = std::exp(-((u - sc.bx) * (u - sc.bx) + (v - sc.by) * (v - sc.by)) / (2.0 * 0.03 * 0.03));
      for (double& ch : rgb) ch += 0.6 * blob;
      for (int f = 0; f < 2; ++f) {
        const double du = (u - sc.fx[f]) / kFaceSize, dv = (v - sc.fy[f]) / kFaceSize;
        if (std::abs(du) >= 0.5 || std::abs(dv) >= 0.5) continue;
        const double shade = 1.0 - 0.6 * (du * du + dv * dv);
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = kSkin[f][ch] * shade;
        const bool eye = std::abs(dv + 0.15) < 0.05 && std::abs(std::abs(du) - 0.2) < 0.06;
        const bool nose = std::abs(du) < 0.04 && std::abs(dv - 0.03) < 0.06;
        const double mouth_h = (sc.talker == f && sc.mouth_open) ? 0.09 : 0.025;
        const bool mouth = std::abs(du) < 0.22 && std::abs(dv - 0.25) < mouth_h;
        if (eye) rgb[0] = rgb[1] = rgb[2] = 0.08;
        if (nose) rgb[0] *= 0.8, rgb[1] *= 0.7, rgb[2] *= 0.7;
        if (mouth) rgb[0] = 0.55, rgb[1] = 0.1, rgb[2] = 0.12;
      }
      for (int ch = 0; ch < 3; ++ch) {
        out[ch * plane + r * w + c] = static_cast<uint8_t>(std::lround(std::clamp(rgb[ch], 0.0, 1.0) * 255.0));
      }
    }
  }
}

Box face_box(const Scene& sc, int f, double w, double h) {
  return {(sc.fx[f] - kFaceSize / 2.0) * w, (sc.fy[f] - kFaceSize / 2.0) * h, kFaceSize * w, kFaceSize * h};
}

FaceLandmarks face_landmarks(const Box& b) {
  FaceLandmarks lm;
  const Point c = b.center();
  lm.of(LandmarkClass::eyes) = {{c.x - 0.2 * b.w, c.y - 0.15 * b.h}, {c.x + 0.2 * b.w, c.y - 0.15 * b.h}};
  lm.of(LandmarkClass::nose) = {{c.x, c.y + 0.03 * b.h}};
  lm.of(LandmarkClass::mouth) = {{c.x, c.y + 0.25 * b.h}};
  return lm;
}

// Per-observer gaze delay after a talker change. A quarter of the observers
// react one frame early, half exactly on time and the rest two frames late,
// so the half-way point is reached exactly `delay` frames after the change.
int64_t observer_delay(int64_t subject, int64_t subjects, int64_t delay) {
  const int64_t early = subjects / 4, on_time = subjects / 2;
  if (subject < early) return std::max<int64_t>(0, delay - 1);
  if (subject < early + on_time) return delay;
  return delay + 2;
}

// The face observer `s` looks at in frame t.
int gaze_target(const Script& script, int64_t t, int64_t s, const SyntheticOptions& o) {
  if (o.fixed_weights) return s < o.subjects / 4 ? 0 : 1;
  const int now = talker_at(script, t);
  const int64_t since = t % script.period;
  if (t < script.period) return now;
  return since >= observer_delay(s, o.subjects, o.transition_delay) ? now : 1 - now;
}

std::vector<double> tone_track(const Script& script, int64_t frames, double frame_rate, double rate) {
  const int64_t n = static_cast<int64_t>(std::ceil(static_cast<double>(frames) / frame_rate * rate));
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double time = static_cast<double>(i) / rate;
    const int64_t t = std::min<int64_t>(frames - 1, static_cast<int64_t>(time * frame_rate));
    out[static_cast<size_t>(i)] = 0.5 * std::sin(2.0 * std::numbers::pi * kToneHz[talker_at(script, t)] * time);
  }
  return out;
}

Script script_for(const SyntheticOptions& o, int64_t index) {
  return {std::max<int64_t>(1, o.turn_frame), static_cast<int>(index % 2), 1.3 * static_cast<double>(index)};
}

}  // namespace

ClipSample make_synthetic_clip(const SyntheticOptions& o, int64_t index) {
  if (o.resolution < 16 || o.length < 1 || o.subjects < 1) throw ConfigError("invalid synthetic options");
  const Script script = script_for(o, index);
  const int64_t r = o.resolution, t_len = o.length;
  const double size = static_cast<double>(r);

  ClipSample clip;
  clip.video_id = "synthetic_" + std::to_string(index);
  clip.first_frame = 0;
  clip.frame_rate = o.frame_rate;

  std::vector<uint8_t> pixels(static_cast<size_t>(t_len * 3 * r * r));
  std::vector<Scene> scenes;
  for (int64_t t = 0; t < t_len; ++t) {
    scenes.push_back(scene_at(script, t));
    render(scenes.back(), r, r, pixels.data() + t * 3 * r * r);
  }
  clip.frames = Tensor({t_len, 3, r, r});
  for (size_t i = 0; i < pixels.size(); ++i) clip.frames.values()[i] = static_cast<double>(pixels[i]) / 255.0;

  const std::vector<double> wave = tone_track(script, t_len, o.frame_rate, kAudioRate);
  clip.audio_windows = frame_audio_windows(logmel(wave), o.frame_rate, 0, t_len, r);

  for (int f = 0; f < 2; ++f) {
    FaceTrack track;
    track.face_id = f;
    for (int64_t t = 0; t < t_len; ++t) {
      const Box b = face_box(scenes[static_cast<size_t>(t)], f, size, size);
      track.boxes.push_back(b);
      track.talking.push_back(scenes[static_cast<size_t>(t)].talker == f);
      track.landmarks.push_back(face_landmarks(b));
    }
    clip.face_tracks.push_back(std::move(track));
  }

  for (int64_t t = 0; t < t_len; ++t) {
    std::vector<FixationPoint> fx;
    for (int64_t s = 0; s < o.subjects; ++s) {
      Rng rng(mix(mix(o.seed, static_cast<uint64_t>(index)), static_cast<uint64_t>(t * 1000 + s)));
      std::uniform_real_distribution<double> jitter(-1.0, 1.0);
      const Point c = clip.face_tracks[static_cast<size_t>(gaze_target(script, t, s, o))]
                          .boxes[static_cast<size_t>(t)]->center();
      fx.push_back({c.x + jitter(rng), c.y + jitter(rng), static_cast<int>(s)});
    }
    clip.gt_density.push_back(fixation_density(fx, r, r));
    clip.gt_fixations.push_back(std::move(fx));
  }
  return clip;
}

std::vector<ClipSample> make_synthetic_set(int64_t count, const SyntheticOptions& options) {
  std::vector<ClipSample> out;
  for (int64_t i = 0; i < count; ++i) out.push_back(make_synthetic_clip(options, i));
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, const std::vector<int64_t>& frames,
                             int64_t source_width, int64_t source_height, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "videos");
  fs::create_directories(root / "faces");
  fs::create_directories(root / "fixations");
  SyntheticOptions o;
  o.seed = seed;
  const double w = static_cast<double>(source_width), h = static_cast<double>(source_height);
  for (size_t v = 0; v < frames.size(); ++v) {
    const std::string id = "video" + std::to_string(v);
    const Script script = script_for(o, static_cast<int64_t>(v));
    const int64_t count = frames[v];
    std::vector<uint8_t> pixels(static_cast<size_t>(count * 3 * source_width * source_height));
    nlohmann::json faces = {{"faces", nlohmann::json::array()}};
    std::vector<nlohmann::json> tracks(2);
    for (int f = 0; f < 2; ++f) tracks[static_cast<size_t>(f)] = {{"face_id", f}, {"frames", nlohmann::json::array()}};
    std::ofstream csv(root / "fixations" / (id + ".csv"));
    csv << "frame,subject,x,y\n";
    for (int64_t t = 0; t < count; ++t) {
      const Scene sc = scene_at(script, t);
      render(sc, source_width, source_height, pixels.data() + t * 3 * source_width * source_height);
      Box boxes[2];
      for (int f = 0; f < 2; ++f) {
        boxes[f] = face_box(sc, f, w, h);
        const FaceLandmarks lm = face_landmarks(boxes[f]);
        nlohmann::json lmj;
        for (size_t c = 0; c < 3; ++c)
          for (const Point& p : lm.points[c]) lmj[kLandmarkNames[c]].push_back({p.x, p.y});
        tracks[static_cast<size_t>(f)]["frames"].push_back({{"frame", t},
                                                            {"box", {boxes[f].x, boxes[f].y, boxes[f].w, boxes[f].h}},
                                                            {"talking", sc.talker == f},
                                                            {"landmarks", lmj}});
      }
      for (int64_t s = 0; s < o.subjects; ++s) {
        Rng rng(mix(mix(seed, v), static_cast<uint64_t>(t * 1000 + s)));
        std::uniform_real_distribution<double> jitter(-1.0, 1.0);
        const Point c = boxes[gaze_target(script, t, s, o)].center();
        csv << t << ',' << s << ',' << c.x + jitter(rng) << ',' << c.y + jitter(rng) << '\n';
      }
    }
    for (auto& t : tracks) faces["faces"].push_back(t);
    std::ofstream(root / "faces" / (id + ".json")) << faces.dump(1) << '\n';
    const double audio_rate = 44100.0;
    encode_video(root / "videos" / (id + ".mp4"), pixels, source_width, source_height, o.frame_rate,
                 tone_track(script, count, o.frame_rate, audio_rate), static_cast<int>(audio_rate));
  }
}

}  // namespace avsal
