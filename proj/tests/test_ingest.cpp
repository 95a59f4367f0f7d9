// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include "avsal/ingest.hpp"
#include "avsal/synthetic.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace avsal;
using avsal::testing::TempDir;
using avsal::oracle::oracle_mel_band;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double freq, double rate, int64_t n, double amp = 1.0) {
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = amp * std::sin(2.0 * kPi * freq * i / rate);
  return out;
}

// Frequency (Hz) of the largest naive-DFT magnitude over integer-Hz bins.
// With a 1 s signal the bins are exactly 1 Hz apart.
double dft_peak_hz(const std::vector<double>& x, double rate, int lo, int hi) {
  const double n = static_cast<double>(x.size());
  double best = -1.0;
  int best_k = lo;
  for (int k = lo; k <= hi; ++k) {
    const double hz = k * rate / n;
    const std::complex<double> step = std::polar(1.0, -2.0 * kPi * hz / rate);
    std::complex<double> rot = 1.0, acc = 0.0;
    for (double v : x) {
      acc += v * rot;
      rot *= step;
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_k = k;
    }
  }
  return best_k * rate / n;
}

std::vector<double> noise(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<double> out(static_cast<size_t>(n));
  for (double& v : out) v = g(rng);
  return out;
}

FaceTrack box_track(int id, int64_t t_len, Box box) {
  FaceTrack tr;
  tr.face_id = id;
  tr.boxes.assign(static_cast<size_t>(t_len), box);
  tr.talking.assign(static_cast<size_t>(t_len), false);
  return tr;
}

std::vector<FixationPoint> repeat(double x, double y, int count, int subject0 = 0) {
  std::vector<FixationPoint> out;
  for (int i = 0; i < count; ++i) out.push_back({x, y, subject0 + i});
  return out;
}

}  // namespace

TEST_CASE("extract_clips") {
  auto c = extract_clips(30, 12);
  REQUIRE(c.size() == 2);
  CHECK(c[0].first == 0);
  CHECK(c[1].first == 12);
  CHECK(c[1].length == 12);
  CHECK(extract_clips(12, 12).size() == 1);
  CHECK(extract_clips(11, 12).empty());
  CHECK(extract_clips(0, 12).empty());
}

TEST_CASE("resample_audio") {
  SUBCASE("2:1 length") { CHECK(resample_audio(std::vector<double>(44100, 0.1), 44100.0).size() == 22050); }
  SUBCASE("duration within one sample") {
    for (double rate : {8000.0, 16000.0, 44100.0, 48000.0, 96000.0}) {
      const int64_t n = 12345;
      const auto out = resample_audio(std::vector<double>(static_cast<size_t>(n), 0.0), rate);
      CHECK(std::abs(static_cast<double>(out.size()) - n * kAudioRate / rate) <= 1.0);
    }
  }
  SUBCASE("DC preserved away from the edges") {
    const auto out = resample_audio(std::vector<double>(48000, 0.5), 48000.0);
    for (size_t i = 200; i + 200 < out.size(); ++i) CHECK(std::abs(out[i] - 0.5) < 1e-3);
  }
  SUBCASE("440 Hz peak survives 48 kHz -> 22.05 kHz") {
    const auto out = resample_audio(sine(440.0, 48000.0, 48000), 48000.0);
    REQUIRE(out.size() == 22050);
    CHECK(dft_peak_hz(out, kAudioRate, 50, 3000) == doctest::Approx(440.0));
  }
  SUBCASE("tone above the new Nyquist is removed") {
    const auto out = resample_audio(sine(15000.0, 48000.0, 48000), 48000.0);
    double energy = 0.0;
    for (size_t i = 200; i + 200 < out.size(); ++i) energy += out[i] * out[i];
    CHECK(energy / static_cast<double>(out.size()) < 1e-4);
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(resample_audio(std::vector<double>{}, 44100.0), IngestError); }
}

TEST_CASE("mel filterbank shape and peaks") {
  const Tensor fb = mel_filterbank();
  CHECK(fb.shape() == Shape{64, 1025});
  for (int64_t m = 0; m < 64; ++m) {
    double peak = 0.0;
    for (int64_t k = 0; k < 1025; ++k) peak = std::max(peak, fb.at({m, k}));
    CHECK(peak > 0.0);
    CHECK(peak <= 1.0 + 1e-12);
  }
  CHECK(mel_to_hz(hz_to_mel(440.0)) == doctest::Approx(440.0).epsilon(1e-12));
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
}

TEST_CASE("logmel examples") {
  SUBCASE("silence") {
    const LogMelSpec s = logmel(std::vector<double>(22050, 0.0));
    CHECK(s.n_hops() == 44);
    CHECK(s.n_mels() == 64);
    for (double v : s.values.values()) CHECK(v == std::log(kLogFloor));
  }
  SUBCASE("hop count") {
    for (int64_t n : {511, 512, 1000, 22050, 44100}) {
      CHECK(logmel(std::vector<double>(static_cast<size_t>(n), 0.0)).n_hops() == n / 512 + 1);
    }
  }
  SUBCASE("440 Hz argmax band") {
    const LogMelSpec s = logmel(sine(440.0, kAudioRate, 22050));
    const int64_t expect = oracle_mel_band(440.0, 64, kAudioRate / 2);
    for (int64_t k = 2; k < s.n_hops() - 2; ++k) {
      int64_t best = 0;
      for (int64_t m = 1; m < 64; ++m)
        if (s.values.at({m, k}) > s.values.at({best, k})) best = m;
      CHECK(best == expect);
    }
  }
}

TEST_CASE("logmel of silence followed by a signal") {
  const int64_t pad_hops = 10;
  const auto signal = noise(22050, 3);
  std::vector<double> joined(static_cast<size_t>(pad_hops * kHopLength), 0.0);
  joined.insert(joined.end(), signal.begin(), signal.end());
  const LogMelSpec a = logmel(joined), b = logmel(signal);
  REQUIRE(a.n_hops() == b.n_hops() + pad_hops);
  for (int64_t k = 0; k <= pad_hops - 2; ++k)
    for (int64_t m = 0; m < 64; ++m) CHECK(a.values.at({m, k}) == std::log(kLogFloor));
  for (int64_t k = 2; k < b.n_hops() - 2; ++k)
    for (int64_t m = 0; m < 64; ++m) CHECK(std::abs(a.values.at({m, k + pad_hops}) - b.values.at({m, k})) < 1e-9);
}

TEST_CASE("audio window columns") {
  const LogMelSpec s = logmel(noise(10 * 22050, 11));
  const double floor = std::log(kLogFloor);
  SUBCASE("interior windows copy 20 consecutive columns covering the span") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.3, 9.6);
    const double hop_s = static_cast<double>(kHopLength) / kAudioRate;
    for (int trial = 0; trial < 200; ++trial) {
      const double t = u(rng);
      const Tensor w = audio_window_columns(s, t);
      REQUIRE(w.shape() == Shape{64, kWindowColumns});
      int64_t k0 = 0;
      while (s.column_time(k0) <= t - kWindowHalfSpan) ++k0;
      for (int64_t j = 0; j < kWindowColumns; ++j)
        for (int64_t m = 0; m < 64; ++m) CHECK(w.at({m, j}) == s.values.at({m, k0 + j}));
      // Every column whose center lies in the half-open span is included.
      for (int64_t k = 0; k < s.n_hops(); ++k) {
        const double c = k * hop_s;
        if (c > t - kWindowHalfSpan && c <= t + kWindowHalfSpan) {
          CHECK(k >= k0);
          CHECK(k < k0 + kWindowColumns);
        }
      }
    }
  }
  SUBCASE("t = 0 pads the columns before the stream") {
    const Tensor w = audio_window_columns(s, 0.0);
    // Column centers k·512/22050 > −0.23 s start at k = −9.
    for (int64_t j = 0; j < 9; ++j)
      for (int64_t m = 0; m < 64; ++m) CHECK(w.at({m, j}) == floor);
    for (int64_t j = 9; j < kWindowColumns; ++j)
      for (int64_t m = 0; m < 64; ++m) CHECK(w.at({m, j}) == s.values.at({m, j - 9}));
  }
  SUBCASE("silence normalizes to zeros") {
    const LogMelSpec quiet = logmel(std::vector<double>(22050 * 2, 0.0));
    const Tensor img = frame_audio_windows(quiet, 25.0, 0, 12, 32);
    CHECK(img.shape() == Shape{12, 32, 32});
    for (double v : img.values()) CHECK(v == 0.0);
  }
  SUBCASE("clip images span [0, 1]") {
    const Tensor img = frame_audio_windows(s, 25.0, 24, 12, 64);
    double lo = 1.0, hi = 0.0;
    for (double v : img.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("crop_faces") {
  const int64_t t_len = 3;
  Tensor frames({t_len, 3, 64, 64});
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 64 * 64; ++i) frames[((t * 3 + c) * 64 * 64) + i] = 0.2 * (c + 1);

  SUBCASE("64x64 box upsampled to 128x128") {
    const FaceCrops fc = crop_faces(frames, {box_track(0, t_len, {0, 0, 64, 64})}, 128);
    CHECK(fc.crops.shape() == Shape{t_len, 3, 128, 128});
    for (int64_t c = 0; c < 3; ++c) CHECK(fc.crops.at({1, c, 70, 5}) == doctest::Approx(0.2 * (c + 1)));
  }
  SUBCASE("full-frame box at the frame size is the identity") {
    Tensor ramp = frames;
    for (int64_t i = 0; i < ramp.numel(); ++i) ramp[i] = static_cast<double>(i % 97) / 97.0;
    const FaceCrops fc = crop_faces(ramp, {box_track(0, t_len, {0, 0, 64, 64})}, 64);
    for (int64_t i = 0; i < ramp.numel(); ++i) CHECK(fc.crops[i] == doctest::Approx(ramp[i]).epsilon(1e-12));
  }
  SUBCASE("absent face gives zero crop and a cleared flag") {
    FaceTrack tr = box_track(4, t_len, {8, 8, 16, 16});
    tr.boxes[1].reset();
    const FaceCrops fc = crop_faces(frames, {tr}, 32);
    CHECK(fc.present.at({0, 0}) == 1.0);
    CHECK(fc.present.at({1, 0}) == 0.0);
    for (int64_t i = 0; i < 3 * 32 * 32; ++i) CHECK(fc.crops[1 * 3 * 32 * 32 + i] == 0.0);
  }
  SUBCASE("faces ordered by face_id") {
    const FaceCrops fc =
        crop_faces(frames, {box_track(7, t_len, {0, 0, 8, 8}), box_track(2, t_len, {8, 8, 8, 8})}, 16);
    CHECK(fc.face_ids == std::vector<int>{2, 7});
    CHECK(fc.crops.shape() == Shape{2 * t_len, 3, 16, 16});
  }
}

TEST_CASE("fixation_density") {
  SUBCASE("center fixation is symmetric with a central argmax") {
    const SaliencyMap m = fixation_density(repeat(128.0, 128.0, 1), 256, 256, 16.0);
    double best = 0.0;
    for (double v : m.values().values()) best = std::max(best, v);
    for (int64_t r : {127, 128})
      for (int64_t c : {127, 128}) CHECK(m.at(r, c) == best);
    for (int64_t r = 0; r < 256; ++r)
      for (int64_t c = 0; c < 256; ++c) CHECK(std::abs(m.at(r, c) - m.at(c, 255 - r)) < 1e-15);
  }
  SUBCASE("coincident fixations equal one fixation") {
    const SaliencyMap one = fixation_density(repeat(30.3, 12.7, 1), 64, 64, 4.0);
    const SaliencyMap two = fixation_density(repeat(30.3, 12.7, 2), 64, 64, 4.0);
    for (int64_t i = 0; i < one.values().numel(); ++i) CHECK(std::abs(one.values()[i] - two.values()[i]) < 1e-15);
  }
  SUBCASE("sigma 2 keeps 95% of the mass within radius 6") {
    const SaliencyMap m = fixation_density(repeat(10.0, 10.0, 1), 64, 64, 2.0);
    double inside = 0.0;
    for (int64_t r = 0; r < 64; ++r)
      for (int64_t c = 0; c < 64; ++c)
        if (std::hypot(c + 0.5 - 10.0, r + 0.5 - 10.0) <= 6.0) inside += m.at(r, c);
    CHECK(inside >= 0.95);
  }
  SUBCASE("empty gives uniform") {
    const SaliencyMap m = fixation_density(std::vector<FixationPoint>{}, 8, 8, 1.0);
    for (double v : m.values().values()) CHECK(v == 1.0 / 64);
  }
  SUBCASE("default sigma is width / 16") {
    const auto f = repeat(20.0, 40.0, 1);
    CHECK(fixation_density(f, 64, 64) == fixation_density(f, 64, 64, 4.0));
  }
  SUBCASE("always a distribution") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 47.999);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<FixationPoint> f;
      for (int i = 0; i < 1 + trial % 7; ++i) f.push_back({u(rng), u(rng), i});
      const SaliencyMap m = fixation_density(f, 48, 48, 0.5 + trial * 0.1);
      CHECK(std::abs(m.sum() - 1.0) < 1e-6);
      for (double v : m.values().values()) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("gt_face_weights") {
  const std::vector<FaceTrack> two = {box_track(0, 1, {0, 0, 10, 10}), box_track(1, 1, {20, 20, 10, 10})};
  SUBCASE("counts 5 and 15") {
    auto f = repeat(5, 5, 5);
    const auto g = repeat(25, 25, 15, 100);
    f.insert(f.end(), g.begin(), g.end());
    f.push_back({40, 40, 999});  // outside every box
    const FaceWeightTarget w = gt_face_weights(f, two, 0);
    CHECK(w.supervised);
    CHECK(w.weights == std::vector<double>{0.25, 0.75});
    CHECK(w.counts == std::vector<int64_t>{5, 15});
  }
  SUBCASE("no fixation in any box") {
    const FaceWeightTarget w = gt_face_weights(repeat(50, 50, 4), two, 0);
    CHECK_FALSE(w.supervised);
  }
  SUBCASE("single face") {
    const FaceWeightTarget w = gt_face_weights(repeat(3, 3, 2), {two[0]}, 0);
    CHECK(w.weights == std::vector<double>{1.0});
  }
  SUBCASE("box edge is outside, overlap goes to the smaller box") {
    const std::vector<FaceTrack> nested = {box_track(0, 1, {0, 0, 30, 30}), box_track(1, 1, {10, 10, 5, 5})};
    CHECK_FALSE(gt_face_weights(repeat(0, 5, 1), {nested[0]}, 0).supervised);
    const FaceWeightTarget w = gt_face_weights(repeat(12, 12, 3), nested, 0);
    CHECK(w.weights == std::vector<double>{0.0, 1.0});
  }
  SUBCASE("weights sum to one") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 32.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<FixationPoint> f;
      for (int i = 0; i < 13; ++i) f.push_back({u(rng), u(rng), i});
      const FaceWeightTarget w = gt_face_weights(f, two, 0);
      if (!w.supervised) continue;
      double s = 0.0;
      for (double v : w.weights) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("video encode and decode") {
  TempDir dir("video");
  SUBCASE("10 s at 25 fps decodes to 250 frames and carries audio") {
    const int64_t w = 160, h = 96, n = 250;
    std::vector<uint8_t> rgb(static_cast<size_t>(n * 3 * w * h));
    for (size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<uint8_t>((i / 7) % 251);
    const auto tone = sine(440.0, 44100.0, 441000, 0.4);
    encode_video(dir / "ten.mp4", rgb, w, h, 25.0, tone, 44100);
    const DecodedVideo v = decode_video(dir / "ten.mp4", 64);
    CHECK(v.frame_count() == 250);
    CHECK(v.frame_rate == doctest::Approx(25.0));
    CHECK(v.frames(0, 12).shape() == Shape{12, 3, 64, 64});
    const AudioTrack a = decode_audio(dir / "ten.mp4");
    CHECK(a.sample_rate == 44100.0);
    CHECK(std::abs(static_cast<double>(a.samples.size()) - 441000.0) < 4096.0);
  }
  SUBCASE("1920x1080 frames become 256x256") {
    std::vector<uint8_t> rgb(static_cast<size_t>(2 * 3 * 1920 * 1080), 128);
    encode_video(dir / "hd.mp4", rgb, 1920, 1080, 25.0);
    const DecodedVideo v = decode_video(dir / "hd.mp4");
    CHECK(v.resolution == 256);
    CHECK(v.source_width == 1920);
    CHECK(v.source_height == 1080);
    CHECK(v.frame_count() == 2);
    CHECK(decode_audio(dir / "hd.mp4").samples.empty());
  }
  SUBCASE("corrupt and missing files name the path") {
    const auto bad = dir / "corrupt.mp4";
    std::ofstream(bad) << "this is not a video container";
    try {
      decode_video(bad);
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(std::string(e.what()).find(bad.string()) != std::string::npos);
    }
    CHECK_THROWS_AS(decode_video(dir / "missing.mp4"), IngestError);
  }
}

TEST_CASE("dataset scan and ingest") {
  TempDir dir("dataset");
  write_synthetic_dataset(dir.path(), {30, 24}, 320, 240, 4);
  const DatasetLayout layout = scan_dataset(dir.path());
  REQUIRE(layout.videos.size() == 2);

  IngestOptions opt;
  opt.resolution = 64;
  const auto clips = ingest_video(layout.videos[0], opt);
  CHECK(clips.size() == 2);
  for (const ClipSample& c : clips) {
    CHECK(validate_clip(c).empty());
    CHECK(c.frames.shape() == Shape{12, 3, 64, 64});
    CHECK(c.audio_windows.shape() == Shape{12, 64, 64});
    CHECK(c.face_tracks.size() == 2);
  }
  CHECK(clips[1].first_frame == 12);

  SUBCASE("archive round trip") {
    write_clip_archive(dir / "archive", clips);
    const auto back = read_clip_archive(dir / "archive");
    REQUIRE(back.size() == clips.size());
    CHECK(back[1].video_id == clips[1].video_id);
    CHECK(back[1].gt_fixations.size() == clips[1].gt_fixations.size());
    CHECK(std::abs(back[0].frames[1000] - clips[0].frames[1000]) < 1e-6);
    CHECK(validate_clip(back[0]).empty());
  }
  SUBCASE("missing fixation log") {
    const auto gone = layout.videos[1].fixations;
    std::filesystem::remove(gone);
    try {
      scan_dataset(dir.path());
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(std::string(e.what()).find(gone.string()) != std::string::npos);
    }
  }
}
