// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Turns raw assets (video containers, face annotations, fixation logs) into
// ClipSamples: frame decoding and resizing, clip slicing, audio resampling,
// log-mel spectrograms, per-frame audio windows, face crops, fixation
// densities and face-weight targets.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "avsal/datamodel.hpp"

namespace avsal {

inline constexpr double kAudioRate = 22050.0;
inline constexpr int64_t kHopLength = 512;
inline constexpr int64_t kFftSize = 2048;
inline constexpr double kLogFloor = 1e-6;
inline constexpr double kWindowHalfSpan = 0.230;  // seconds on each side of a frame
inline constexpr int64_t kWindowColumns = 20;

// ---------------------------------------------------------------- media

/// RGB frames resized to a square resolution, stored as 8-bit planes.
struct DecodedVideo {
  int64_t resolution = 0;
  double frame_rate = 0.0;
  int64_t source_width = 0;
  int64_t source_height = 0;
  std::vector<uint8_t> rgb;  // count × 3 × R × R, planar per frame

  int64_t frame_count() const {
    return resolution == 0 ? 0 : static_cast<int64_t>(rgb.size()) / (3 * resolution * resolution);
  }
  /// Frames [first, first + count) as (count, 3, R, R) values in [0, 1].
  Tensor frames(int64_t first, int64_t count) const;
};

/// Decodes every frame and resizes it (aspect not preserved). Throws
/// IngestError naming the path when the file cannot be read or holds no
/// video frames.
DecodedVideo decode_video(const std::filesystem::path& path, int64_t resolution = 256);

struct AudioTrack {
  std::vector<double> samples;  // mono
  double sample_rate = 0.0;
};

/// Decodes the first audio stream, mean-downmixed to mono. A file without an
/// audio stream yields an empty track.
AudioTrack decode_audio(const std::filesystem::path& path);

/// Encodes planar 8-bit RGB frames (count × 3 × height × width) as MPEG-4
/// video into an .mp4 container, with an optional mono AAC track. Width and
/// height must be even.
void encode_video(const std::filesystem::path& path, std::span<const uint8_t> rgb, int64_t width, int64_t height,
                  double frame_rate, std::span<const double> audio = {}, int audio_rate = 44100);

// ---------------------------------------------------------------- clips

struct ClipRange {
  int64_t first = 0;
  int64_t length = 0;
};

/// Consecutive non-overlapping windows of `length` frames; the tail shorter
/// than `length` is dropped.
std::vector<ClipRange> extract_clips(int64_t frame_count, int64_t length = 12);

// ---------------------------------------------------------------- audio

/// Band-limited (Kaiser-windowed sinc) resampling to `target_rate`. Output
/// length is round(n · target / source). Throws IngestError when empty.
std::vector<double> resample_audio(std::span<const double> waveform, double source_rate,
                                   double target_rate = kAudioRate);

struct MelConfig {
  double sample_rate = kAudioRate;
  int64_t n_fft = kFftSize;
  int64_t hop_length = kHopLength;
  int64_t n_mels = 64;
  double f_min = 0.0;
  double f_max = kAudioRate / 2.0;
};

/// Triangular HTK-mel filterbank, (n_mels, n_fft/2 + 1), unit peak.
Tensor mel_filterbank(const MelConfig& config = {});
double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct LogMelSpec {
  Tensor values;  // (n_mels, n_hops)
  double sample_rate = kAudioRate;
  int64_t hop_length = kHopLength;

  int64_t n_mels() const { return values.dim(0); }
  int64_t n_hops() const { return values.dim(1); }
  /// Time of hop column k's center in seconds.
  double column_time(int64_t k) const { return static_cast<double>(k * hop_length) / sample_rate; }
};

/// Centered (zero-padded) Hann STFT power spectrum through the mel
/// filterbank, log(mel + 1e-6). n_hops = floor(len / hop) + 1.
LogMelSpec logmel(std::span<const double> waveform, const MelConfig& config = {});

/// The kWindowColumns hop columns starting at the first column whose center
/// lies after frame_time − 0.230 s; columns outside the stream hold
/// log(1e-6). Returns (n_mels, 20).
Tensor audio_window_columns(const LogMelSpec& spec, double frame_time);

/// Per-frame spectrogram images for frames [first, first + count) at
/// `frame_rate`, each resized to (size, size) and min-max normalized to
/// [0, 1] jointly over the clip (constant clips become zeros).
Tensor frame_audio_windows(const LogMelSpec& spec, double frame_rate, int64_t first, int64_t count, int64_t size);

// ---------------------------------------------------------------- images

/// Bilinear resize of a (C, H, W) image to (C, out_h, out_w), pixel-center
/// aligned.
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

struct FaceCrops {
  std::vector<int> face_ids;  // ascending; defines the face order
  Tensor crops;               // (N·T, 3, S, S), row n·T + t, values in [0, 1]
  Tensor present;             // (T, N) of 0/1; absent rows of `crops` are zero
};

/// Crops every track's box at every frame and resizes it to (size, size).
/// Faces are ordered by face_id.
FaceCrops crop_faces(const Tensor& frames, const std::vector<FaceTrack>& tracks, int64_t size);

/// Isotropic Gaussian (std `sigma`) around every fixation, sampled at pixel
/// centers and normalized to unit mass. No fixations gives the uniform map.
SaliencyMap fixation_density(std::span<const FixationPoint> fixations, int64_t height, int64_t width, double sigma);
/// Default sigma = width / 16.
SaliencyMap fixation_density(std::span<const FixationPoint> fixations, int64_t height, int64_t width);

struct FaceWeightTarget {
  std::vector<double> weights;  // per track, in the order given; zero for absent faces
  std::vector<int64_t> counts;  // fixations assigned to each track
  bool supervised = false;      // false when no fixation fell inside any box
};

/// Fraction of in-box fixations per face at frame t. A fixation strictly
/// inside several boxes goes to the smallest one.
FaceWeightTarget gt_face_weights(std::span<const FixationPoint> fixations, const std::vector<FaceTrack>& tracks,
                                 int64_t t);

// ---------------------------------------------------------------- datasets

struct VideoEntry {
  std::string id;
  std::filesystem::path video;
  std::filesystem::path faces;
  std::filesystem::path fixations;
};

/// root/videos/<id>.mp4, root/faces/<id>.json, root/fixations/<id>.csv.
struct DatasetLayout {
  std::filesystem::path root;
  std::vector<VideoEntry> videos;
};

/// Scans root/videos and checks that every companion file exists. Throws
/// IngestError listing every missing path.
DatasetLayout scan_dataset(const std::filesystem::path& root);

/// Face annotation JSON:
///   {"faces": [{"face_id": 0, "frames": [{"frame": 3, "box": [x, y, w, h],
///     "talking": true, "landmarks": {"eyes": [[x, y], ...], ...}}, ...]}]}
/// Coordinates are in source pixels and rescaled to the model frame.
std::vector<FaceTrack> load_face_tracks(const std::filesystem::path& path, int64_t frame_count, double scale_x,
                                        double scale_y);

/// CSV with header frame,subject,x,y in source pixels; returns per-frame
/// fixations rescaled to the model frame. Points outside the frame are
/// dropped.
std::vector<std::vector<FixationPoint>> load_fixations(const std::filesystem::path& path, int64_t frame_count,
                                                       double scale_x, double scale_y, int64_t resolution);

/// Slices tracks / fixations to one clip's frame range.
std::vector<FaceTrack> slice_tracks(const std::vector<FaceTrack>& tracks, int64_t first, int64_t count);

struct IngestOptions {
  int64_t resolution = 256;
  int64_t clip_length = 12;
  double density_sigma = 0.0;  // 0 selects resolution / 16
  MelConfig mel;
};

/// Builds every clip of one video. An empty `faces` path gives clips
/// without tracks; an empty `fixations` path gives no fixations and uniform
/// densities.
std::vector<ClipSample> ingest_video(const VideoEntry& entry, const IngestOptions& options);

// ---------------------------------------------------------------- archives

/// Writes clip_NNNN/{frames,audio,density}.bin tensor files, a per-clip
/// annotations.json (face tracks and fixations in clip-relative frames) and
/// a top-level manifest.json mapping each clip to its source video and
/// frame range.
void write_clip_archive(const std::filesystem::path& dir, std::span<const ClipSample> clips);
/// Reads an archive back. Densities are renormalized after the float32
/// round trip. Throws ValidationError on missing or malformed files.
std::vector<ClipSample> read_clip_archive(const std::filesystem::path& dir);

}  // namespace avsal
