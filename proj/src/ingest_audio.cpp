// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "avsal/ingest.hpp"

namespace avsal {
namespace {

constexpr int kSincZeroCrossings = 24;
constexpr double kKaiserBeta = 8.6;
// Passband edge relative to the lower Nyquist rate.
constexpr double kRolloff = 0.94;
constexpr double kTableSteps = 512.0;

}  // namespace

std::vector<double> resample_audio(std::span<const double> waveform, double source_rate, double target_rate) {
  if (waveform.empty()) throw IngestError("cannot resample an empty waveform");
  if (!(source_rate > 0.0) || !(target_rate > 0.0)) throw IngestError("sample rates must be positive");
  const int64_t n_in = static_cast<int64_t>(waveform.size());
  const int64_t n_out = std::llround(static_cast<double>(n_in) * target_rate / source_rate);
  if (source_rate == target_rate) return {waveform.begin(), waveform.end()};

  // Cutoff in cycles per input sample.
  const double cutoff = 0.5 * kRolloff * std::min(1.0, target_rate / source_rate);
  const double half_width = kSincZeroCrossings / (2.0 * cutoff);

  // Windowed-sinc kernel tabulated over |d| in [0, half_width] and linearly
  // interpolated between entries.
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  const int64_t entries = static_cast<int64_t>(std::ceil(half_width * kTableSteps)) + 2;
  std::vector<double> table(static_cast<size_t>(entries));
  for (int64_t i = 0; i < entries; ++i) {
    const double d = static_cast<double>(i) / kTableSteps;
    const double r = std::min(1.0, d / half_width);
    const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double arg = 2.0 * cutoff * d;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    table[static_cast<size_t>(i)] = d >= half_width ? 0.0 : window * sinc;
  }
  auto kernel = [&table](double d) {
    const double p = std::abs(d) * kTableSteps;
    const size_t i = static_cast<size_t>(p);
    const double f = p - static_cast<double>(i);
    return table[i] * (1.0 - f) + table[i + 1] * f;
  };

  std::vector<double> out(static_cast<size_t>(n_out));
  for (int64_t m = 0; m < n_out; ++m) {
    const double center = static_cast<double>(m) * source_rate / target_rate;
    const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center - half_width)));
    const int64_t hi = std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(center + half_width)));
    double acc = 0.0, norm = 0.0;
    for (int64_t k = lo; k <= hi; ++k) {
      const double weight = kernel(static_cast<double>(k) - center);
      acc += weight * waveform[static_cast<size_t>(k)];
      norm += weight;
    }
    // Unit DC gain at every output position, including the edges.
    out[static_cast<size_t>(m)] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(const MelConfig& config) {
  const int64_t bins = config.n_fft / 2 + 1;
  const double lo = hz_to_mel(config.f_min), hi = hz_to_mel(config.f_max);
  std::vector<double> edges(static_cast<size_t>(config.n_mels + 2));
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(config.n_mels + 1));
  }
  Tensor fb({config.n_mels, bins}, 0.0);
  for (int64_t m = 0; m < config.n_mels; ++m) {
    const double left = edges[static_cast<size_t>(m)], mid = edges[static_cast<size_t>(m + 1)],
                 right = edges[static_cast<size_t>(m + 2)];
    for (int64_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.n_fft);
      double v = 0.0;
      if (f > left && f <= mid) v = (f - left) / (mid - left);
      else if (f > mid && f < right) v = (right - f) / (right - mid);
      fb[m * bins + k] = v;
    }
  }
  return fb;
}

LogMelSpec logmel(std::span<const double> waveform, const MelConfig& config) {
  const int64_t n = static_cast<int64_t>(waveform.size());
  const int64_t n_fft = config.n_fft, hop = config.hop_length, bins = n_fft / 2 + 1;
  const int64_t hops = n / hop + 1;
  const Tensor fb = mel_filterbank(config);

  std::vector<double> window(static_cast<size_t>(n_fft));
  for (int64_t i = 0; i < n_fft; ++i) {
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_fft));
  }

  double* frame = fftw_alloc_real(static_cast<size_t>(n_fft));
  fftw_complex* spectrum = fftw_alloc_complex(static_cast<size_t>(bins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), frame, spectrum, FFTW_ESTIMATE);

  LogMelSpec spec;
  spec.sample_rate = config.sample_rate;
  spec.hop_length = hop;
  spec.values = Tensor({config.n_mels, hops}, 0.0);
  std::vector<double> power(static_cast<size_t>(bins));
  for (int64_t h = 0; h < hops; ++h) {
    // Column h is centered on sample h·hop; the signal is zero-padded by
    // n_fft/2 on both sides.
    const int64_t start = h * hop - n_fft / 2;
    for (int64_t i = 0; i < n_fft; ++i) {
      const int64_t s = start + i;
      frame[i] = (s >= 0 && s < n) ? waveform[static_cast<size_t>(s)] * window[static_cast<size_t>(i)] : 0.0;
    }
    fftw_execute(plan);
    for (int64_t k = 0; k < bins; ++k) power[static_cast<size_t>(k)] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    for (int64_t m = 0; m < config.n_mels; ++m) {
      const double* row = fb.data() + m * bins;
      double e = 0.0;
      for (int64_t k = 0; k < bins; ++k) e += row[k] * power[static_cast<size_t>(k)];
      spec.values[m * hops + h] = std::log(e + kLogFloor);
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(spectrum);
  fftw_free(frame);
  return spec;
}

Tensor audio_window_columns(const LogMelSpec& spec, double frame_time) {
  const int64_t mels = spec.n_mels(), hops = spec.n_hops();
  const double position = (frame_time - kWindowHalfSpan) * spec.sample_rate / static_cast<double>(spec.hop_length);
  const int64_t first = static_cast<int64_t>(std::floor(position)) + 1;
  Tensor out({mels, kWindowColumns}, std::log(kLogFloor));
  for (int64_t c = 0; c < kWindowColumns; ++c) {
    const int64_t k = first + c;
    if (k < 0 || k >= hops) continue;
    for (int64_t m = 0; m < mels; ++m) out[m * kWindowColumns + c] = spec.values[m * hops + k];
  }
  return out;
}

Tensor frame_audio_windows(const LogMelSpec& spec, double frame_rate, int64_t first, int64_t count, int64_t size) {
  if (!(frame_rate > 0.0)) throw IngestError("frame rate must be positive");
  Tensor out({count, size, size});
  const int64_t plane = size * size;
  for (int64_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(first + i) / frame_rate;
    Tensor cols = audio_window_columns(spec, t);
    const Tensor image = resize_bilinear(cols.reshaped({1, cols.dim(0), cols.dim(1)}), size, size);
    std::copy(image.values().begin(), image.values().end(), out.data() + i * plane);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : out.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (double& v : out.values()) v = (v - lo) / (hi - lo);
  } else {
    out.fill(0.0);
  }
  return out;
}

}  // namespace avsal
