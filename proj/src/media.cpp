// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavformat/avformat.h>
#include <libavutil/imgutils.h>
#include <libavutil/opt.h>
#include <libswresample/swresample.h>
#include <libswscale/swscale.h>
}

#include <algorithm>
#include <memory>

#include "avsal/ingest.hpp"

namespace avsal {
namespace {

struct FormatCloser {
  void operator()(AVFormatContext* c) const { avformat_close_input(&c); }
};
struct CodecCloser {
  void operator()(AVCodecContext* c) const { avcodec_free_context(&c); }
};
struct FrameFree {
  void operator()(AVFrame* f) const { av_frame_free(&f); }
};
struct PacketFree {
  void operator()(AVPacket* p) const { av_packet_free(&p); }
};
struct SwsFree {
  void operator()(SwsContext* c) const { sws_freeContext(c); }
};
struct SwrFree {
  void operator()(SwrContext* c) const { swr_free(&c); }
};

using FormatPtr = std::unique_ptr<AVFormatContext, FormatCloser>;
using CodecPtr = std::unique_ptr<AVCodecContext, CodecCloser>;

std::string av_message(int code) {
  char buf[AV_ERROR_MAX_STRING_SIZE] = {};
  av_strerror(code, buf, sizeof(buf));
  return buf;
}

FormatPtr open_input(const std::filesystem::path& path) {
  AVFormatContext* raw = nullptr;
  int rc = avformat_open_input(&raw, path.c_str(), nullptr, nullptr);
  if (rc < 0) throw IngestError("cannot open " + path.string() + ": " + av_message(rc));
  FormatPtr fmt(raw);
  rc = avformat_find_stream_info(fmt.get(), nullptr);
  if (rc < 0) throw IngestError("cannot read stream info of " + path.string() + ": " + av_message(rc));
  return fmt;
}

CodecPtr open_decoder(AVStream* stream, const std::filesystem::path& path) {
  const AVCodec* codec = avcodec_find_decoder(stream->codecpar->codec_id);
  if (codec == nullptr) throw IngestError("no decoder for a stream of " + path.string());
  CodecPtr ctx(avcodec_alloc_context3(codec));
  if (avcodec_parameters_to_context(ctx.get(), stream->codecpar) < 0 || avcodec_open2(ctx.get(), codec, nullptr) < 0) {
    throw IngestError("cannot open decoder for " + path.string());
  }
  return ctx;
}

// Feeds every packet of `stream_index` (then a flush) through the decoder
// and hands each decoded frame to `sink`.
template <typename Sink>
void decode_stream(AVFormatContext* fmt, AVCodecContext* ctx, int stream_index, const std::filesystem::path& path,
                   Sink&& sink) {
  std::unique_ptr<AVPacket, PacketFree> packet(av_packet_alloc());
  std::unique_ptr<AVFrame, FrameFree> frame(av_frame_alloc());
  auto drain = [&]() {
    while (true) {
      const int rc = avcodec_receive_frame(ctx, frame.get());
      if (rc == AVERROR(EAGAIN) || rc == AVERROR_EOF) return;
      if (rc < 0) throw IngestError("decode error in " + path.string() + ": " + av_message(rc));
      sink(*frame);
      av_frame_unref(frame.get());
    }
  };
  while (true) {
    const int rc = av_read_frame(fmt, packet.get());
    if (rc == AVERROR_EOF) break;
    if (rc < 0) throw IngestError("read error in " + path.string() + ": " + av_message(rc));
    if (packet->stream_index == stream_index) {
      const int sent = avcodec_send_packet(ctx, packet.get());
      av_packet_unref(packet.get());
      if (sent < 0 && sent != AVERROR(EAGAIN)) {
        throw IngestError("decode error in " + path.string() + ": " + av_message(sent));
      }
      drain();
    } else {
      av_packet_unref(packet.get());
    }
  }
  avcodec_send_packet(ctx, nullptr);
  drain();
}

}  // namespace

Tensor DecodedVideo::frames(int64_t first, int64_t count) const {
  if (first < 0 || count < 0 || first + count > frame_count()) throw ShapeError("frame range out of bounds");
  const int64_t one = 3 * resolution * resolution;
  Tensor out({count, 3, resolution, resolution});
  const uint8_t* src = rgb.data() + first * one;
  for (int64_t i = 0; i < count * one; ++i) out[i] = static_cast<double>(src[i]) / 255.0;
  return out;
}

DecodedVideo decode_video(const std::filesystem::path& path, int64_t resolution) {
  if (!std::filesystem::is_regular_file(path)) throw IngestError("video file not found: " + path.string());
  av_log_set_level(AV_LOG_FATAL);  // failures surface as IngestError
  FormatPtr fmt = open_input(path);
  const int index = av_find_best_stream(fmt.get(), AVMEDIA_TYPE_VIDEO, -1, -1, nullptr, 0);
  if (index < 0) throw IngestError("no video stream in " + path.string());
  AVStream* stream = fmt->streams[index];
  CodecPtr ctx = open_decoder(stream, path);

  DecodedVideo out;
  out.resolution = resolution;
  AVRational rate = stream->avg_frame_rate.num > 0 ? stream->avg_frame_rate : stream->r_frame_rate;
  out.frame_rate = rate.den > 0 && rate.num > 0 ? av_q2d(rate) : 25.0;

  std::unique_ptr<SwsContext, SwsFree> sws;
  std::vector<uint8_t> packed(static_cast<size_t>(3 * resolution * resolution));
  const int r = static_cast<int>(resolution);
  decode_stream(fmt.get(), ctx.get(), index, path, [&](const AVFrame& frame) {
    if (!sws) {
      out.source_width = frame.width;
      out.source_height = frame.height;
      sws.reset(sws_getContext(frame.width, frame.height, static_cast<AVPixelFormat>(frame.format), r, r,
                               AV_PIX_FMT_RGB24, SWS_BILINEAR, nullptr, nullptr, nullptr));
      if (!sws) throw IngestError("cannot convert frames of " + path.string());
    }
    uint8_t* dst[4] = {packed.data(), nullptr, nullptr, nullptr};
    int dst_stride[4] = {3 * r, 0, 0, 0};
    sws_scale(sws.get(), frame.data, frame.linesize, 0, frame.height, dst, dst_stride);
    const size_t base = out.rgb.size(), plane = static_cast<size_t>(r) * static_cast<size_t>(r);
    out.rgb.resize(base + 3 * plane);
    for (size_t p = 0; p < plane; ++p)
      for (size_t c = 0; c < 3; ++c) out.rgb[base + c * plane + p] = packed[p * 3 + c];
  });
  if (out.frame_count() == 0) throw IngestError("no decodable frames in " + path.string());
  return out;
}

AudioTrack decode_audio(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IngestError("audio file not found: " + path.string());
  av_log_set_level(AV_LOG_FATAL);  // failures surface as IngestError
  FormatPtr fmt = open_input(path);
  const int index = av_find_best_stream(fmt.get(), AVMEDIA_TYPE_AUDIO, -1, -1, nullptr, 0);
  AudioTrack out;
  if (index < 0) return out;
  CodecPtr ctx = open_decoder(fmt->streams[index], path);
  out.sample_rate = ctx->sample_rate;

  std::unique_ptr<SwrContext, SwrFree> swr;
  int channels = 0;
  decode_stream(fmt.get(), ctx.get(), index, path, [&](const AVFrame& frame) {
    if (!swr) {
      channels = frame.channels;
      const int64_t layout = frame.channel_layout != 0 ? static_cast<int64_t>(frame.channel_layout)
                                                       : av_get_default_channel_layout(channels);
      // Sample-format conversion only; channels are averaged below.
      swr.reset(swr_alloc_set_opts(nullptr, layout, AV_SAMPLE_FMT_DBLP, frame.sample_rate, layout,
                                   static_cast<AVSampleFormat>(frame.format), frame.sample_rate, 0, nullptr));
      if (!swr || swr_init(swr.get()) < 0) throw IngestError("cannot convert audio of " + path.string());
    }
    std::vector<std::vector<double>> planes(static_cast<size_t>(channels),
                                            std::vector<double>(static_cast<size_t>(frame.nb_samples)));
    std::vector<uint8_t*> ptrs;
    for (auto& p : planes) ptrs.push_back(reinterpret_cast<uint8_t*>(p.data()));
    const int got = swr_convert(swr.get(), ptrs.data(), frame.nb_samples,
                                const_cast<const uint8_t**>(frame.extended_data), frame.nb_samples);
    if (got < 0) throw IngestError("audio conversion failed for " + path.string());
    for (int i = 0; i < got; ++i) {
      double s = 0.0;
      for (const auto& p : planes) s += p[static_cast<size_t>(i)];
      out.samples.push_back(s / static_cast<double>(channels));
    }
  });
  return out;
}

namespace {

struct OutputCloser {
  void operator()(AVFormatContext* c) const {
    if (c->pb != nullptr && !(c->oformat->flags & AVFMT_NOFILE)) avio_closep(&c->pb);
    avformat_free_context(c);
  }
};

// Sends `frame` (nullptr flushes) and writes every packet the encoder emits.
void encode_and_write(AVFormatContext* fmt, AVCodecContext* ctx, AVStream* stream, AVFrame* frame,
                      const std::filesystem::path& path) {
  if (avcodec_send_frame(ctx, frame) < 0) throw IngestError("encoder rejected a frame for " + path.string());
  std::unique_ptr<AVPacket, PacketFree> packet(av_packet_alloc());
  while (true) {
    const int rc = avcodec_receive_packet(ctx, packet.get());
    if (rc == AVERROR(EAGAIN) || rc == AVERROR_EOF) return;
    if (rc < 0) throw IngestError("encoding failed for " + path.string() + ": " + av_message(rc));
    // Video packets last one tick of the codec time base; without it the
    // muxer gives the final frame zero duration and demuxers drop it.
    if (packet->duration == 0 && ctx->codec_type == AVMEDIA_TYPE_VIDEO) packet->duration = 1;
    av_packet_rescale_ts(packet.get(), ctx->time_base, stream->time_base);
    packet->stream_index = stream->index;
    if (av_interleaved_write_frame(fmt, packet.get()) < 0) throw IngestError("cannot write " + path.string());
  }
}

}  // namespace

void encode_video(const std::filesystem::path& path, std::span<const uint8_t> rgb, int64_t width, int64_t height,
                  double frame_rate, std::span<const double> audio, int audio_rate) {
  if (width % 2 != 0 || height % 2 != 0) throw IngestError("encode_video needs even frame sizes");
  const int64_t plane = width * height;
  const int64_t count = static_cast<int64_t>(rgb.size()) / (3 * plane);
  if (count == 0) throw IngestError("encode_video got no frames");
  av_log_set_level(AV_LOG_FATAL);  // failures surface as IngestError

  AVFormatContext* raw = nullptr;
  if (avformat_alloc_output_context2(&raw, nullptr, "mp4", path.c_str()) < 0 || raw == nullptr) {
    throw IngestError("cannot create " + path.string());
  }
  std::unique_ptr<AVFormatContext, OutputCloser> fmt(raw);

  const AVCodec* vcodec = avcodec_find_encoder(AV_CODEC_ID_MPEG4);
  if (vcodec == nullptr) throw IngestError("MPEG-4 encoder unavailable");
  AVStream* vstream = avformat_new_stream(fmt.get(), nullptr);
  CodecPtr vctx(avcodec_alloc_context3(vcodec));
  const AVRational rate = av_d2q(frame_rate, 100000);
  vctx->width = static_cast<int>(width);
  vctx->height = static_cast<int>(height);
  vctx->time_base = av_inv_q(rate);
  vctx->framerate = rate;
  vctx->pix_fmt = AV_PIX_FMT_YUV420P;
  vctx->gop_size = 12;
  vctx->bit_rate = 4000000;
  if (fmt->oformat->flags & AVFMT_GLOBALHEADER) vctx->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
  if (avcodec_open2(vctx.get(), vcodec, nullptr) < 0) throw IngestError("cannot open MPEG-4 encoder");
  avcodec_parameters_from_context(vstream->codecpar, vctx.get());
  vstream->time_base = vctx->time_base;

  AVStream* astream = nullptr;
  CodecPtr actx;
  if (!audio.empty()) {
    const AVCodec* acodec = avcodec_find_encoder(AV_CODEC_ID_AAC);
    if (acodec == nullptr) throw IngestError("AAC encoder unavailable");
    astream = avformat_new_stream(fmt.get(), nullptr);
    actx.reset(avcodec_alloc_context3(acodec));
    actx->sample_fmt = AV_SAMPLE_FMT_FLTP;
    actx->sample_rate = audio_rate;
    actx->channel_layout = AV_CH_LAYOUT_MONO;
    actx->channels = 1;
    actx->bit_rate = 128000;
    actx->time_base = AVRational{1, audio_rate};
    if (fmt->oformat->flags & AVFMT_GLOBALHEADER) actx->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
    if (avcodec_open2(actx.get(), acodec, nullptr) < 0) throw IngestError("cannot open AAC encoder");
    avcodec_parameters_from_context(astream->codecpar, actx.get());
    astream->time_base = actx->time_base;
  }

  if (avio_open(&fmt->pb, path.c_str(), AVIO_FLAG_WRITE) < 0) throw IngestError("cannot write " + path.string());
  if (avformat_write_header(fmt.get(), nullptr) < 0) throw IngestError("cannot write header of " + path.string());

  std::unique_ptr<SwsContext, SwsFree> sws(sws_getContext(static_cast<int>(width), static_cast<int>(height),
                                                          AV_PIX_FMT_RGB24, static_cast<int>(width),
                                                          static_cast<int>(height), AV_PIX_FMT_YUV420P, SWS_BILINEAR,
                                                          nullptr, nullptr, nullptr));
  std::unique_ptr<AVFrame, FrameFree> frame(av_frame_alloc());
  frame->format = AV_PIX_FMT_YUV420P;
  frame->width = static_cast<int>(width);
  frame->height = static_cast<int>(height);
  av_frame_get_buffer(frame.get(), 0);
  std::vector<uint8_t> packed(static_cast<size_t>(3 * plane));
  for (int64_t i = 0; i < count; ++i) {
    const uint8_t* src = rgb.data() + i * 3 * plane;
    for (int64_t p = 0; p < plane; ++p)
      for (int64_t c = 0; c < 3; ++c) packed[static_cast<size_t>(p * 3 + c)] = src[c * plane + p];
    av_frame_make_writable(frame.get());
    const uint8_t* in[4] = {packed.data(), nullptr, nullptr, nullptr};
    const int in_stride[4] = {static_cast<int>(3 * width), 0, 0, 0};
    sws_scale(sws.get(), in, in_stride, 0, static_cast<int>(height), frame->data, frame->linesize);
    frame->pts = i;
    encode_and_write(fmt.get(), vctx.get(), vstream, frame.get(), path);
  }
  encode_and_write(fmt.get(), vctx.get(), vstream, nullptr, path);

  if (astream != nullptr) {
    std::unique_ptr<AVFrame, FrameFree> af(av_frame_alloc());
    const int chunk = actx->frame_size > 0 ? actx->frame_size : 1024;
    int64_t pts = 0;
    for (size_t pos = 0; pos < audio.size(); pos += static_cast<size_t>(chunk)) {
      const int n = static_cast<int>(std::min<size_t>(static_cast<size_t>(chunk), audio.size() - pos));
      af->nb_samples = chunk;
      af->format = AV_SAMPLE_FMT_FLTP;
      af->channel_layout = AV_CH_LAYOUT_MONO;
      af->channels = 1;
      af->sample_rate = audio_rate;
      av_frame_get_buffer(af.get(), 0);
      float* dst = reinterpret_cast<float*>(af->data[0]);
      for (int i = 0; i < chunk; ++i) dst[i] = i < n ? static_cast<float>(audio[pos + static_cast<size_t>(i)]) : 0.0f;
      af->pts = pts;
      pts += chunk;
      encode_and_write(fmt.get(), actx.get(), astream, af.get(), path);
      av_frame_unref(af.get());
    }
    encode_and_write(fmt.get(), actx.get(), astream, nullptr, path);
  }
  av_write_trailer(fmt.get());
}

}  // namespace avsal
