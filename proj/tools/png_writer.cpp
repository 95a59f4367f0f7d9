// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "png_writer.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "avsal/errors.hpp"

namespace avsal::cli {

void write_map_png(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("PNG export expects an (H, W) map");
  const int64_t h = map.dim(0), w = map.dim(1);
  double top = 0.0;
  for (double v : map.values()) top = std::max(top, v);
  std::vector<png_byte> pixels(static_cast<size_t>(h * w), 0);
  if (top > 0.0) {
    for (int64_t i = 0; i < h * w; ++i)
      pixels[static_cast<size_t>(i)] = static_cast<png_byte>(std::lround(255.0 * std::max(map[i], 0.0) / top));
  }

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw ValidationError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw ValidationError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ValidationError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t r = 0; r < h; ++r) png_write_row(png, pixels.data() + r * w);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace avsal::cli
