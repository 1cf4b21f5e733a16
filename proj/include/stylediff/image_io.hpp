/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stylediff/errors.hpp"
#include "stylediff/image.hpp"

#ifndef STYLEDIFF_STB_IMAGE_INCLUDED
#define STYLEDIFF_STB_IMAGE_INCLUDED
#if defined(__GNUC__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wunused-function"
#pragma GCC diagnostic ignored "-Wmissing-field-initializers"
#pragma GCC diagnostic ignored "-Wsign-compare"
#endif
#define STB_IMAGE_STATIC
#define STB_IMAGE_IMPLEMENTATION
#define STBI_ONLY_PNG
#define STBI_ONLY_JPEG
#define STBI_ONLY_BMP
#include "stb_image.h"
#define STB_IMAGE_WRITE_STATIC
#define STB_IMAGE_WRITE_IMPLEMENTATION
#include "stb_image_write.h"
#if defined(__GNUC__)
#pragma GCC diagnostic pop
#endif
#endif

namespace stylediff {

/// Bilinear resampling with pixel-center alignment: output pixel (y, x)
/// samples the source at ((y + 0.5) * H_in / H_out - 0.5, ...), clamped to
/// the border.
inline ImageTensor resize_bilinear(const ImageTensor& src, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("resize target must be >= 1");
  if (out_h == src.height && out_w == src.width) return src;
  ImageTensor out(out_h, out_w, src.channels, 0.0, src.inverted);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  auto coord = [](int dst, double scale, int limit, int& i0, int& i1, double& frac) {
    double s = (dst + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(limit - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, limit - 1);
    frac = s - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double fy;
    coord(y, sy, src.height, y0, y1, fy);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double fx;
      coord(x, sx, src.width, x0, x1, fx);
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - fx) + src.at(y0, x1, c) * fx;
        const double bot = src.at(y1, x0, c) * (1.0 - fx) + src.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  out.normalize();
  return out;
}

/// Decode a PNG/JPEG/BMP at its native size.
inline ImageTensor load_image_native(const std::filesystem::path& path, bool grayscale) {
  int w = 0, h = 0, n = 0;
  const int want = grayscale ? 1 : 3;
  std::unique_ptr<unsigned char, void (*)(void*)> data(
      stbi_load(path.string().c_str(), &w, &h, &n, want), stbi_image_free);
  if (!data) {
    const char* why = stbi_failure_reason();
    throw IoError("cannot read image " + path.string() + (why ? std::string(": ") + why : ""));
  }
  ImageTensor img(h, w, want);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = data.get()[i] / 255.0;
  img.normalize();
  return img;
}

/// Load and resize to target_size x target_size.
inline ImageTensor load_image(const std::filesystem::path& path, int target_size, bool grayscale) {
  if (target_size < 1) throw ArgumentError("target_size must be >= 1");
  return resize_bilinear(load_image_native(path, grayscale), target_size, target_size);
}

/// round(v * 255) with halves rounded up; v is clamped to [0,1] first.
inline std::uint8_t quantize_pixel(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

/// Writes an 8-bit PNG. Inverted images are flipped back to dark-ink
/// polarity before quantization.
inline void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  img.validate();
  const ImageTensor& view = img.inverted ? invert(img) : img;
  std::vector<std::uint8_t> bytes(view.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_pixel(view.pixels[i]);
  if (!stbi_write_png(path.string().c_str(), view.width, view.height, view.channels, bytes.data(),
                      view.width * view.channels))
    throw IoError("cannot write image " + path.string());
}

}  // namespace stylediff
