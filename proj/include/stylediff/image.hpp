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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stylediff/errors.hpp"

namespace stylediff {

/// Pixel values live on a dyadic grid of this spacing, which makes
/// v -> 1 - v exact in double precision (and therefore an exact involution).
inline constexpr double kPixelQuantum = 0x1p-52;

inline double snap_pixel(double v) {
  return std::ldexp(std::nearbyint(std::ldexp(v, 52)), -52);
}

/// Row-major H x W x C image with values in [0,1].
///
/// `inverted` records the polarity: false means ink is dark (0) on a light
/// background (1), which is how glyphs are loaded and saved; true means the
/// image has been flipped so ink carries high values.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 1;
  bool inverted = false;
  std::vector<double> pixels;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0, bool inv = false)
      : height(h), width(w), channels(c), inverted(inv) {
    if (h < 1 || w < 1) throw ArgumentError("image dimensions must be >= 1");
    if (c != 1 && c != 3) throw ArgumentError("image channels must be 1 or 3");
    pixels.assign(static_cast<std::size_t>(h) * w * c, snap_pixel(std::clamp(fill, 0.0, 1.0)));
  }

  std::size_t size() const noexcept { return pixels.size(); }
  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

  bool same_shape(const ImageTensor& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }

  /// Snap every value onto the pixel grid and into [0,1].
  void normalize() {
    for (auto& v : pixels) v = snap_pixel(std::clamp(v, 0.0, 1.0));
  }

  /// Throws ArgumentError when a structural or range invariant is broken.
  void validate() const {
    if (height < 1 || width < 1) throw ArgumentError("image dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw ArgumentError("image channels must be 1 or 3");
    if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
      throw ArgumentError("pixel buffer does not match image shape");
    for (double v : pixels)
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("pixel value outside [0,1]");
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

inline std::string shape_string(const ImageTensor& img) {
  return std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
         std::to_string(img.channels);
}

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ArgumentError(std::string(what) + ": image shapes differ (" + shape_string(a) + " vs " +
                        shape_string(b) + ")");
}

/// v -> 1 - v on every pixel, toggling `inverted`.
inline ImageTensor invert(const ImageTensor& img) {
  ImageTensor out = img;
  for (auto& v : out.pixels) v = 1.0 - v;
  out.inverted = !img.inverted;
  return out;
}

/// Values below `threshold` become 0, the rest 1.
inline ImageTensor binarize(const ImageTensor& img, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ArgumentError("binarize threshold must lie in (0,1)");
  ImageTensor out = img;
  for (auto& v : out.pixels) v = v < threshold ? 0.0 : 1.0;
  return out;
}

/// Mean over pixels and channels of (1 - v) for a dark-ink image, i.e. the
/// fraction of the canvas covered by ink. Inverted images are handled.
inline double ink_ratio(const ImageTensor& img) {
  double s = 0.0;
  for (double v : img.pixels) s += img.inverted ? v : 1.0 - v;
  return img.pixels.empty() ? 0.0 : s / static_cast<double>(img.pixels.size());
}

}  // namespace stylediff
