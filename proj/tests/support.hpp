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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "stylediff/stylediff.hpp"

namespace stylediff::testing {

inline std::filesystem::path asset(const std::string& rel) {
  return std::filesystem::path(STYLEDIFF_TEST_ASSETS) / rel;
}

inline std::filesystem::path font(const std::string& file) { return asset("fonts/" + file); }

inline ImageTensor glyph(const std::string& font_file, char32_t cp, int canvas) {
  GlyphSpec s;
  s.font_path = font(font_file);
  s.codepoint = cp;
  s.canvas = canvas;
  return rasterize_glyph(s);
}

inline ImageTensor random_image(int h, int w, std::uint64_t seed, int channels = 1) {
  ImageTensor img(h, w, channels);
  detail::SplitMix64 rng{seed};
  for (auto& v : img.pixels) v = snap_pixel(rng.uniform());
  return img;
}

/// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stylediff_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Wraps a FeatureExtractor and counts forward passes.
template <typename T>
class CountingExtractor {
 public:
  using scalar_type = T;
  using Pass = typename FeatureExtractor<T>::Pass;

  explicit CountingExtractor(const FeatureExtractor<T>& inner) : inner_(inner) {}

  Pass forward(const PixelGrid<T>& px, const LayerList& layers) const {
    ++forwards;
    return inner_.forward(px, layers);
  }
  LayerFeatures<T> features(const Pass& p, const LayerList& layers) const { return inner_.features(p, layers); }
  LayerFeatures<T> extract_features(const ImageTensor& img, const LayerList& layers) const {
    const auto buf = to_scalar(img);
    return features(forward(FeatureExtractor<T>::grid_of(img, buf), layers), layers);
  }
  std::vector<T> input_gradient(const Pass& p, const LayerFeatures<T>& g) const { return inner_.input_gradient(p, g); }
  void require_layers(const LayerList& layers) const { inner_.require_layers(layers); }
  const std::string& checksum() const { return inner_.checksum(); }
  static std::vector<T> to_scalar(const ImageTensor& img) { return FeatureExtractor<T>::to_scalar(img); }

  mutable std::atomic<long> forwards{0};

 private:
  const FeatureExtractor<T>& inner_;
};

inline bool vgg16_weights_available() {
  return std::filesystem::exists(BackendDescriptor::vgg(16).weights_path());
}

}  // namespace stylediff::testing
