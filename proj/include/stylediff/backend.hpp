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
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stylediff/errors.hpp"
#include "stylediff/image.hpp"
#include "stylediff/matrix.hpp"
#include "stylediff/network.hpp"
#include "stylediff/weights.hpp"

namespace stylediff {

enum class BackendKind { vgg, tiny };

/// Which network produces features, and its declared layer contract.
struct BackendDescriptor {
  BackendKind kind = BackendKind::vgg;
  int vgg_depth = 16;                // 16 or 19
  Pooling pooling = Pooling::max;
  std::uint64_t seed = 0;            // tiny weights
  std::string weights_dir;           // empty: weights_cache_dir()
  std::string weights_sha256;        // empty: pinned digest (vgg16) / unchecked (vgg19)
  LayerList layer_names;             // shallow to deep
  std::map<std::string, int> channel_counts;

  static BackendDescriptor vgg(int depth = 16, Pooling pooling = Pooling::max);
  static BackendDescriptor tiny(std::uint64_t seed = 0, Pooling pooling = Pooling::max);
  /// "vgg16", "vgg19" or "tiny".
  static BackendDescriptor from_name(const std::string& name);

  std::string name() const {
    return kind == BackendKind::tiny ? "tiny" : "vgg" + std::to_string(vgg_depth);
  }
  bool has_layer(const std::string& l) const {
    return std::find(layer_names.begin(), layer_names.end(), l) != layer_names.end();
  }
  std::filesystem::path weights_path() const {
    const std::filesystem::path dir = weights_dir.empty() ? weights_cache_dir() : std::filesystem::path(weights_dir);
    return dir / (name() + ".sdwt");
  }
  std::string expected_sha256() const {
    if (!weights_sha256.empty()) return weights_sha256;
    return kind == BackendKind::vgg && vgg_depth == 16 ? kVgg16Sha256 : "";
  }

  friend bool operator==(const BackendDescriptor&, const BackendDescriptor&) = default;
};

namespace detail {

// conv channel plan; 0 marks a 2x2 pooling stage
inline std::vector<int> vgg_plan(int depth) {
  if (depth == 16) return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
  if (depth == 19)
    return {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512};
  throw ArgumentError("VGG depth must be 16 or 19");
}

inline std::vector<int> tiny_plan() { return {8, 0, 16, 0, 16}; }

inline void fill_layer_contract(BackendDescriptor& d, const std::vector<int>& plan, bool block_names) {
  d.layer_names.clear();
  d.channel_counts.clear();
  int block = 1, within = 0, index = 0;
  for (int ch : plan) {
    if (ch == 0) {
      ++block;
      within = 0;
      continue;
    }
    ++within;
    ++index;
    const std::string name = block_names ? "conv" + std::to_string(block) + "_" + std::to_string(within)
                                         : "conv" + std::to_string(index);
    d.layer_names.push_back(name);
    d.channel_counts[name] = ch;
  }
}

// splitmix64; fixed so tiny weights are identical across standard libraries
struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }
};

}  // namespace detail

inline BackendDescriptor BackendDescriptor::vgg(int depth, Pooling pooling) {
  BackendDescriptor d;
  d.kind = BackendKind::vgg;
  d.vgg_depth = depth;
  d.pooling = pooling;
  detail::fill_layer_contract(d, detail::vgg_plan(depth), true);
  return d;
}

inline BackendDescriptor BackendDescriptor::tiny(std::uint64_t seed, Pooling pooling) {
  BackendDescriptor d;
  d.kind = BackendKind::tiny;
  d.seed = seed;
  d.pooling = pooling;
  detail::fill_layer_contract(d, detail::tiny_plan(), false);
  return d;
}

inline BackendDescriptor BackendDescriptor::from_name(const std::string& name) {
  if (name == "vgg16") return vgg(16);
  if (name == "vgg19") return vgg(19);
  if (name == "tiny") return tiny();
  throw ArgumentError("unknown backend '" + name + "' (expected vgg16, vgg19 or tiny)");
}

/// Borrowed pixel buffer in ImageTensor layout (H x W x C, row-major).
/// Values may leave [0,1] while an optimizer explores.
template <typename T>
struct PixelGrid {
  std::span<const T> values;
  int height = 0;
  int width = 0;
  int channels = 1;
  bool inverted = false;
};

/// Per-channel input normalization applied after inversion and replication.
struct Normalization {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};
};

/// ImageNet statistics expected by the torchvision-trained VGG weights.
inline constexpr Normalization kImageNetNormalization{{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};

/// Maps images to named layer features and pulls feature gradients back to
/// pixels. Immutable after construction; const members are thread-safe.
template <typename T>
class FeatureExtractor {
 public:
  using scalar_type = T;

  struct Pass {
    typename ConvNet<T>::Tape tape;
    int height = 0;
    int width = 0;
    int channels = 1;
    bool inverted = false;
  };

  explicit FeatureExtractor(BackendDescriptor desc) : desc_(std::move(desc)) {
    if (desc_.layer_names.empty()) {
      desc_ = desc_.kind == BackendKind::tiny ? BackendDescriptor::tiny(desc_.seed, desc_.pooling)
                                              : rebuild_vgg(desc_);
    }
    if (desc_.kind == BackendKind::tiny) {
      build_tiny();
      norm_ = Normalization{};
      checksum_ = "tiny-seed-" + std::to_string(desc_.seed);
    } else {
      build_vgg();
      norm_ = kImageNetNormalization;
    }
  }

  const BackendDescriptor& descriptor() const noexcept { return desc_; }
  const LayerList& list_layers() const noexcept { return desc_.layer_names; }
  const std::string& checksum() const noexcept { return checksum_; }
  const Normalization& normalization() const noexcept { return norm_; }
  const ConvNet<T>& network() const noexcept { return net_; }

  /// (N_l, M_l) for an h x w input.
  std::pair<long, long> layer_shape(const std::string& layer, int h, int w) const {
    require_layers({layer});
    const auto [oh, ow] = net_.output_size(layer, h, w);
    return {desc_.channel_counts.at(layer), static_cast<long>(oh) * ow};
  }

  /// Invert (unless already inverted), replicate gray to 3 channels, then
  /// normalize. Returns 3 x (H * W).
  Matrix<T> preprocess(const PixelGrid<T>& px) const {
    if (px.channels != 1 && px.channels != 3) throw ArgumentError("image channels must be 1 or 3");
    const Eigen::Index plane = static_cast<Eigen::Index>(px.height) * px.width;
    if (static_cast<Eigen::Index>(px.values.size()) != plane * px.channels)
      throw ArgumentError("pixel buffer does not match image shape");
    Matrix<T> out(3, plane);
    for (int c = 0; c < 3; ++c) {
      const int src_c = px.channels == 1 ? 0 : c;
      const T mean = static_cast<T>(norm_.mean[c]);
      const T inv_std = static_cast<T>(1.0 / norm_.stddev[c]);
      T* dst = out.data() + c * plane;
      for (Eigen::Index i = 0; i < plane; ++i) {
        T v = px.values[static_cast<std::size_t>(i * px.channels + src_c)];
        if (!px.inverted) v = T(1) - v;
        dst[i] = (v - mean) * inv_std;
      }
    }
    return out;
  }

  Matrix<T> preprocess(const ImageTensor& img) const {
    const auto buf = to_scalar(img);
    return preprocess(grid_of(img, buf));
  }

  /// Forward pass retaining what backward() needs.
  Pass forward(const PixelGrid<T>& px, const LayerList& layers) const {
    require_layers(layers);
    if (layers.empty()) throw ArgumentError("no layers requested");
    const std::string deepest = *std::max_element(layers.begin(), layers.end(), [&](const auto& a, const auto& b) {
      return net_.stage_of(a) < net_.stage_of(b);
    });
    Pass p;
    p.height = px.height;
    p.width = px.width;
    p.channels = px.channels;
    p.inverted = px.inverted;
    p.tape = net_.forward(preprocess(px), px.height, px.width, deepest);
    return p;
  }

  LayerFeatures<T> features(const Pass& p, const LayerList& layers) const {
    LayerFeatures<T> out;
    for (const auto& l : layers) out[l] = p.tape.tap(l, net_);
    return out;
  }

  LayerFeatures<T> extract_features(const ImageTensor& img, const LayerList& layers) const {
    const auto buf = to_scalar(img);
    return features(forward(grid_of(img, buf), layers), layers);
  }

  /// d(loss)/d(pixel) in the HWC layout of the pixels given to forward().
  std::vector<T> input_gradient(const Pass& p, const LayerFeatures<T>& feature_grads) const {
    const Matrix<T> g = net_.backward(p.tape, feature_grads);
    const std::size_t plane = static_cast<std::size_t>(p.height) * p.width;
    std::vector<T> out(plane * p.channels, T(0));
    const T sign = p.inverted ? T(1) : T(-1);
    for (int c = 0; c < 3; ++c) {
      const int dst_c = p.channels == 1 ? 0 : c;
      const T scale = sign * static_cast<T>(1.0 / norm_.stddev[c]);
      const T* src = g.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) out[i * p.channels + dst_c] += scale * src[i];
    }
    return out;
  }

  static std::vector<T> to_scalar(const ImageTensor& img) {
    return std::vector<T>(img.pixels.begin(), img.pixels.end());
  }
  static PixelGrid<T> grid_of(const ImageTensor& img, const std::vector<T>& buf) {
    return PixelGrid<T>{std::span<const T>(buf), img.height, img.width, img.channels, img.inverted};
  }

  void require_layers(const LayerList& layers) const {
    for (const auto& l : layers)
      if (!desc_.has_layer(l)) {
        std::string valid;
        for (const auto& n : desc_.layer_names) valid += (valid.empty() ? "" : ", ") + n;
        throw ArgumentError("unknown layer '" + l + "' for backend " + desc_.name() + " (valid: " + valid + ")");
      }
  }

 private:
  static BackendDescriptor rebuild_vgg(const BackendDescriptor& d) {
    BackendDescriptor out = BackendDescriptor::vgg(d.vgg_depth, d.pooling);
    out.weights_dir = d.weights_dir;
    out.weights_sha256 = d.weights_sha256;
    return out;
  }

  void assemble(std::vector<ConvLayer<T>> convs, const std::vector<int>& plan) {
    std::vector<typename ConvNet<T>::Stage> stages;
    int conv = 0;
    for (int ch : plan) {
      typename ConvNet<T>::Stage s;
      if (ch == 0) s.is_pool = true;
      else s.conv = conv++;
      stages.push_back(s);
    }
    net_ = ConvNet<T>(std::move(convs), std::move(stages), desc_.pooling);
  }

  void build_tiny() {
    detail::SplitMix64 rng{desc_.seed * 0x2545F4914F6CDD1Dull + 1};
    std::vector<ConvLayer<T>> convs;
    int in = 3;
    for (const auto& name : desc_.layer_names) {
      ConvLayer<T> L;
      L.name = name;
      L.in_channels = in;
      L.out_channels = desc_.channel_counts.at(name);
      L.weight.resize(L.out_channels, in * 9);
      L.bias.resize(L.out_channels);
      const double a = std::sqrt(6.0 / (in * 9));
      for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = static_cast<T>(a * (2 * rng.uniform() - 1));
      for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = static_cast<T>(0.1 * (2 * rng.uniform() - 1));
      in = L.out_channels;
      convs.push_back(std::move(L));
    }
    assemble(std::move(convs), detail::tiny_plan());
  }

  void build_vgg() {
    auto wf = load_weights_cached(desc_.weights_path(), desc_.expected_sha256());
    checksum_ = wf->sha256;
    std::vector<ConvLayer<T>> convs;
    int in = 3;
    for (const auto& name : desc_.layer_names) {
      const WeightTensor& w = wf->at(name + ".weight");
      const WeightTensor& b = wf->at(name + ".bias");
      const int out = desc_.channel_counts.at(name);
      if (w.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in), 3, 3} ||
          b.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(out)})
        throw IoError("unexpected weight shape for " + name);
      ConvLayer<T> L;
      L.name = name;
      L.in_channels = in;
      L.out_channels = out;
      L.weight.resize(out, in * 9);
      for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = static_cast<T>(w.data[i]);
      L.bias.resize(out);
      for (int i = 0; i < out; ++i) L.bias[i] = static_cast<T>(b.data[i]);
      in = out;
      convs.push_back(std::move(L));
    }
    assemble(std::move(convs), detail::vgg_plan(desc_.vgg_depth));
  }

  BackendDescriptor desc_;
  ConvNet<T> net_;
  Normalization norm_;
  std::string checksum_;
};

}  // namespace stylediff
