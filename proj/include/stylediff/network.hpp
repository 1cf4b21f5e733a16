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
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stylediff/errors.hpp"
#include "stylediff/matrix.hpp"

namespace stylediff {

enum class Pooling { max, average };

/// 3x3 convolution, stride 1, zero padding 1, followed by a rectifier.
template <typename T>
struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  Matrix<T> weight;  // out_channels x (in_channels * 9), [c][ky][kx] column order
  Vector<T> bias;
};

namespace detail {

template <typename T>
void im2col_3x3(const T* in, int channels, int h, int w, T* col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* src = in + c * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
        for (int y = 0; y < h; ++y) {
          T* drow = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * w;
          if (kx == 1) {
            std::memcpy(drow, srow, sizeof(T) * w);
          } else if (kx == 0) {
            drow[0] = T(0);
            std::memcpy(drow + 1, srow, sizeof(T) * (w - 1));
          } else {
            std::memcpy(drow, srow + 1, sizeof(T) * (w - 1));
            drow[w - 1] = T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col_3x3: accumulates columns back into the input planes.
template <typename T>
void col2im_3x3(const T* col, int channels, int h, int w, T* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::fill(out, out + channels * plane, T(0));
  for (int c = 0; c < channels; ++c) {
    T* dst = out + c * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* crow = src + static_cast<std::size_t>(y) * w;
          T* drow = dst + static_cast<std::size_t>(sy) * w;
          const int x0 = kx == 0 ? 1 : 0;
          const int x1 = kx == 2 ? w - 1 : w;
          const int shift = kx - 1;
          for (int x = x0; x < x1; ++x) drow[x + shift] += crow[x];
        }
      }
    }
  }
}

}  // namespace detail

/// A VGG-style stack of conv+relu blocks and 2x2 stride-2 pooling. Only the
/// gradient with respect to the network input is ever needed, so the
/// backward pass never touches weight gradients.
template <typename T>
class ConvNet {
 public:
  struct Stage {
    bool is_pool = false;
    int conv = -1;  // index into convs_ when !is_pool
  };

  /// Activations retained from one forward pass.
  struct Tape {
    int in_height = 0;
    int in_width = 0;
    int last_stage = -1;
    std::vector<Matrix<T>> outputs;            // per executed stage
    std::vector<std::pair<int, int>> sizes;    // spatial size after each stage
    std::vector<std::vector<std::int32_t>> argmax;  // max-pool stages only

    const Matrix<T>& tap(const std::string& layer, const ConvNet& net) const {
      const int s = net.stage_of(layer);
      if (s < 0 || s > last_stage) throw ArgumentError("layer " + layer + " not in forward tape");
      return outputs[s];
    }
  };

  ConvNet() = default;
  ConvNet(std::vector<ConvLayer<T>> convs, std::vector<Stage> stages, Pooling pooling)
      : convs_(std::move(convs)), stages_(std::move(stages)), pooling_(pooling) {
    for (std::size_t s = 0; s < stages_.size(); ++s)
      if (!stages_[s].is_pool) stage_index_[convs_[stages_[s].conv].name] = static_cast<int>(s);
  }

  int stage_of(const std::string& layer) const {
    auto it = stage_index_.find(layer);
    return it == stage_index_.end() ? -1 : it->second;
  }
  const std::vector<ConvLayer<T>>& convs() const noexcept { return convs_; }
  Pooling pooling() const noexcept { return pooling_; }

  /// Spatial size of `layer`'s output for an h x w input.
  std::pair<int, int> output_size(const std::string& layer, int h, int w) const {
    const int target = stage_of(layer);
    if (target < 0) throw ArgumentError("unknown layer " + layer);
    for (int s = 0; s <= target; ++s)
      if (stages_[s].is_pool) {
        h /= 2;
        w /= 2;
      }
    return {h, w};
  }

  /// Runs stages up to and including `last_layer`'s stage. `input` is
  /// channels x (h * w).
  Tape forward(const Matrix<T>& input, int h, int w, const std::string& last_layer) const {
    const int last = stage_of(last_layer);
    if (last < 0) throw ArgumentError("unknown layer " + last_layer);
    Tape tape;
    tape.in_height = h;
    tape.in_width = w;
    tape.last_stage = last;
    tape.outputs.resize(last + 1);
    tape.sizes.resize(last + 1);
    tape.argmax.resize(last + 1);
    const Matrix<T>* x = &input;
    Matrix<T> col;
    for (int s = 0; s <= last; ++s) {
      if (stages_[s].is_pool) {
        if (h < 2 || w < 2) throw ArgumentError("input too small for network depth");
        tape.outputs[s] = pool_forward(*x, h, w, pooling_ == Pooling::max ? &tape.argmax[s] : nullptr);
        h /= 2;
        w /= 2;
      } else {
        const ConvLayer<T>& L = convs_[stages_[s].conv];
        if (x->rows() != L.in_channels) throw ArgumentError("channel mismatch at " + L.name);
        col.resize(static_cast<Eigen::Index>(L.in_channels) * 9, static_cast<Eigen::Index>(h) * w);
        detail::im2col_3x3(x->data(), L.in_channels, h, w, col.data());
        Matrix<T>& y = tape.outputs[s];
        y.noalias() = L.weight * col;
        y.colwise() += L.bias;
        y = y.cwiseMax(T(0));
      }
      tape.sizes[s] = {h, w};
      x = &tape.outputs[s];
    }
    return tape;
  }

  /// Pulls `grads` (keyed by layer, each shaped like that layer's output)
  /// back to the network input. Returns channels x (h * w).
  Matrix<T> backward(const Tape& tape, const std::map<std::string, Matrix<T>>& grads) const {
    int deepest = -1;
    for (const auto& [name, g] : grads) {
      const int s = stage_of(name);
      if (s < 0 || s > tape.last_stage) throw ArgumentError("gradient for layer " + name + " not in tape");
      const Matrix<T>& out = tape.outputs[s];
      if (g.rows() != out.rows() || g.cols() != out.cols())
        throw ArgumentError("gradient shape mismatch at " + name);
      deepest = std::max(deepest, s);
    }
    const int in_channels = convs_.empty() ? 0 : convs_[stages_[0].is_pool ? 0 : stages_[0].conv].in_channels;
    if (deepest < 0)
      return Matrix<T>::Zero(in_channels, static_cast<Eigen::Index>(tape.in_height) * tape.in_width);

    Matrix<T> g = Matrix<T>::Zero(tape.outputs[deepest].rows(), tape.outputs[deepest].cols());
    Matrix<T> col;
    for (int s = deepest; s >= 0; --s) {
      const auto [in_h, in_w] = s == 0 ? std::pair{tape.in_height, tape.in_width} : tape.sizes[s - 1];
      if (stages_[s].is_pool) {
        g = pool_backward(g, in_h, in_w, tape.sizes[s], pooling_ == Pooling::max ? &tape.argmax[s] : nullptr);
        continue;
      }
      const ConvLayer<T>& L = convs_[stages_[s].conv];
      if (auto it = grads.find(L.name); it != grads.end()) g += it->second;
      g = g.cwiseProduct((tape.outputs[s].array() > T(0)).template cast<T>().matrix());
      col.noalias() = L.weight.transpose() * g;
      Matrix<T> gin(L.in_channels, static_cast<Eigen::Index>(in_h) * in_w);
      detail::col2im_3x3(col.data(), L.in_channels, in_h, in_w, gin.data());
      g = std::move(gin);
    }
    return g;
  }

 private:
  Matrix<T> pool_forward(const Matrix<T>& x, int h, int w, std::vector<std::int32_t>* argmax) const {
    const int oh = h / 2, ow = w / 2;
    Matrix<T> y(x.rows(), static_cast<Eigen::Index>(oh) * ow);
    if (argmax) argmax->resize(static_cast<std::size_t>(y.size()));
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      const T* src = x.data() + c * x.cols();
      T* dst = y.data() + c * y.cols();
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int i00 = (2 * oy) * w + 2 * ox;
          const int idx[4] = {i00, i00 + 1, i00 + w, i00 + w + 1};
          if (argmax) {
            int best = idx[0];
            for (int k = 1; k < 4; ++k)
              if (src[idx[k]] > src[best]) best = idx[k];
            dst[oy * ow + ox] = src[best];
            (*argmax)[c * y.cols() + oy * ow + ox] = best;
          } else {
            dst[oy * ow + ox] = (src[idx[0]] + src[idx[1]] + src[idx[2]] + src[idx[3]]) * T(0.25);
          }
        }
    }
    return y;
  }

  Matrix<T> pool_backward(const Matrix<T>& g, int h, int w, std::pair<int, int> out_size,
                          const std::vector<std::int32_t>* argmax) const {
    const auto [oh, ow] = out_size;
    Matrix<T> gin = Matrix<T>::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index c = 0; c < g.rows(); ++c) {
      const T* src = g.data() + c * g.cols();
      T* dst = gin.data() + c * gin.cols();
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T v = src[oy * ow + ox];
          if (argmax) {
            dst[(*argmax)[c * g.cols() + oy * ow + ox]] += v;
          } else {
            const int i00 = (2 * oy) * w + 2 * ox;
            const T q = v * T(0.25);
            dst[i00] += q;
            dst[i00 + 1] += q;
            dst[i00 + w] += q;
            dst[i00 + w + 1] += q;
          }
        }
    }
    return gin;
  }

  std::vector<ConvLayer<T>> convs_;
  std::vector<Stage> stages_;
  Pooling pooling_ = Pooling::max;
  std::map<std::string, int> stage_index_;
};

}  // namespace stylediff
