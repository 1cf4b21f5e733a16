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
#include <map>
#include <string>

#include <Eigen/Core>

#include "stylediff/errors.hpp"
#include "stylediff/matrix.hpp"

// Loss terms for style transfer and style-difference transfer.
//
// With F_l the N_l x M_l feature matrix of layer l and G_l = F_l F_l^T:
//
//   content      sum_l  w_l / (2 N_l M_l)     * ||F_gen - F_content||^2
//   style        sum_l  w_l / (4 N_l^2 M_l^2) * ||G_gen - G_style||^2
//   content diff sum_l  w_l / (2 N_l M_l)     * ||dF_gen - dF_style||^2
//   style diff   sum_l  w_l / (4 N_l^2 M_l^2) * ||dG_gen - dG_style||^2
//
// where dF_gen = F_gen - F_content, dF_style = F_style1 - F_style2 and the
// same for Gram matrices. Grams are unnormalized; all scaling sits in the
// denominators. Reductions accumulate in double regardless of T.

namespace stylediff {

/// Per-layer weights. Layers absent from a map, or with weight zero, do not
/// contribute.
struct LossWeights {
  std::map<std::string, double> style;
  std::map<std::string, double> content;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Classic transfer mixing factors: alpha * content + beta * style.
struct NstWeights {
  double alpha = 1.0;
  double beta = 1e3;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ArgumentError("alpha and beta must be >= 0");
    if (alpha == 0.0 && beta == 0.0) throw ArgumentError("at least one of alpha, beta must be positive");
  }
  friend bool operator==(const NstWeights&, const NstWeights&) = default;
};

/// G = D D^T, exactly symmetric (lower triangle computed, then mirrored).
template <typename T>
Matrix<T> gram(const Matrix<T>& features) {
  if (features.rows() < 1 || features.cols() < 1) throw ArgumentError("gram of an empty matrix");
  if (!features.allFinite()) throw NumericError("non-finite feature matrix in gram");
  Matrix<T> g = Matrix<T>::Zero(features.rows(), features.rows());
  g.template selfadjointView<Eigen::Lower>().rankUpdate(features);
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

template <typename T>
GramSet<T> gram_set(const LayerFeatures<T>& features) {
  GramSet<T> out;
  for (const auto& [name, f] : features) out.emplace(name, gram(f));
  return out;
}

namespace detail {

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const std::string& layer) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError("shape mismatch at layer " + layer + " (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}

template <typename T>
const Matrix<T>& require_layer(const std::map<std::string, Matrix<T>>& m, const std::string& layer) {
  auto it = m.find(layer);
  if (it == m.end()) throw ArgumentError("missing layer " + layer);
  return it->second;
}

template <typename T>
double squared_distance(const Matrix<T>& a, const Matrix<T>& b) {
  double s = 0.0;
  const T* pa = a.data();
  const T* pb = b.data();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    s += d * d;
  }
  return s;
}

template <typename T>
double squared_norm(const Matrix<T>& a) {
  double s = 0.0;
  const T* p = a.data();
  for (Eigen::Index i = 0; i < a.size(); ++i) s += static_cast<double>(p[i]) * static_cast<double>(p[i]);
  return s;
}

template <typename T>
std::map<std::string, Matrix<T>> difference(const std::map<std::string, Matrix<T>>& a,
                                            const std::map<std::string, Matrix<T>>& b) {
  if (a.size() != b.size()) throw ArgumentError("layer sets differ");
  std::map<std::string, Matrix<T>> out;
  for (const auto& [name, ma] : a) {
    const Matrix<T>& mb = require_layer(b, name);
    require_same_shape(ma, mb, name);
    out.emplace(name, ma - mb);
  }
  return out;
}

}  // namespace detail

/// 1 / (2 N M) normalized squared feature distance, weighted per layer.
template <typename T>
double content_loss(const LayerFeatures<T>& gen, const LayerFeatures<T>& content, const LossWeights& weights) {
  double total = 0.0;
  for (const auto& [layer, w] : weights.content) {
    if (w < 0.0) throw ArgumentError("negative content weight at " + layer);
    if (w == 0.0) continue;
    const Matrix<T>& a = detail::require_layer(gen, layer);
    const Matrix<T>& b = detail::require_layer(content, layer);
    detail::require_same_shape(a, b, layer);
    const double n = static_cast<double>(a.rows()), m = static_cast<double>(a.cols());
    total += w / (2.0 * n * m) * detail::squared_distance(a, b);
  }
  return total;
}

/// 1 / (4 N^2 M^2) normalized squared Gram distance. `dims` supplies
/// (N_l, M_l) since a Gram matrix no longer carries M_l.
template <typename T>
double style_loss(const GramSet<T>& gen, const GramSet<T>& style, const LossWeights& weights,
                  const LayerDims& dims) {
  double total = 0.0;
  for (const auto& [layer, w] : weights.style) {
    if (w < 0.0) throw ArgumentError("negative style weight at " + layer);
    if (w == 0.0) continue;
    const Matrix<T>& a = detail::require_layer(gen, layer);
    const Matrix<T>& b = detail::require_layer(style, layer);
    detail::require_same_shape(a, b, layer);
    auto it = dims.find(layer);
    if (it == dims.end()) throw ArgumentError("missing dims for layer " + layer);
    const double n = static_cast<double>(it->second.first), m = static_cast<double>(it->second.second);
    if (a.rows() != it->second.first) throw ArgumentError("dims disagree with Gram size at " + layer);
    total += w / (4.0 * n * n * m * m) * detail::squared_distance(a, b);
  }
  return total;
}

inline double nst_total(double content_term, double style_term, const NstWeights& w) {
  return w.alpha * content_term + w.beta * style_term;
}

/// Per-layer a - b.
template <typename T>
GramSet<T> gram_difference(const GramSet<T>& a, const GramSet<T>& b) {
  return detail::difference(a, b);
}

template <typename T>
LayerFeatures<T> feature_difference(const LayerFeatures<T>& a, const LayerFeatures<T>& b) {
  return detail::difference(a, b);
}

/// Same normalization as style_loss, applied to Gram differences.
template <typename T>
double style_difference_loss(const GramSet<T>& dg_gen, const GramSet<T>& dg_style, const LossWeights& weights,
                             const LayerDims& dims) {
  return style_loss(dg_gen, dg_style, weights, dims);
}

/// Same normalization as content_loss, applied to feature differences.
template <typename T>
double content_difference_loss(const LayerFeatures<T>& df_gen, const LayerFeatures<T>& df_style,
                               const LossWeights& weights) {
  return content_loss(df_gen, df_style, weights);
}

/// Plain sum; the difference method has no alpha/beta.
inline double total_difference_loss(double content_diff, double style_diff) { return content_diff + style_diff; }

// ---------------------------------------------------------------------------
// Per-layer terms with gradients, used by the optimization loop.

/// Value and d/dF of w / (2 N M) * ||R||^2 where R = residual (already
/// F-dependent with unit Jacobian).
template <typename T>
double content_term(const Matrix<T>& residual, double w, Matrix<T>* grad) {
  const double n = static_cast<double>(residual.rows()), m = static_cast<double>(residual.cols());
  const double value = w / (2.0 * n * m) * detail::squared_norm(residual);
  if (grad) *grad = residual * static_cast<T>(w / (n * m));
  return value;
}

/// Value and d/dF of w / (4 N^2 M^2) * ||E||^2 where E = F F^T - target and
/// E is symmetric. d/dF = w / (N^2 M^2) * E F.
template <typename T>
double style_term(const Matrix<T>& features, const Matrix<T>& gram_residual, double w, Matrix<T>* grad) {
  const double n = static_cast<double>(features.rows()), m = static_cast<double>(features.cols());
  const double value = w / (4.0 * n * n * m * m) * detail::squared_norm(gram_residual);
  if (grad) {
    grad->noalias() = gram_residual * features;
    *grad *= static_cast<T>(w / (n * n * m * m));
  }
  return value;
}

}  // namespace stylediff
