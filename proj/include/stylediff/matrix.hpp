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

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace stylediff {

/// Row-major dense matrix. Layer activations are stored as
/// channels x (height * width), i.e. one flattened feature map per row.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// layer name -> N_l x M_l feature matrix
template <typename T>
using LayerFeatures = std::map<std::string, Matrix<T>>;

/// layer name -> N_l x N_l Gram matrix
template <typename T>
using GramSet = std::map<std::string, Matrix<T>>;

/// layer name -> (N_l, M_l)
using LayerDims = std::map<std::string, std::pair<long, long>>;

using LayerList = std::vector<std::string>;

template <typename T>
LayerDims dims_of(const LayerFeatures<T>& f) {
  LayerDims d;
  for (const auto& [name, m] : f) d[name] = {static_cast<long>(m.rows()), static_cast<long>(m.cols())};
  return d;
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

}  // namespace stylediff
