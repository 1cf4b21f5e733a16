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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stylediff/backend.hpp"
#include "stylediff/errors.hpp"
#include "stylediff/image.hpp"
#include "stylediff/image_io.hpp"
#include "stylediff/loss.hpp"
#include "stylediff/optim.hpp"

namespace stylediff {

enum class TransferMode { difference, classic_nst };
enum class OptimizerKind { lbfgs, first_order };
enum class InitMode { content, random };
enum class PixelProjection { none, clamp_each_step, clamp_final };
enum class Precision { f32, f64 };

/// Default per-layer weights: 10^3 / N_l^2 for style layers, 10^4 for
/// content layers. For VGG this reproduces the standard table
/// (conv1_2 10^3/64^2 ... conv5_2 10^3/512^2, conv4_2 10^4).
inline double default_style_weight(const BackendDescriptor& b, const std::string& layer) {
  auto it = b.channel_counts.find(layer);
  if (it == b.channel_counts.end()) throw ArgumentError("unknown layer '" + layer + "' for backend " + b.name());
  const double n = it->second;
  return 1e3 / (n * n);
}

inline constexpr double kDefaultContentWeight = 1e4;

struct TransferConfig {
  BackendDescriptor backend = BackendDescriptor::vgg(16);
  LayerList style_layers;
  LayerList content_layers;
  LossWeights weights;
  TransferMode mode = TransferMode::difference;
  NstWeights nst;
  long iterations = 1000;
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  InitMode init = InitMode::content;
  std::uint64_t seed = 0;
  long snapshot_every = 0;  // 0 disables snapshots
  PixelProjection projection = PixelProjection::clamp_final;
  LbfgsOptions lbfgs;
  AdamOptions adam;
  bool early_stop = false;
  double early_stop_threshold = 1e-7;
  int early_stop_window = 10;
  Precision precision = Precision::f32;

  /// Standard layer choice for `backend`: five style layers and one content
  /// layer (VGG), or every layer for style and the last for content (tiny).
  static TransferConfig defaults(BackendDescriptor backend = BackendDescriptor::vgg(16)) {
    TransferConfig c;
    if (backend.layer_names.empty()) backend = BackendDescriptor::from_name(backend.name());
    c.backend = std::move(backend);
    if (c.backend.kind == BackendKind::vgg) {
      c.set_layers({"conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2"}, {"conv4_2"});
    } else {
      c.set_layers(c.backend.layer_names, {c.backend.layer_names.back()});
    }
    return c;
  }

  /// Replaces both layer sets and resets their weights to the defaults.
  void set_layers(LayerList style, LayerList content) {
    style_layers = std::move(style);
    content_layers = std::move(content);
    weights = {};
    for (const auto& l : style_layers) weights.style[l] = default_style_weight(backend, l);
    for (const auto& l : content_layers) weights.content[l] = kDefaultContentWeight;
  }

  LayerList all_layers() const {
    LayerList out = style_layers;
    for (const auto& l : content_layers)
      if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    return out;
  }

  void validate() const {
    if (iterations < 1) throw ArgumentError("iterations must be >= 1");
    if (snapshot_every < 0) throw ArgumentError("snapshot_every must be >= 0");
    if (style_layers.empty() && content_layers.empty()) throw ArgumentError("no style or content layers selected");
    auto check = [&](const LayerList& layers, const std::map<std::string, double>& w, const char* kind) {
      std::set<std::string> seen;
      for (const auto& l : layers) {
        if (!backend.has_layer(l))
          throw ArgumentError(std::string("unknown ") + kind + " layer '" + l + "' for backend " + backend.name());
        if (!seen.insert(l).second) throw ArgumentError(std::string("duplicate ") + kind + " layer '" + l + "'");
        auto it = w.find(l);
        if (it == w.end()) throw ArgumentError(std::string("no weight for ") + kind + " layer '" + l + "'");
        if (!(it->second >= 0.0) || !std::isfinite(it->second))
          throw ArgumentError(std::string(kind) + " weight for '" + l + "' must be finite and >= 0");
      }
      for (const auto& [l, v] : w)
        if (!seen.count(l)) throw ArgumentError(std::string(kind) + " weight given for unselected layer '" + l + "'");
    };
    check(style_layers, weights.style, "style");
    check(content_layers, weights.content, "content");
    if (mode == TransferMode::classic_nst) nst.validate();
    if (early_stop && (early_stop_window < 1 || !(early_stop_threshold >= 0.0)))
      throw ArgumentError("early stop window must be >= 1 and threshold >= 0");
    if (!(adam.step > 0.0)) throw ArgumentError("first-order step size must be > 0");
    if (lbfgs.history < 1 || lbfgs.max_evals_per_step < 1) throw ArgumentError("invalid L-BFGS options");
  }

  friend bool operator==(const TransferConfig&, const TransferConfig&) = default;
};

/// Loss values at one point. In classic mode the first two fields hold the
/// unweighted content and style losses and `total` is alpha*c + beta*s.
struct LossTerms {
  double content_diff = 0.0;
  double style_diff = 0.0;
  double total = 0.0;

  friend bool operator==(const LossTerms&, const LossTerms&) = default;
};

struct TraceEntry {
  long iteration = 0;
  double content_diff = 0.0;
  double style_diff = 0.0;
  double total = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct Snapshot {
  long iteration = 0;
  ImageTensor image;
};

struct TransferResult {
  ImageTensor generated;
  std::vector<TraceEntry> loss_trace;
  std::vector<Snapshot> snapshots;
  double wall_time = 0.0;  // seconds
  long evaluations = 0;
};

/// Starting point of the optimization: a copy of `content`, or i.i.d.
/// uniform [0,1] pixels drawn from `seed`.
inline ImageTensor init_generated(const ImageTensor& content, InitMode mode, std::uint64_t seed) {
  if (mode == InitMode::content) return content;
  ImageTensor out = content;
  detail::SplitMix64 rng{seed};
  for (auto& v : out.pixels) v = snap_pixel(rng.uniform());
  return out;
}

/// Pixel values of an optimizer iterate as an image (clamped, on the grid).
template <typename T>
ImageTensor to_image(const std::vector<T>& x, const ImageTensor& like) {
  ImageTensor out = like;
  for (std::size_t i = 0; i < x.size(); ++i) out.pixels[i] = static_cast<double>(x[i]);
  out.normalize();
  return out;
}

/// Loss of a candidate image against fixed targets. The fixed images go
/// through the extractor once, at construction; each evaluate() is one more
/// forward pass.
template <typename Extractor>
class TransferObjective {
 public:
  using T = typename Extractor::scalar_type;

  /// Difference mode.
  TransferObjective(const Extractor& ex, const TransferConfig& cfg, const ImageTensor& content,
                    const ImageTensor& style1, const ImageTensor& style2)
      : ex_(ex), cfg_(cfg), like_(content) {
    if (cfg.mode != TransferMode::difference) throw ArgumentError("difference objective needs mode = difference");
    require_same_shape(content, style1, "style1 vs content");
    require_same_shape(content, style2, "style2 vs content");
    prepare();
    const LayerFeatures<T> fc = extract(content);
    const LayerFeatures<T> f1 = extract(style1);
    const LayerFeatures<T> f2 = extract(style2);
    for (const auto& l : cfg_.content_layers) {
      content_ref_[l] = fc.at(l);
      content_target_[l] = f1.at(l) - f2.at(l);
    }
    for (const auto& l : cfg_.style_layers) {
      const Matrix<T> gc = gram(fc.at(l));
      style_target_[l] = gram(f1.at(l)) - gram(f2.at(l));
      style_ref_[l] = gc;
    }
  }

  /// Classic mode: content term against `content`, style term against `style`.
  TransferObjective(const Extractor& ex, const TransferConfig& cfg, const ImageTensor& content,
                    const ImageTensor& style)
      : ex_(ex), cfg_(cfg), like_(content) {
    if (cfg.mode != TransferMode::classic_nst) throw ArgumentError("classic objective needs mode = classic_nst");
    require_same_shape(content, style, "style vs content");
    prepare();
    const LayerFeatures<T> fc = extract(content);
    const LayerFeatures<T> fs = extract(style);
    for (const auto& l : cfg_.content_layers) content_ref_[l] = fc.at(l);
    for (const auto& l : cfg_.style_layers) style_ref_[l] = gram(fs.at(l));
  }

  const ImageTensor& like() const noexcept { return like_; }

  /// Loss at `x` (HWC pixels); the pixel gradient goes to `grad` when it is
  /// non-empty.
  LossTerms evaluate(std::span<const T> x, std::span<T> grad) const {
    const PixelGrid<T> px{x, like_.height, like_.width, like_.channels, like_.inverted};
    const auto pass = ex_.forward(px, layers_);
    const LayerFeatures<T> f = ex_.features(pass, layers_);
    const bool want_grad = !grad.empty();
    const bool classic = cfg_.mode == TransferMode::classic_nst;
    const double cw = classic ? cfg_.nst.alpha : 1.0;
    const double sw = classic ? cfg_.nst.beta : 1.0;

    LossTerms terms;
    LayerFeatures<T> fgrad;
    Matrix<T> g;
    for (const auto& l : cfg_.content_layers) {
      const double w = cfg_.weights.content.at(l);
      if (w == 0.0) continue;
      Matrix<T> r = f.at(l) - content_ref_.at(l);
      if (!classic) r -= content_target_.at(l);
      terms.content_diff += content_term(r, w, want_grad ? &g : nullptr);
      if (want_grad) accumulate(fgrad, l, g, cw);
    }
    for (const auto& l : cfg_.style_layers) {
      const double w = cfg_.weights.style.at(l);
      if (w == 0.0) continue;
      const Matrix<T>& fl = f.at(l);
      Matrix<T> e = gram(fl) - style_ref_.at(l);
      if (!classic) e -= style_target_.at(l);
      terms.style_diff += style_term(fl, e, w, want_grad ? &g : nullptr);
      if (want_grad) accumulate(fgrad, l, g, sw);
    }
    terms.total = classic ? nst_total(terms.content_diff, terms.style_diff, cfg_.nst)
                          : total_difference_loss(terms.content_diff, terms.style_diff);
    if (want_grad) {
      const std::vector<T> pg = ex_.input_gradient(pass, fgrad);
      std::copy(pg.begin(), pg.end(), grad.begin());
    }
    return terms;
  }

  LossTerms evaluate(const ImageTensor& candidate) const {
    require_same_shape(like_, candidate, "candidate vs content");
    const std::vector<T> x = Extractor::to_scalar(candidate);
    return evaluate(std::span<const T>(x), std::span<T>());
  }

 private:
  void prepare() {
    cfg_.validate();
    layers_ = cfg_.all_layers();
    ex_.require_layers(layers_);
  }

  LayerFeatures<T> extract(const ImageTensor& img) const { return ex_.extract_features(img, layers_); }

  static void accumulate(LayerFeatures<T>& acc, const std::string& l, const Matrix<T>& g, double scale) {
    if (scale == 0.0) return;
    auto it = acc.find(l);
    if (it == acc.end()) acc.emplace(l, g * static_cast<T>(scale));
    else it->second += g * static_cast<T>(scale);
  }

  const Extractor& ex_;
  TransferConfig cfg_;
  ImageTensor like_;
  LayerList layers_;
  LayerFeatures<T> content_ref_;     // F_C
  LayerFeatures<T> content_target_;  // dF_style (difference mode)
  GramSet<T> style_ref_;             // G_C (difference) or G_S (classic)
  GramSet<T> style_target_;          // dG_style (difference mode)
};

namespace detail {

template <typename T>
bool finite_span(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

template <typename Extractor>
TransferResult optimize(const Extractor& ex, const TransferConfig& cfg, const TransferObjective<Extractor>& obj,
                        const ImageTensor& content) {
  using T = typename Extractor::scalar_type;
  (void)ex;
  const auto start = std::chrono::steady_clock::now();
  TransferResult res;
  const ImageTensor init = init_generated(content, cfg.init, cfg.seed);
  std::vector<T> x(init.pixels.begin(), init.pixels.end());

  long pending = 0;  // iteration the next evaluation belongs to
  ObjectiveFn<T, LossTerms> f = [&](std::span<const T> px, std::span<T> grad) {
    ++res.evaluations;
    LossTerms t;
    try {
      t = obj.evaluate(px, grad);
    } catch (const NumericError& e) {
      if (e.iteration() >= 0) throw;
      throw NumericError(e.what(), pending);
    }
    if (!std::isfinite(t.total) || !std::isfinite(t.content_diff) || !std::isfinite(t.style_diff))
      throw NumericError("non-finite loss", pending);
    if (!finite_span<T>(grad)) throw NumericError("non-finite pixel gradient", pending);
    return t;
  };
  IterateFn<T, LossTerms> on_iterate = [&](long it, const std::vector<T>& cur, const LossTerms& t) {
    res.loss_trace.push_back({it, t.content_diff, t.style_diff, t.total});
    if (cfg.snapshot_every > 0 && it % cfg.snapshot_every == 0) res.snapshots.push_back({it, to_image(cur, content)});
    pending = it + 1;
    if (cfg.early_stop && it >= cfg.early_stop_window) {
      const double before = res.loss_trace[res.loss_trace.size() - 1 - cfg.early_stop_window].total;
      const double rel = (before - t.total) / std::max(std::abs(before), 1e-300);
      if (rel < cfg.early_stop_threshold) return false;
    }
    return true;
  };
  ProjectFn<T> project;
  if (cfg.projection == PixelProjection::clamp_each_step) {
    project = [](std::vector<T>& v) {
      bool changed = false;
      for (auto& p : v) {
        const T c = std::clamp(p, T(0), T(1));
        changed |= c != p;
        p = c;
      }
      return changed;
    };
  }

  if (cfg.optimizer == OptimizerKind::lbfgs) {
    Lbfgs<T, LossTerms>(cfg.lbfgs).minimize(x, f, cfg.iterations, on_iterate, project);
  } else {
    Adam<T, LossTerms>(cfg.adam).minimize(x, f, cfg.iterations, on_iterate, project);
  }
  // ImageTensor holds [0,1] values, so every policy ends with a clamp.
  res.generated = to_image(x, content);
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace detail

/// Difference transfer with a caller-supplied extractor (used for counting
/// and for sharing one extractor across runs).
template <typename Extractor>
TransferResult run_transfer_with(const Extractor& ex, const TransferConfig& cfg, const ImageTensor& content,
                                 const ImageTensor& style1, const ImageTensor& style2) {
  if (cfg.mode != TransferMode::difference) throw ArgumentError("run_transfer needs mode = difference");
  const TransferObjective<Extractor> obj(ex, cfg, content, style1, style2);
  return detail::optimize(ex, cfg, obj, content);
}

template <typename Extractor>
TransferResult run_nst_with(const Extractor& ex, const TransferConfig& cfg, const ImageTensor& content,
                            const ImageTensor& style) {
  if (cfg.mode != TransferMode::classic_nst) throw ArgumentError("run_nst needs mode = classic_nst");
  const TransferObjective<Extractor> obj(ex, cfg, content, style);
  return detail::optimize(ex, cfg, obj, content);
}

namespace detail {

inline void check_shapes(const ImageTensor& c, const ImageTensor& s1, const ImageTensor* s2) {
  c.validate();
  s1.validate();
  require_same_shape(c, s1, "style vs content");
  if (s2) {
    s2->validate();
    require_same_shape(c, *s2, "style2 vs content");
  }
}

}  // namespace detail

inline TransferResult run_transfer(const TransferConfig& cfg, const ImageTensor& content, const ImageTensor& style1,
                                   const ImageTensor& style2) {
  detail::check_shapes(content, style1, &style2);
  cfg.validate();
  if (cfg.precision == Precision::f64)
    return run_transfer_with(FeatureExtractor<double>(cfg.backend), cfg, content, style1, style2);
  return run_transfer_with(FeatureExtractor<float>(cfg.backend), cfg, content, style1, style2);
}

inline TransferResult run_nst(const TransferConfig& cfg, const ImageTensor& content, const ImageTensor& style) {
  detail::check_shapes(content, style, nullptr);
  cfg.validate();
  if (cfg.precision == Precision::f64) return run_nst_with(FeatureExtractor<double>(cfg.backend), cfg, content, style);
  return run_nst_with(FeatureExtractor<float>(cfg.backend), cfg, content, style);
}

/// Calls `fn` with a FeatureExtractor of the configured precision.
template <typename Fn>
decltype(auto) with_extractor(const TransferConfig& cfg, Fn&& fn) {
  if (cfg.precision == Precision::f64) return fn(FeatureExtractor<double>(cfg.backend));
  return fn(FeatureExtractor<float>(cfg.backend));
}

/// Loss of `candidate` for the difference objective; nothing is optimized.
inline LossTerms evaluate_loss(const TransferConfig& cfg, const ImageTensor& content, const ImageTensor& style1,
                               const ImageTensor& style2, const ImageTensor& candidate) {
  detail::check_shapes(content, style1, &style2);
  require_same_shape(content, candidate, "candidate vs content");
  TransferConfig c = cfg;
  c.mode = TransferMode::difference;
  if (cfg.precision == Precision::f64) {
    const FeatureExtractor<double> ex(c.backend);
    return TransferObjective(ex, c, content, style1, style2).evaluate(candidate);
  }
  const FeatureExtractor<float> ex(c.backend);
  return TransferObjective(ex, c, content, style1, style2).evaluate(candidate);
}

struct GradientCheckOptions {
  std::uint64_t seed = 0;
  int samples = 20;
  double step = 1e-3;
  double zero_floor = 1e-12;  // both |analytic| and |numeric| below: excluded
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  int checked = 0;
  int excluded = 0;      // degenerate denominator
  int non_smooth = 0;    // stencil crossed a rectifier or pooling switch; replaced

  friend bool operator==(const GradientCheckReport&, const GradientCheckReport&) = default;
};

namespace detail {

// True when the rectifier masks and max-pool selections of two passes agree,
// i.e. the loss is smooth along the segment between their inputs (up to
// switches that flip and flip back, which a 2h stencil cannot see).
template <typename T>
bool same_activation_pattern(const typename ConvNet<T>::Tape& a, const typename ConvNet<T>::Tape& b) {
  if (a.last_stage != b.last_stage) return false;
  for (int s = 0; s <= a.last_stage; ++s) {
    if (a.argmax[s] != b.argmax[s]) return false;
    const Matrix<T>& x = a.outputs[s];
    const Matrix<T>& y = b.outputs[s];
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if ((x.data()[i] > T(0)) != (y.data()[i] > T(0))) return false;
  }
  return true;
}

}  // namespace detail

/// Back-propagated pixel gradient of the difference loss at `candidate`
/// against central differences at `samples` distinct seeded pixels.
/// Relative error is |a - n| / max(|a|, |n|). Pixels whose +-h stencil
/// changes the network's activation pattern are skipped and the next
/// seeded pixel is drawn instead.
inline GradientCheckReport gradient_check(const TransferConfig& cfg, const ImageTensor& content,
                                          const ImageTensor& style1, const ImageTensor& style2,
                                          const ImageTensor& candidate, const GradientCheckOptions& opts = {}) {
  if (cfg.backend.kind != BackendKind::tiny) throw ArgumentError("gradient_check needs the tiny backend");
  if (cfg.precision != Precision::f64) throw ArgumentError("gradient_check needs 64-bit precision");
  detail::check_shapes(content, style1, &style2);
  require_same_shape(content, candidate, "candidate vs content");
  const std::size_t n = candidate.pixels.size();
  if (opts.samples < 1 || static_cast<std::size_t>(opts.samples) > n)
    throw ArgumentError("gradient_check samples must be in [1, pixel count]");

  TransferConfig c = cfg;
  c.mode = TransferMode::difference;
  const FeatureExtractor<double> ex(c.backend);
  const TransferObjective obj(ex, c, content, style1, style2);
  const LayerList layers = c.all_layers();
  std::vector<double> x = candidate.pixels;
  std::vector<double> g(n);
  obj.evaluate(std::span<const double>(x), std::span<double>(g));

  // seeded permutation of pixel indices
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  detail::SplitMix64 rng{opts.seed};
  for (std::size_t k = 0; k + 1 < n; ++k) std::swap(idx[k], idx[k + rng.next() % (n - k)]);

  GradientCheckReport rep;
  auto pass_at = [&](const std::vector<double>& v) {
    return ex.forward(PixelGrid<double>{std::span<const double>(v), candidate.height, candidate.width,
                                        candidate.channels, candidate.inverted},
                      layers);
  };
  for (std::size_t k = 0; k < n && rep.checked + rep.excluded < opts.samples; ++k) {
    const std::size_t i = idx[k];
    const double orig = x[i];
    x[i] = orig + opts.step;
    const double fp = obj.evaluate(std::span<const double>(x), std::span<double>()).total;
    const auto tp = pass_at(x);
    x[i] = orig - opts.step;
    const double fm = obj.evaluate(std::span<const double>(x), std::span<double>()).total;
    const auto tm = pass_at(x);
    x[i] = orig;
    if (!detail::same_activation_pattern<double>(tp.tape, tm.tape)) {
      ++rep.non_smooth;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double analytic = g[i];
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < opts.zero_floor) {
      ++rep.excluded;
      continue;
    }
    ++rep.checked;
    rep.max_relative_error = std::max(rep.max_relative_error, std::abs(analytic - numeric) / scale);
  }
  return rep;
}

/// "iteration,content_diff,style_diff,total" with full double precision.
inline void write_loss_trace(const std::vector<TraceEntry>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,content_diff,style_diff,total\n";
  char buf[128];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g\n", e.iteration, e.content_diff, e.style_diff, e.total);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<TraceEntry> read_loss_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TraceEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceEntry e;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf", &e.iteration, &e.content_diff, &e.style_diff, &e.total) != 4)
      throw IoError("malformed trace line in " + path.string() + ": " + line);
    out.push_back(e);
  }
  return out;
}

/// generated.png, loss_trace.csv and iter_<N>.png snapshots.
inline void write_run_outputs(const TransferResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_image(r.generated, dir / "generated.png");
  write_loss_trace(r.loss_trace, dir / "loss_trace.csv");
  for (const auto& s : r.snapshots) save_image(s.image, dir / ("iter_" + std::to_string(s.iteration) + ".png"));
}

}  // namespace stylediff
