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
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylediff/errors.hpp"
#include "stylediff/glyph.hpp"
#include "stylediff/image.hpp"
#include "stylediff/image_io.hpp"
#include "stylediff/transfer.hpp"

// Experiment specs are JSON files with three blocks:
//
//   {
//     "name": "serif_generation",
//     "input": {
//       "size": 256,
//       "content": {"font": "fonts/Sans.ttf", "char": "A"},
//       "style1":  {"font": "fonts/Serif.ttf", "char": "A"},
//       "style2":  {"image": "sans_A.png", "size": 256}
//     },
//     "transfer": {"backend": "vgg16", "iterations": 300, ...},
//     "output": {"dir": "runs/serif_generation"}
//   }
//
// Relative paths resolve against the spec file's directory. Unknown keys
// are rejected. See README for the full transfer block.

namespace stylediff {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// enum names

inline const char* to_string(Pooling p) { return p == Pooling::max ? "max" : "average"; }
inline const char* to_string(TransferMode m) { return m == TransferMode::difference ? "difference" : "classic_nst"; }
inline const char* to_string(OptimizerKind o) { return o == OptimizerKind::lbfgs ? "lbfgs" : "first_order"; }
inline const char* to_string(InitMode i) { return i == InitMode::content ? "content" : "random"; }
inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }
inline const char* to_string(PixelProjection p) {
  switch (p) {
    case PixelProjection::none: return "none";
    case PixelProjection::clamp_each_step: return "clamp_each_step";
    default: return "clamp_final";
  }
}

namespace detail {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const char* what) {
  std::string valid;
  for (E v : values) {
    if (s == to_string(v)) return v;
    valid += (valid.empty() ? "" : ", ") + std::string(to_string(v));
  }
  throw ArgumentError(std::string("invalid ") + what + " '" + s + "' (expected " + valid + ")");
}

}  // namespace detail

inline Pooling parse_pooling(const std::string& s) {
  return detail::parse_enum(s, {Pooling::max, Pooling::average}, "pooling");
}
inline TransferMode parse_mode(const std::string& s) {
  return detail::parse_enum(s, {TransferMode::difference, TransferMode::classic_nst}, "mode");
}
inline OptimizerKind parse_optimizer(const std::string& s) {
  return detail::parse_enum(s, {OptimizerKind::lbfgs, OptimizerKind::first_order}, "optimizer");
}
inline InitMode parse_init(const std::string& s) {
  return detail::parse_enum(s, {InitMode::content, InitMode::random}, "init");
}
inline Precision parse_precision(const std::string& s) {
  return detail::parse_enum(s, {Precision::f32, Precision::f64}, "precision");
}
inline PixelProjection parse_projection(const std::string& s) {
  return detail::parse_enum(
      s, {PixelProjection::none, PixelProjection::clamp_each_step, PixelProjection::clamp_final}, "projection");
}

// ---------------------------------------------------------------------------
// diff visualization

/// Binarizes both images at `threshold` (ink = below threshold) and colors
/// each pixel: ink only in a -> red, only in b -> blue, both -> black,
/// neither -> white. Returns a 3-channel image.
inline ImageTensor diff_visualization(const ImageTensor& a, const ImageTensor& b, double threshold = 0.5) {
  if (a.channels != 1 || b.channels != 1) throw ArgumentError("diff_visualization needs grayscale images");
  require_same_shape(a, b, "diff_visualization");
  const ImageTensor ba = binarize(a.inverted ? invert(a) : a, threshold);
  const ImageTensor bb = binarize(b.inverted ? invert(b) : b, threshold);
  ImageTensor out(a.height, a.width, 3, 1.0);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const bool ia = ba.at(y, x) == 0.0, ib = bb.at(y, x) == 0.0;
      double r = 1, g = 1, bl = 1;
      if (ia && ib) r = g = bl = 0;
      else if (ia) g = bl = 0;
      else if (ib) r = g = 0;
      out.at(y, x, 0) = r;
      out.at(y, x, 1) = g;
      out.at(y, x, 2) = bl;
    }
  return out;
}

struct DiffCounts {
  long red = 0;
  long blue = 0;
  long black = 0;
  long white = 0;
  long other = 0;

  long total() const { return red + blue + black + white + other; }
  friend bool operator==(const DiffCounts&, const DiffCounts&) = default;
};

inline DiffCounts count_diff_colors(const ImageTensor& rgb) {
  if (rgb.channels != 3) throw ArgumentError("count_diff_colors needs an RGB image");
  DiffCounts c;
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      const double r = rgb.at(y, x, 0), g = rgb.at(y, x, 1), b = rgb.at(y, x, 2);
      if (r == 1 && g == 0 && b == 0) ++c.red;
      else if (r == 0 && g == 0 && b == 1) ++c.blue;
      else if (r == 0 && g == 0 && b == 0) ++c.black;
      else if (r == 1 && g == 1 && b == 1) ++c.white;
      else ++c.other;
    }
  return c;
}

/// Ink-ratio heuristic for the requirement that style image 2 resemble the
/// content font. Returns a message when the ratio exceeds `factor` either way.
inline std::optional<std::string> ink_mismatch_warning(const ImageTensor& style2, const ImageTensor& content,
                                                       double factor = 2.0) {
  const double a = ink_ratio(style2), b = ink_ratio(content);
  if (a <= 0.0 || b <= 0.0) {
    if (a == b) return std::nullopt;
    return std::string("style2 or content has no ink");
  }
  const double r = a / b;
  if (r > factor || r < 1.0 / factor) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "style2/content ink ratio %.2f is outside [1/%g, %g]; results may be poor", r,
                  factor, factor);
    return std::string(buf);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// specs

/// One input image: a glyph from a font, or an image file.
struct InputSpec {
  std::optional<GlyphSpec> glyph;
  std::filesystem::path image;
  int size = 256;

  ImageTensor load() const {
    if (glyph) {
      GlyphSpec g = *glyph;
      g.canvas = size;
      return rasterize_glyph(g);
    }
    return load_image(image, size, true);
  }
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct ExperimentSpec {
  std::string name;
  InputSpec content;
  InputSpec style1;
  std::optional<InputSpec> style2;  // required in difference mode
  TransferConfig transfer = TransferConfig::defaults();
  std::filesystem::path output_dir;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

namespace detail {

class SpecReader {
 public:
  explicit SpecReader(std::filesystem::path base) : base_(std::move(base)) {}

  static void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ValidationError(where, "must be an object");
    for (const auto& [k, v] : j.items()) {
      bool ok = false;
      for (const char* a : keys) ok |= k == a;
      if (!ok) throw ValidationError(join(where, k), "unknown key");
    }
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

  template <typename V>
  static V get(const json& j, const std::string& where, const char* key, V fallback) {
    if (!j.contains(key)) return fallback;
    try {
      return j.at(key).get<V>();
    } catch (const json::exception&) {
      throw ValidationError(join(where, key), "wrong type");
    }
  }

  static std::string get_string(const json& j, const std::string& where, const char* key, std::string fallback) {
    if (j.contains(key) && !j.at(key).is_string()) throw ValidationError(join(where, key), "must be a string");
    return get<std::string>(j, where, key, std::move(fallback));
  }

  static long get_int(const json& j, const std::string& where, const char* key, long fallback) {
    if (j.contains(key) && !j.at(key).is_number_integer()) throw ValidationError(join(where, key), "must be an integer");
    return get<long>(j, where, key, fallback);
  }

  static double get_number(const json& j, const std::string& where, const char* key, double fallback) {
    if (j.contains(key) && !j.at(key).is_number()) throw ValidationError(join(where, key), "must be a number");
    return get<double>(j, where, key, fallback);
  }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base_ / path).lexically_normal();
  }

  InputSpec input(const json& j, const std::string& where, int default_size) const {
    only_keys(j, where, {"font", "char", "margin", "image", "size"});
    InputSpec in;
    in.size = static_cast<int>(get_int(j, where, "size", default_size));
    if (in.size < 1) throw ValidationError(join(where, "size"), "must be >= 1");
    const bool has_font = j.contains("font"), has_image = j.contains("image");
    if (has_font == has_image) throw ValidationError(where, "exactly one of 'font' or 'image' is required");
    if (has_font) {
      GlyphSpec g;
      g.font_path = resolve(get_string(j, where, "font", ""));
      if (!std::filesystem::is_regular_file(g.font_path))
        throw ValidationError(join(where, "font"), "file not found: " + g.font_path.string());
      if (!j.contains("char")) throw ValidationError(join(where, "char"), "required with 'font'");
      try {
        g.codepoint = first_codepoint(get_string(j, where, "char", ""));
      } catch (const ArgumentError& e) {
        throw ValidationError(join(where, "char"), e.what());
      }
      g.margin_fraction = get_number(j, where, "margin", g.margin_fraction);
      if (!(g.margin_fraction >= 0.0 && g.margin_fraction < 0.4))
        throw ValidationError(join(where, "margin"), "must lie in [0, 0.4)");
      in.glyph = g;
    } else {
      if (j.contains("char") || j.contains("margin"))
        throw ValidationError(where, "'char' and 'margin' apply only to 'font' inputs");
      in.image = resolve(get_string(j, where, "image", ""));
      if (!std::filesystem::is_regular_file(in.image))
        throw ValidationError(join(where, "image"), "file not found: " + in.image.string());
    }
    return in;
  }

  static BackendDescriptor backend(const json& t) {
    const std::string where = "transfer.backend";
    if (!t.contains("backend")) return BackendDescriptor::vgg(16);
    const json& b = t.at("backend");
    std::string name;
    json obj = json::object();
    if (b.is_string()) {
      name = b.get<std::string>();
    } else {
      only_keys(b, where, {"name", "pooling", "seed", "weights_dir", "weights_sha256"});
      name = get_string(b, where, "name", "vgg16");
      obj = b;
    }
    BackendDescriptor d;
    try {
      d = BackendDescriptor::from_name(name);
    } catch (const ArgumentError& e) {
      throw ValidationError(b.is_string() ? where : where + ".name", e.what());
    }
    try {
      d.pooling = parse_pooling(get_string(obj, where, "pooling", "max"));
    } catch (const ValidationError&) {
      throw;
    } catch (const ArgumentError& e) {
      throw ValidationError(where + ".pooling", e.what());
    }
    if (obj.contains("seed")) {
      if (!obj.at("seed").is_number_unsigned()) throw ValidationError(where + ".seed", "must be a non-negative integer");
      d.seed = obj.at("seed").get<std::uint64_t>();
    }
    d.weights_dir = get_string(obj, where, "weights_dir", "");
    d.weights_sha256 = get_string(obj, where, "weights_sha256", "");
    return d;
  }

  // Layer selection: either a list of names (default weights) or an object
  // of name -> weight.
  static void layers(const json& t, const char* key, const BackendDescriptor& b, bool style, LayerList& names,
                     std::map<std::string, double>& weights) {
    if (!t.contains(key)) return;
    const std::string where = std::string("transfer.") + key;
    const json& v = t.at(key);
    names.clear();
    weights.clear();
    auto add = [&](const std::string& l, std::optional<double> w) {
      if (!b.has_layer(l)) throw ValidationError(where + "." + l, "unknown layer for backend " + b.name());
      if (weights.count(l)) throw ValidationError(where + "." + l, "duplicate layer");
      const double wv = w ? *w : (style ? default_style_weight(b, l) : kDefaultContentWeight);
      if (!(wv >= 0.0) || !std::isfinite(wv)) throw ValidationError(where + "." + l, "weight must be finite and >= 0");
      names.push_back(l);
      weights[l] = wv;
    };
    if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError(where, "entries must be layer names");
        add(e.get<std::string>(), std::nullopt);
      }
    } else if (v.is_object()) {
      for (const auto& [l, w] : v.items()) {
        if (!w.is_number()) throw ValidationError(where + "." + l, "weight must be a number");
        add(l, w.get<double>());
      }
    } else {
      throw ValidationError(where, "must be a list of layer names or an object of layer weights");
    }
  }

  static TransferConfig transfer(const json& t) {
    const std::string where = "transfer";
    only_keys(t, where,
              {"backend", "mode", "style_layers", "content_layers", "alpha", "beta", "iterations", "optimizer",
               "init", "seed", "snapshot_every", "projection", "precision", "early_stop", "lbfgs", "adam"});
    TransferConfig c = TransferConfig::defaults(backend(t));
    auto enum_field = [&](const char* key, auto parse, auto& field) {
      if (!t.contains(key)) return;
      try {
        field = parse(get_string(t, where, key, ""));
      } catch (const ValidationError&) {
        throw;
      } catch (const ArgumentError& e) {
        throw ValidationError(join(where, key), e.what());
      }
    };
    enum_field("mode", parse_mode, c.mode);
    enum_field("optimizer", parse_optimizer, c.optimizer);
    enum_field("init", parse_init, c.init);
    enum_field("projection", parse_projection, c.projection);
    enum_field("precision", parse_precision, c.precision);
    layers(t, "style_layers", c.backend, true, c.style_layers, c.weights.style);
    layers(t, "content_layers", c.backend, false, c.content_layers, c.weights.content);
    if (c.style_layers.empty() && c.content_layers.empty())
      throw ValidationError("transfer.style_layers", "no style or content layers selected");
    c.nst.alpha = get_number(t, where, "alpha", c.nst.alpha);
    c.nst.beta = get_number(t, where, "beta", c.nst.beta);
    c.iterations = get_int(t, where, "iterations", c.iterations);
    if (c.iterations < 1) throw ValidationError("transfer.iterations", "must be >= 1");
    if (t.contains("seed")) {
      if (!t.at("seed").is_number_unsigned()) throw ValidationError("transfer.seed", "must be a non-negative integer");
      c.seed = t.at("seed").get<std::uint64_t>();
    }
    c.snapshot_every = get_int(t, where, "snapshot_every", 0);
    if (c.snapshot_every < 0) throw ValidationError("transfer.snapshot_every", "must be >= 0");
    if (t.contains("early_stop")) {
      const json& e = t.at("early_stop");
      const std::string w = "transfer.early_stop";
      if (e.is_boolean()) {
        c.early_stop = e.get<bool>();
      } else {
        only_keys(e, w, {"enabled", "threshold", "window"});
        c.early_stop = get<bool>(e, w, "enabled", true);
        c.early_stop_threshold = get_number(e, w, "threshold", c.early_stop_threshold);
        c.early_stop_window = static_cast<int>(get_int(e, w, "window", c.early_stop_window));
      }
    }
    if (t.contains("lbfgs")) {
      const json& o = t.at("lbfgs");
      const std::string w = "transfer.lbfgs";
      only_keys(o, w, {"history", "max_evals_per_step", "tolerance_grad", "tolerance_change", "c1", "c2"});
      c.lbfgs.history = static_cast<int>(get_int(o, w, "history", c.lbfgs.history));
      c.lbfgs.max_evals_per_step = static_cast<int>(get_int(o, w, "max_evals_per_step", c.lbfgs.max_evals_per_step));
      c.lbfgs.tolerance_grad = get_number(o, w, "tolerance_grad", c.lbfgs.tolerance_grad);
      c.lbfgs.tolerance_change = get_number(o, w, "tolerance_change", c.lbfgs.tolerance_change);
      c.lbfgs.c1 = get_number(o, w, "c1", c.lbfgs.c1);
      c.lbfgs.c2 = get_number(o, w, "c2", c.lbfgs.c2);
    }
    if (t.contains("adam")) {
      const json& o = t.at("adam");
      const std::string w = "transfer.adam";
      only_keys(o, w, {"step", "beta1", "beta2", "epsilon"});
      c.adam.step = get_number(o, w, "step", c.adam.step);
      c.adam.beta1 = get_number(o, w, "beta1", c.adam.beta1);
      c.adam.beta2 = get_number(o, w, "beta2", c.adam.beta2);
      c.adam.epsilon = get_number(o, w, "epsilon", c.adam.epsilon);
    }
    try {
      c.validate();
    } catch (const ValidationError&) {
      throw;
    } catch (const ArgumentError& e) {
      throw ValidationError("transfer", e.what());
    }
    return c;
  }

 private:
  std::filesystem::path base_;
};

}  // namespace detail

/// Parses a spec document; relative paths resolve against `base_dir`.
/// Throws ValidationError naming the offending field.
inline ExperimentSpec parse_spec(const json& j, const std::filesystem::path& base_dir) {
  using R = detail::SpecReader;
  R::only_keys(j, "", {"name", "input", "transfer", "output", "run"});
  const R reader(base_dir);
  ExperimentSpec s;
  s.name = R::get_string(j, "", "name", "experiment");
  if (s.name.empty()) throw ValidationError("name", "must not be empty");

  if (!j.contains("input")) throw ValidationError("input", "required");
  const json& in = j.at("input");
  R::only_keys(in, "input", {"size", "content", "style1", "style2"});
  const int size = static_cast<int>(R::get_int(in, "input", "size", 256));
  if (size < 1) throw ValidationError("input.size", "must be >= 1");

  s.transfer = R::transfer(j.contains("transfer") ? j.at("transfer") : json::object());
  const bool difference = s.transfer.mode == TransferMode::difference;

  for (const char* key : {"content", "style1"})
    if (!in.contains(key)) throw ValidationError(std::string("input.") + key, "required");
  if (difference && !in.contains("style2")) throw ValidationError("input.style2", "required in difference mode");
  s.content = reader.input(in.at("content"), "input.content", size);
  s.style1 = reader.input(in.at("style1"), "input.style1", size);
  if (in.contains("style2")) s.style2 = reader.input(in.at("style2"), "input.style2", size);
  if (s.style1.size != s.content.size)
    throw ValidationError("input.style1.size", "size " + std::to_string(s.style1.size) + " differs from content size " +
                                                   std::to_string(s.content.size));
  if (s.style2 && s.style2->size != s.content.size)
    throw ValidationError("input.style2.size", "size " + std::to_string(s.style2->size) +
                                                   " differs from content size " + std::to_string(s.content.size));

  if (!j.contains("output")) throw ValidationError("output", "required");
  const json& out = j.at("output");
  R::only_keys(out, "output", {"dir"});
  if (!out.contains("dir")) throw ValidationError("output.dir", "required");
  s.output_dir = reader.resolve(R::get_string(out, "output", "dir", ""));
  return s;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("(document)", std::string("malformed JSON: ") + e.what());
  }
  const auto abs = std::filesystem::absolute(path);
  return parse_spec(j, abs.parent_path());
}

inline json to_json(const InputSpec& in) {
  json j = json::object();
  if (in.glyph) {
    char buf[8] = {};
    // UTF-8 encode
    const char32_t cp = in.glyph->codepoint;
    if (cp < 0x80) buf[0] = static_cast<char>(cp);
    else if (cp < 0x800) { buf[0] = static_cast<char>(0xC0 | (cp >> 6)); buf[1] = static_cast<char>(0x80 | (cp & 0x3F)); }
    else if (cp < 0x10000) {
      buf[0] = static_cast<char>(0xE0 | (cp >> 12));
      buf[1] = static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      buf[2] = static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      buf[0] = static_cast<char>(0xF0 | (cp >> 18));
      buf[1] = static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      buf[2] = static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      buf[3] = static_cast<char>(0x80 | (cp & 0x3F));
    }
    j["font"] = in.glyph->font_path.string();
    j["char"] = std::string(buf);
    j["margin"] = in.glyph->margin_fraction;
  } else {
    j["image"] = in.image.string();
  }
  j["size"] = in.size;
  return j;
}

/// Fully resolved transfer block: every field explicit, layers as weights.
inline json to_json(const TransferConfig& c) {
  json b = {{"name", c.backend.name()}, {"pooling", to_string(c.backend.pooling)}};
  if (c.backend.kind == BackendKind::tiny) b["seed"] = c.backend.seed;
  if (!c.backend.weights_dir.empty()) b["weights_dir"] = c.backend.weights_dir;
  if (!c.backend.weights_sha256.empty()) b["weights_sha256"] = c.backend.weights_sha256;
  json style = json::object(), content = json::object();
  for (const auto& l : c.style_layers) style[l] = c.weights.style.at(l);
  for (const auto& l : c.content_layers) content[l] = c.weights.content.at(l);
  return {
      {"backend", b},
      {"mode", to_string(c.mode)},
      {"style_layers", style},
      {"content_layers", content},
      {"alpha", c.nst.alpha},
      {"beta", c.nst.beta},
      {"iterations", c.iterations},
      {"optimizer", to_string(c.optimizer)},
      {"init", to_string(c.init)},
      {"seed", c.seed},
      {"snapshot_every", c.snapshot_every},
      {"projection", to_string(c.projection)},
      {"precision", to_string(c.precision)},
      {"early_stop",
       {{"enabled", c.early_stop}, {"threshold", c.early_stop_threshold}, {"window", c.early_stop_window}}},
      {"lbfgs",
       {{"history", c.lbfgs.history},
        {"max_evals_per_step", c.lbfgs.max_evals_per_step},
        {"tolerance_grad", c.lbfgs.tolerance_grad},
        {"tolerance_change", c.lbfgs.tolerance_change},
        {"c1", c.lbfgs.c1},
        {"c2", c.lbfgs.c2}}},
      {"adam",
       {{"step", c.adam.step}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
  };
}

inline json to_json(const ExperimentSpec& s) {
  json in = {{"size", s.content.size}, {"content", to_json(s.content)}, {"style1", to_json(s.style1)}};
  if (s.style2) in["style2"] = to_json(*s.style2);
  return {{"name", s.name}, {"input", in}, {"transfer", to_json(s.transfer)}, {"output", {{"dir", s.output_dir.string()}}}};
}

// ---------------------------------------------------------------------------
// runs

struct ExperimentInputs {
  ImageTensor content;
  ImageTensor style1;
  std::optional<ImageTensor> style2;
};

/// Rasterizes or loads the input triple. Mismatched shapes are a
/// ValidationError.
inline ExperimentInputs load_inputs(const ExperimentSpec& s) {
  ExperimentInputs in{s.content.load(), s.style1.load(), std::nullopt};
  if (s.style2) in.style2 = s.style2->load();
  if (!in.style1.same_shape(in.content))
    throw ValidationError("input.style1", "image shape " + shape_string(in.style1) + " differs from content " +
                                              shape_string(in.content));
  if (in.style2 && !in.style2->same_shape(in.content))
    throw ValidationError("input.style2", "image shape " + shape_string(*in.style2) + " differs from content " +
                                              shape_string(in.content));
  return in;
}

struct ExperimentResult {
  std::filesystem::path output_dir;
  TransferResult transfer;
  std::string backend_checksum;
  std::vector<std::string> warnings;
  DiffCounts style_diff;               // style1 vs style2
  DiffCounts generated_content_diff;   // generated vs content
};

namespace detail {

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Runs one experiment on already-loaded inputs and writes its artifact set:
/// generated.png, loss_trace.csv, style_diff.png, generated_content_diff.png,
/// iter_<N>.png snapshots (when enabled) and, last, manifest.json.
inline ExperimentResult run_experiment(const ExperimentSpec& s, const ExperimentInputs& in) {
  const bool difference = s.transfer.mode == TransferMode::difference;
  if (difference && !in.style2) throw ValidationError("input.style2", "required in difference mode");
  ExperimentResult res;
  res.output_dir = s.output_dir;
  if (difference)
    if (auto w = ink_mismatch_warning(*in.style2, in.content)) res.warnings.push_back(*w);

  with_extractor(s.transfer, [&](const auto& ex) {
    res.backend_checksum = ex.checksum();
    res.transfer = difference ? run_transfer_with(ex, s.transfer, in.content, in.style1, *in.style2)
                              : run_nst_with(ex, s.transfer, in.content, in.style1);
    return 0;
  });

  const ImageTensor style_viz =
      diff_visualization(in.style1, difference ? *in.style2 : in.content);
  const ImageTensor gen_viz = diff_visualization(res.transfer.generated, in.content);
  res.style_diff = count_diff_colors(style_viz);
  res.generated_content_diff = count_diff_colors(gen_viz);

  std::filesystem::create_directories(s.output_dir);
  write_run_outputs(res.transfer, s.output_dir);
  save_image(style_viz, s.output_dir / "style_diff.png");
  save_image(gen_viz, s.output_dir / "generated_content_diff.png");

  json m = to_json(s);
  const auto& trace = res.transfer.loss_trace;
  json run = {{"backend_checksum", res.backend_checksum},
              {"iterations_run", trace.empty() ? 0 : trace.back().iteration},
              {"evaluations", res.transfer.evaluations},
              {"wall_time_seconds", res.transfer.wall_time},
              {"warnings", res.warnings}};
  if (!trace.empty()) {
    run["initial_loss"] = {{"content", trace.front().content_diff}, {"style", trace.front().style_diff},
                           {"total", trace.front().total}};
    run["final_loss"] = {{"content", trace.back().content_diff}, {"style", trace.back().style_diff},
                         {"total", trace.back().total}};
  }
  run["generated_vs_content"] = {{"red", res.generated_content_diff.red}, {"blue", res.generated_content_diff.blue}};
  m["run"] = run;
  detail::write_text_atomic(s.output_dir / "manifest.json", m.dump(2) + "\n");
  return res;
}

inline ExperimentResult run_experiment(const ExperimentSpec& s) { return run_experiment(s, load_inputs(s)); }

/// Loads, validates and runs the spec at `spec_path`; returns the output
/// directory. Nothing is written when validation fails.
inline std::filesystem::path run_experiment(const std::filesystem::path& spec_path) {
  return run_experiment(load_spec(spec_path)).output_dir;
}

// ---------------------------------------------------------------------------
// layer sweeps

enum class SweepAxis { content_layer, style_layer };

inline const char* to_string(SweepAxis a) { return a == SweepAxis::content_layer ? "content" : "style"; }
inline SweepAxis parse_axis(const std::string& s) {
  if (s == "content" || s == "content_layer") return SweepAxis::content_layer;
  if (s == "style" || s == "style_layer") return SweepAxis::style_layer;
  throw ArgumentError("invalid sweep axis '" + s + "' (expected content or style)");
}

struct SweepOptions {
  long iterations = 0;             // 0: keep the base spec's count
  int workers = 1;
  bool resume = true;              // skip cells that already have a manifest
  std::filesystem::path out_dir;   // empty: <base output>/sweep_<axis>
};

struct SweepCell {
  std::string layer;
  std::filesystem::path dir;
  bool ok = false;
  bool resumed = false;
  std::string error;
  double final_total = 0.0;
};

struct SweepReport {
  std::filesystem::path dir;
  std::vector<SweepCell> cells;

  int completed() const {
    return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return c.ok; }));
  }
};

/// Layers a sweep walks: the five standard VGG layers, or every tiny layer.
inline LayerList sweep_layers(const BackendDescriptor& b) {
  if (b.kind == BackendKind::vgg) return {"conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2"};
  return b.layer_names;
}

/// Transfer config of one sweep cell. Content axis: default style layers
/// and weights, `layer` as the only content layer (weight 10^4). Style axis:
/// `layer` as the only style layer (default weight), content fixed to the
/// default content layer.
inline TransferConfig sweep_cell_config(const TransferConfig& base, SweepAxis axis, const std::string& layer) {
  TransferConfig c = base;
  const TransferConfig d = TransferConfig::defaults(base.backend);
  if (axis == SweepAxis::content_layer) c.set_layers(d.style_layers, {layer});
  else c.set_layers({layer}, d.content_layers);
  return c;
}

namespace detail {

// One row: content, style1, style2, then one tile per cell (mid-gray when
// the cell failed), separated by gray gutters.
inline ImageTensor contact_sheet(const ExperimentInputs& in, const std::vector<SweepCell>& cells) {
  std::vector<ImageTensor> tiles{in.content, in.style1};
  if (in.style2) tiles.push_back(*in.style2);
  const int h = in.content.height, w = in.content.width;
  for (const auto& c : cells) {
    ImageTensor t(h, w, 1, 0.5);
    if (c.ok) {
      try {
        t = load_image(c.dir / "generated.png", h, true);
        if (t.width != w) t = resize_bilinear(t, h, w);
      } catch (const std::exception&) {
      }
    }
    tiles.push_back(std::move(t));
  }
  const int gutter = std::max(2, w / 32);
  const int n = static_cast<int>(tiles.size());
  ImageTensor sheet(h + 2 * gutter, n * w + (n + 1) * gutter, 1, 0.5);
  for (int i = 0; i < n; ++i) {
    const ImageTensor& t = tiles[i].inverted ? invert(tiles[i]) : tiles[i];
    const int x0 = gutter + i * (w + gutter);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) sheet.at(gutter + y, x0 + x) = t.at(y, x);
  }
  return sheet;
}

}  // namespace detail

/// One run per layer of sweep_layers() on `axis`. Cells run independently
/// (optionally on several worker threads), each in <dir>/<layer>; a failing
/// cell is recorded and the rest continue. Writes contact_sheet.png and
/// sweep.json into the sweep directory.
inline SweepReport layer_sweep(const ExperimentSpec& base, SweepAxis axis, const SweepOptions& opts = {}) {
  if (opts.workers < 1) throw ArgumentError("workers must be >= 1");
  if (opts.iterations < 0) throw ArgumentError("iterations must be >= 0");
  const ExperimentInputs in = load_inputs(base);
  SweepReport rep;
  rep.dir = opts.out_dir.empty() ? base.output_dir / (std::string("sweep_") + to_string(axis)) : opts.out_dir;
  for (const auto& l : sweep_layers(base.transfer.backend)) rep.cells.push_back({l, rep.dir / l});
  std::filesystem::create_directories(rep.dir);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < rep.cells.size();) {
      SweepCell& cell = rep.cells[i];
      try {
        const auto manifest = cell.dir / "manifest.json";
        if (opts.resume && std::filesystem::exists(manifest)) {
          std::ifstream f(manifest);
          const json m = json::parse(f);
          cell.final_total = m.at("run").at("final_loss").at("total").get<double>();
          cell.ok = cell.resumed = true;
          continue;
        }
        ExperimentSpec s = base;
        s.name = base.name + "/" + to_string(axis) + "/" + cell.layer;
        s.transfer = sweep_cell_config(base.transfer, axis, cell.layer);
        if (opts.iterations > 0) s.transfer.iterations = opts.iterations;
        s.output_dir = cell.dir;
        const ExperimentResult r = run_experiment(s, in);
        cell.final_total = r.transfer.loss_trace.empty() ? 0.0 : r.transfer.loss_trace.back().total;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };
  const int nthreads = std::min<int>(opts.workers, static_cast<int>(rep.cells.size()));
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  save_image(detail::contact_sheet(in, rep.cells), rep.dir / "contact_sheet.png");
  json cells = json::array();
  for (const auto& c : rep.cells) {
    json e = {{"layer", c.layer}, {"dir", c.dir.string()}, {"ok", c.ok}, {"resumed", c.resumed}};
    if (c.ok) e["final_total"] = c.final_total;
    else e["error"] = c.error;
    cells.push_back(e);
  }
  const json summary = {{"name", base.name},
                        {"axis", to_string(axis)},
                        {"completed", rep.completed()},
                        {"failed", static_cast<int>(rep.cells.size()) - rep.completed()},
                        {"contact_sheet_order", "content, style1, style2, then cells in layer order"},
                        {"cells", cells}};
  detail::write_text_atomic(rep.dir / "sweep.json", summary.dump(2) + "\n");
  return rep;
}

}  // namespace stylediff
