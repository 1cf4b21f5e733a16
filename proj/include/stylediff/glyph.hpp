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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "stylediff/errors.hpp"
#include "stylediff/image.hpp"

#ifndef STYLEDIFF_STB_TRUETYPE_INCLUDED
#define STYLEDIFF_STB_TRUETYPE_INCLUDED
#if defined(__GNUC__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wunused-function"
#endif
#define STBTT_STATIC
#define STB_TRUETYPE_IMPLEMENTATION
#include "stb_truetype.h"
#if defined(__GNUC__)
#pragma GCC diagnostic pop
#endif
#endif

namespace stylediff {

struct GlyphSpec {
  std::filesystem::path font_path;
  char32_t codepoint = U'A';
  int canvas = 256;
  double margin_fraction = 0.15;

  friend bool operator==(const GlyphSpec&, const GlyphSpec&) = default;
};

/// Decodes the first UTF-8 scalar of `s`. Throws ArgumentError on empty or
/// malformed input.
inline char32_t first_codepoint(std::string_view s) {
  if (s.empty()) throw ArgumentError("empty character string");
  const auto b0 = static_cast<unsigned char>(s[0]);
  int len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) return b0;
  if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
  else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
  else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
  else throw ArgumentError("malformed UTF-8 character");
  if (static_cast<int>(s.size()) < len) throw ArgumentError("truncated UTF-8 character");
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[i]);
    if ((b & 0xC0) != 0x80) throw ArgumentError("malformed UTF-8 character");
    cp = (cp << 6) | (b & 0x3F);
  }
  return cp;
}

inline std::string codepoint_label(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

/// Renders one glyph, anti-aliased, black on white. The outline is scaled so
/// its larger side spans canvas * (1 - 2 * margin) and the rendered ink
/// bounding box is centered on the canvas.
inline ImageTensor rasterize_glyph(const GlyphSpec& spec) {
  if (spec.canvas < 1) throw ArgumentError("canvas must be >= 1");
  if (!(spec.margin_fraction >= 0.0 && spec.margin_fraction < 0.4))
    throw ArgumentError("margin_fraction must lie in [0, 0.4)");

  std::ifstream in(spec.font_path, std::ios::binary);
  if (!in) throw IoError("cannot open font " + spec.font_path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.empty()) throw IoError("empty font file " + spec.font_path.string());

  stbtt_fontinfo font;
  const int offset = stbtt_GetFontOffsetForIndex(data.data(), 0);
  if (offset < 0 || !stbtt_InitFont(&font, data.data(), offset))
    throw IoError("cannot parse font " + spec.font_path.string());

  const int glyph = stbtt_FindGlyphIndex(&font, static_cast<int>(spec.codepoint));
  if (glyph == 0)
    throw GlyphNotFound(codepoint_label(spec.codepoint) + " in " + spec.font_path.filename().string());

  ImageTensor img(spec.canvas, spec.canvas, 1, 1.0);
  int gx0, gy0, gx1, gy1;
  if (stbtt_IsGlyphEmpty(&font, glyph) || !stbtt_GetGlyphBox(&font, glyph, &gx0, &gy0, &gx1, &gy1))
    return img;
  const int extent = std::max(gx1 - gx0, gy1 - gy0);
  if (extent <= 0) return img;

  const double avail = spec.canvas * (1.0 - 2.0 * spec.margin_fraction);
  const auto scale = static_cast<float>(avail / extent);
  int bw = 0, bh = 0, xoff = 0, yoff = 0;
  unsigned char* bitmap = stbtt_GetGlyphBitmap(&font, scale, scale, glyph, &bw, &bh, &xoff, &yoff);
  if (!bitmap) return img;

  int ix0 = bw, iy0 = bh, ix1 = -1, iy1 = -1;
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x)
      if (bitmap[y * bw + x]) {
        ix0 = std::min(ix0, x);
        ix1 = std::max(ix1, x);
        iy0 = std::min(iy0, y);
        iy1 = std::max(iy1, y);
      }
  if (ix1 >= 0) {
    const int dx = (spec.canvas - (ix1 - ix0 + 1)) / 2 - ix0;
    const int dy = (spec.canvas - (iy1 - iy0 + 1)) / 2 - iy0;
    for (int y = iy0; y <= iy1; ++y)
      for (int x = ix0; x <= ix1; ++x) {
        const int cy = y + dy, cx = x + dx;
        if (cy < 0 || cx < 0 || cy >= spec.canvas || cx >= spec.canvas) continue;
        img.at(cy, cx) = 1.0 - bitmap[y * bw + x] / 255.0;
      }
  }
  stbtt_FreeBitmap(bitmap, nullptr);
  img.normalize();
  return img;
}

}  // namespace stylediff
