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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support.hpp"

namespace sd = stylediff;
using sd::ImageTensor;
using sd::testing::TempDir;

namespace {

std::vector<unsigned char> read_png_bytes(const std::filesystem::path& p, int* w, int* h, int* c) {
  unsigned char* data = stbi_load(p.string().c_str(), w, h, c, 0);
  EXPECT_NE(data, nullptr);
  std::vector<unsigned char> out(data, data + (*w) * (*h) * (*c));
  stbi_image_free(data);
  return out;
}

}  // namespace

TEST(ImageTensor, RejectsBadShapes) {
  EXPECT_THROW(ImageTensor(0, 4, 1), sd::ArgumentError);
  EXPECT_THROW(ImageTensor(4, 4, 2), sd::ArgumentError);
  ImageTensor img(2, 2, 1);
  img.pixels[0] = 1.5;
  EXPECT_THROW(img.validate(), sd::ArgumentError);
}

TEST(Invert, ZerosBecomeOnes) {
  const ImageTensor out = sd::invert(ImageTensor(3, 4, 1, 0.0));
  for (double v : out.pixels) EXPECT_EQ(v, 1.0);
  EXPECT_TRUE(out.inverted);
}

TEST(Invert, QuarterBecomesThreeQuarters) {
  ImageTensor img(1, 1, 1, 0.25);
  EXPECT_EQ(sd::invert(img).pixels[0], 0.75);
}

TEST(Invert, ExactInvolution) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageTensor img = sd::testing::random_image(17, 23, seed, seed % 2 ? 3 : 1);
    EXPECT_EQ(sd::invert(sd::invert(img)), img);
  }
}

TEST(Binarize, Examples) {
  ImageTensor img(1, 2, 1);
  img.pixels = {0.2, 0.8};
  EXPECT_EQ(sd::binarize(img, 0.5).pixels, (std::vector<double>{0.0, 1.0}));
  const ImageTensor half(3, 3, 1, 0.5);
  for (double v : sd::binarize(half, 0.5).pixels) EXPECT_EQ(v, 1.0);
}

TEST(Binarize, IdempotentAndBinary) {
  const ImageTensor img = sd::testing::random_image(20, 20, 3);
  const ImageTensor once = sd::binarize(img, 0.37);
  EXPECT_EQ(sd::binarize(once, 0.37), once);
  for (double v : once.pixels) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Binarize, ThresholdOutOfRange) {
  const ImageTensor img(2, 2, 1);
  EXPECT_THROW(sd::binarize(img, 0.0), sd::ArgumentError);
  EXPECT_THROW(sd::binarize(img, 1.0), sd::ArgumentError);
}

TEST(SaveImage, QuantizationRule) {
  EXPECT_EQ(sd::quantize_pixel(1.0), 255);
  EXPECT_EQ(sd::quantize_pixel(0.0), 0);
  // 0.5 * 255 = 127.5, rounded half up
  EXPECT_EQ(sd::quantize_pixel(0.5), 128);

  TempDir dir("save");
  ImageTensor img(1, 3, 1);
  img.pixels = {1.0, 0.0, 0.5};
  sd::save_image(img, dir / "q.png");
  int w, h, c;
  const auto bytes = read_png_bytes(dir / "q.png", &w, &h, &c);
  EXPECT_EQ(bytes, (std::vector<unsigned char>{255, 0, 128}));
}

TEST(SaveImage, InvertedImagesAreFlippedBack) {
  TempDir dir("save_inv");
  ImageTensor img(1, 2, 1);
  img.pixels = {1.0, 0.25};
  sd::save_image(sd::invert(img), dir / "a.png");
  int w, h, c;
  EXPECT_EQ(read_png_bytes(dir / "a.png", &w, &h, &c), (std::vector<unsigned char>{255, 64}));
}

TEST(SaveImage, UnwritablePath) {
  EXPECT_THROW(sd::save_image(ImageTensor(2, 2, 1), "/nonexistent_dir_xyz/a.png"), sd::IoError);
}

TEST(LoadImage, WhitePngIsAllOnes) {
  TempDir dir("white");
  sd::save_image(ImageTensor(256, 256, 1, 1.0), dir / "white.png");
  const ImageTensor img = sd::load_image(dir / "white.png", 256, true);
  EXPECT_EQ(img.height, 256);
  EXPECT_EQ(img.channels, 1);
  for (double v : img.pixels) EXPECT_EQ(v, 1.0);
}

TEST(LoadImage, ResizesToTarget) {
  TempDir dir("resize");
  sd::save_image(sd::testing::random_image(512, 512, 1, 3), dir / "big.png");
  const ImageTensor img = sd::load_image(dir / "big.png", 256, false);
  EXPECT_EQ(img.height, 256);
  EXPECT_EQ(img.width, 256);
  EXPECT_EQ(img.channels, 3);
  EXPECT_NO_THROW(img.validate());
}

TEST(LoadImage, CheckerboardBilinearOracle) {
  // 2x2 [[0,1],[1,0]] upscaled to 4x4 with half-pixel centers: output
  // sample i maps to source coordinate (i + 0.5) / 2 - 0.5, clamped to
  // [0,1], giving positions 0, 0.25, 0.75, 1 on each axis. Bilinear
  // interpolation of f(x,y) = x + y - 2xy at those positions, by hand:
  const double oracle[4][4] = {{0.0, 0.25, 0.75, 1.0},
                               {0.25, 0.375, 0.625, 0.75},
                               {0.75, 0.625, 0.375, 0.25},
                               {1.0, 0.75, 0.25, 0.0}};
  ImageTensor board(2, 2, 1);
  board.pixels = {0.0, 1.0, 1.0, 0.0};
  const ImageTensor up = sd::resize_bilinear(board, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(up.at(y, x), oracle[y][x], 1e-15) << y << "," << x;

  TempDir dir("checker");
  sd::save_image(board, dir / "board.png");
  const ImageTensor loaded = sd::load_image(dir / "board.png", 4, true);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(loaded.at(y, x), oracle[y][x], 1e-15);
}

TEST(LoadImage, Errors) {
  EXPECT_THROW(sd::load_image("/nonexistent/file.png", 16, true), sd::IoError);
  TempDir dir("err");
  sd::save_image(ImageTensor(4, 4, 1), dir / "a.png");
  EXPECT_THROW(sd::load_image(dir / "a.png", 0, true), sd::ArgumentError);
}

TEST(LoadImage, RoundTripWithinQuantization) {
  TempDir dir("roundtrip");
  const ImageTensor img = sd::testing::random_image(32, 32, 11);
  sd::save_image(img, dir / "a.png");
  const ImageTensor back = sd::load_image(dir / "a.png", 32, true);
  sd::save_image(back, dir / "b.png");
  const ImageTensor again = sd::load_image(dir / "b.png", 32, true);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_LE(std::abs(back.pixels[i] - img.pixels[i]), 1.0 / 255);
    EXPECT_EQ(again.pixels[i], back.pixels[i]);
  }
}

TEST(Rasterize, LetterHasInk) {
  const ImageTensor a = sd::testing::glyph("DejaVuSans.ttf", U'A', 256);
  EXPECT_EQ(a.height, 256);
  double lo = 1.0;
  for (double v : a.pixels) lo = std::min(lo, v);
  EXPECT_LT(lo, 0.5);
  EXPECT_NO_THROW(a.validate());
}

TEST(Rasterize, SpaceIsBlank) {
  const ImageTensor s = sd::testing::glyph("DejaVuSerif.ttf", U' ', 128);
  for (double v : s.pixels) EXPECT_GE(v, 0.99);
}

TEST(Rasterize, Deterministic) {
  for (const char* f : {"DejaVuSans.ttf", "KaTeX_Main-Regular.ttf"}) {
    EXPECT_EQ(sd::testing::glyph(f, U'g', 96), sd::testing::glyph(f, U'g', 96));
  }
}

TEST(Rasterize, InkIsCentered) {
  const ImageTensor img = sd::testing::glyph("DejaVuSerif.ttf", U'H', 200);
  int x0 = 200, x1 = -1, y0 = 200, y1 = -1;
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x)
      if (img.at(y, x) < 1.0) {
        x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
  EXPECT_LE(std::abs((x0 + x1) - 199), 1);
  EXPECT_LE(std::abs((y0 + y1) - 199), 1);
  // the larger side spans about canvas * (1 - 2 * margin)
  EXPECT_NEAR(std::max(x1 - x0, y1 - y0) + 1, 140, 3);
}

TEST(Rasterize, MissingGlyph) {
  sd::GlyphSpec s;
  s.font_path = sd::testing::font("KaTeX_SansSerif-Regular.ttf");
  s.codepoint = U'中';
  try {
    sd::rasterize_glyph(s);
    FAIL() << "expected GlyphNotFound";
  } catch (const sd::GlyphNotFound& e) {
    EXPECT_NE(std::string(e.what()).find("glyph not found"), std::string::npos);
  }
}

TEST(Rasterize, BadArguments) {
  sd::GlyphSpec s;
  s.font_path = sd::testing::font("DejaVuSans.ttf");
  s.canvas = 0;
  EXPECT_THROW(sd::rasterize_glyph(s), sd::ArgumentError);
  s.canvas = 64;
  s.margin_fraction = 0.4;
  EXPECT_THROW(sd::rasterize_glyph(s), sd::ArgumentError);
  s.margin_fraction = 0.1;
  s.font_path = "/nonexistent.ttf";
  EXPECT_THROW(sd::rasterize_glyph(s), sd::IoError);
}

TEST(Utf8, FirstCodepoint) {
  EXPECT_EQ(sd::first_codepoint("A"), U'A');
  EXPECT_EQ(sd::first_codepoint("\xC3\xA9"), U'é');
  EXPECT_EQ(sd::first_codepoint("\xE4\xB8\xAD"), U'中');
  EXPECT_THROW(sd::first_codepoint(""), sd::ArgumentError);
  EXPECT_THROW(sd::first_codepoint("\xC3"), sd::ArgumentError);
}

TEST(InkRatio, PolarityAware) {
  ImageTensor img(1, 4, 1, 1.0);
  img.pixels[0] = 0.0;
  EXPECT_DOUBLE_EQ(sd::ink_ratio(img), 0.25);
  EXPECT_DOUBLE_EQ(sd::ink_ratio(sd::invert(img)), 0.25);
}
