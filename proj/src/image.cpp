/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 teedepth contributors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "teedepth/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace teedepth {

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::kSim: return "sim";
    case Domain::kReal: return "real";
    case Domain::kTranslated: return "translated";
  }
  return "sim";
}

Domain domain_from_name(const std::string& name) {
  if (name == "sim") return Domain::kSim;
  if (name == "real") return Domain::kReal;
  if (name == "translated") return Domain::kTranslated;
  throw std::invalid_argument("unknown domain tag: " + name);
}

void USImage::apply_fan_mask() {
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (!fan.contains(r, c)) at(r, c) = 0;
}

bool USImage::fan_mask_clean() const {
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (!fan.contains(r, c) && at(r, c) != 0) return false;
  return true;
}

std::vector<float> USImage::to_float() const {
  std::vector<float> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out[i] = static_cast<float>(pixels[i]) / 255.0f;
  return out;
}

USImage USImage::from_float(const std::vector<float>& values, int w, int h,
                            Domain d, const FanGeometry& fan) {
  if (values.size() != static_cast<std::size_t>(w) * h)
    throw std::invalid_argument("from_float: value count does not match size");
  USImage img(w, h, d);
  img.fan = fan;
  for (std::size_t i = 0; i < values.size(); ++i) {
    float v = std::clamp(values[i], 0.0f, 1.0f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_png(const USImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }

  png_init_io(png, fp.get());
  // Fixed encoder settings keep output bytes reproducible.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r)
    rows[r] = const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(r) * img.width]);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

USImage load_png(const std::string& path, Domain domain) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);
  if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("expected 8-bit grayscale PNG: " + path);
  }

  USImage img(static_cast<int>(w), static_cast<int>(h), domain);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = &img.pixels[static_cast<std::size_t>(r) * w];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace teedepth
