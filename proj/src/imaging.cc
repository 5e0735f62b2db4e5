// Copyright 2026 The BMP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bmp/imaging.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace bmp {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw std::invalid_argument("image dimensions must be non-negative");
  }
  pixels_.resize(static_cast<size_t>(width) * static_cast<size_t>(height) * 3);
  for (size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

Image::Image(int width, int height, std::vector<uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 ||
      pixels_.size() !=
          static_cast<size_t>(width) * static_cast<size_t>(height) * 3) {
    throw std::invalid_argument("pixel buffer does not match " +
                                std::to_string(width) + "x" +
                                std::to_string(height) + "x3");
  }
}

namespace {

void CheckSameSize(const Image& image, const BinaryMask& mask) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw DimensionError(
        "image " + std::to_string(image.width()) + "x" +
        std::to_string(image.height()) + " vs mask " +
        std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
  }
}

}  // namespace

Image MaskOut(const Image& image, const BinaryMask& mask) {
  CheckSameSize(image, mask);
  Image out = image;
  auto bits = mask.bits();
  auto px = out.mutable_pixels();
  for (size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    px[3 * i] = 0;
    px[3 * i + 1] = 0;
    px[3 * i + 2] = 0;
  }
  return out;
}

Image SemiTransparentBlend(const Image& image, const BinaryMask& instance_mask,
                           double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1], got " +
                                std::to_string(alpha));
  }
  CheckSameSize(image, instance_mask);
  std::array<uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    lut[v] = static_cast<uint8_t>(std::floor(v * alpha + 0.5));
  }
  Image out = image;
  auto bits = instance_mask.bits();
  auto px = out.mutable_pixels();
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) continue;
    px[3 * i] = lut[px[3 * i]];
    px[3 * i + 1] = lut[px[3 * i + 1]];
    px[3 * i + 2] = lut[px[3 * i + 2]];
  }
  return out;
}

Crop CropExpand(const Image& image, const BBox& bbox, double padding_ratio,
                double target_aspect) {
  if (!(target_aspect > 0.0) || padding_ratio < 0.0) {
    throw std::invalid_argument("crop: bad aspect or padding");
  }
  const double ix = std::min(bbox.Right(), static_cast<double>(image.width())) -
                    std::max(bbox.x, 0.0);
  const double iy =
      std::min(bbox.Bottom(), static_cast<double>(image.height())) -
      std::max(bbox.y, 0.0);
  if (!(ix > 0.0 && iy > 0.0)) {
    throw std::invalid_argument("crop: bbox lies outside the image");
  }

  double w = bbox.w * (1.0 + padding_ratio);
  double h = bbox.h * (1.0 + padding_ratio);
  if (w < h * target_aspect) {
    w = h * target_aspect;
  } else {
    h = w / target_aspect;
  }
  const Point c = bbox.Center();
  const int cw = std::max(1, static_cast<int>(std::lround(w)));
  const int ch = std::max(1, static_cast<int>(std::lround(h)));
  const int x0 = static_cast<int>(std::lround(c.x - cw / 2.0));
  const int y0 = static_cast<int>(std::lround(c.y - ch / 2.0));

  Crop crop;
  crop.image = Image(cw, ch);
  crop.transform = {static_cast<double>(x0), static_cast<double>(y0), 1.0};
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const int sx = x0 + x;
      const int sy = y0 + y;
      if (image.InBounds(sx, sy)) {
        crop.image.Put(x, y, image.At(sx, sy));
      } else {
        ++crop.padded_pixels;
      }
    }
  }
  return crop;
}

}  // namespace bmp
