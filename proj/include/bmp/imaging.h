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

#ifndef BMP_IMAGING_H_
#define BMP_IMAGING_H_

#include <array>
#include <cstdint>
#include <vector>

#include "bmp/geometry.h"

namespace bmp {

using Rgb = std::array<uint8_t, 3>;

// 8-bit RGB, row-major, interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0});
  Image(int width, int height, std::vector<uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool InBounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  Rgb At(int x, int y) const {
    const size_t i = Offset(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void Put(int x, int y, const Rgb& c) {
    const size_t i = Offset(x, y);
    pixels_[i] = c[0];
    pixels_[i + 1] = c[1];
    pixels_[i + 2] = c[2];
  }

  std::span<const uint8_t> pixels() const { return pixels_; }
  std::span<uint8_t> mutable_pixels() { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  size_t Offset(int x, int y) const {
    return (static_cast<size_t>(y) * static_cast<size_t>(width_) +
            static_cast<size_t>(x)) *
           3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> pixels_;
};

// Pixels under `mask` become opaque black; the input is left untouched.
Image MaskOut(const Image& image, const BinaryMask& mask);

// In-mask pixels kept, the rest scaled by `alpha` (rounded half-up).
// Throws std::invalid_argument for alpha outside [0, 1].
Image SemiTransparentBlend(const Image& image, const BinaryMask& instance_mask,
                           double alpha);

// Maps between full-image and crop coordinates:
//   crop = (image - offset) * scale
struct CropTransform {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;

  Point ToCrop(const Point& p) const {
    return {(p.x - offset_x) * scale, (p.y - offset_y) * scale};
  }
  Point ToImage(const Point& p) const {
    return {p.x / scale + offset_x, p.y / scale + offset_y};
  }
  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

struct Crop {
  Image image;
  CropTransform transform;
  // Crop pixels that fell outside the source image (zero-filled).
  int64_t padded_pixels = 0;
};

// Crop centred on `bbox`, grown by `padding_ratio` in both directions and
// snapped outward to width/height == `target_aspect`. Throws
// std::invalid_argument when the box does not intersect the image.
Crop CropExpand(const Image& image, const BBox& bbox, double padding_ratio,
                double target_aspect);

}  // namespace bmp

#endif  // BMP_IMAGING_H_
