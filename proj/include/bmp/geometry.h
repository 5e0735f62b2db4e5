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

#ifndef BMP_GEOMETRY_H_
#define BMP_GEOMETRY_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bmp {

// Thrown when two rasters (masks or images) that must share a size do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double SquaredDistance(const Point& a, const Point& b);

// Integer pixel a continuous coordinate falls on; rounds half-up.
struct Pixel {
  int x = 0;
  int y = 0;
};
Pixel PixelOf(const Point& p);

// Axis-aligned box in COCO layout: top-left corner plus extent.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 1.0;

  double Area() const { return w * h; }
  double Right() const { return x + w; }
  double Bottom() const { return y + h; }
  Point Center() const { return {x + w / 2.0, y + h / 2.0}; }
  bool Contains(const Point& p) const {
    return p.x >= x && p.x <= Right() && p.y >= y && p.y <= Bottom();
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Intersection over union; 0 when the union is empty.
double BoxIoU(const BBox& a, const BBox& b);

// Smallest box containing `box` and every point in `points`.
BBox ExtendToCover(const BBox& box, std::span<const Point> points);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;

  Point position() const { return {x, y}; }
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

// Named keypoint layout. `oks_sigmas` are the COCO per-keypoint sigmas; the
// similarity itself uses kappa = 2 * sigma as pycocotools does.
struct SkeletonConfig {
  std::string name;
  int keypoint_count = 0;
  std::vector<std::string> keypoint_names;
  std::vector<int> facial_indices;
  std::vector<double> oks_sigmas;

  bool IsFacial(int index) const;
  // Throws std::invalid_argument on a broken layout.
  void Validate() const;
};

const SkeletonConfig& CocoSkeleton();
const SkeletonConfig& Merged22Skeleton();

// Built-in or registered skeleton by name; throws std::out_of_range.
const SkeletonConfig& FindSkeleton(std::string_view name);
// Adds (or replaces) a skeleton in the process-wide registry.
void RegisterSkeleton(SkeletonConfig skeleton);
std::vector<std::string> RegisteredSkeletonNames();

struct Pose {
  std::string skeleton_id;
  std::vector<Keypoint> keypoints;

  friend bool operator==(const Pose&, const Pose&) = default;
};

// COCO run-length encoding: column-major, first run counts zeros.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

// Dense single-channel bitmap, row-major, one byte (0/1) per pixel.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  static BinaryMask FromBox(const BBox& box, int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool InBounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool Get(int x, int y) const { return bits_[Index(x, y)] != 0; }
  // Out-of-bounds reads as unset.
  bool GetOr0(int x, int y) const { return InBounds(x, y) && Get(x, y); }
  void Set(int x, int y, bool value = true) {
    bits_[Index(x, y)] = value ? 1 : 0;
  }
  bool Contains(const Point& p) const;

  int64_t Area() const;
  bool Empty() const { return Area() == 0; }
  // Tight pixel box (COCO convention, w = max_x - min_x + 1); none if empty.
  std::optional<BBox> BoundingBox() const;
  std::optional<Point> Centroid() const;

  BinaryMask& operator|=(const BinaryMask& other);
  BinaryMask& operator&=(const BinaryMask& other);
  BinaryMask Complement() const;
  // this & ~other
  BinaryMask Minus(const BinaryMask& other) const;

  std::span<const uint8_t> bits() const { return bits_; }
  std::span<uint8_t> mutable_bits() { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  size_t Index(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width_) +
           static_cast<size_t>(x);
  }
  void CheckSameSize(const BinaryMask& other) const;

  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> bits_;
};

int64_t IntersectionArea(const BinaryMask& a, const BinaryMask& b);
double MaskIoU(const BinaryMask& a, const BinaryMask& b);
BinaryMask MaskUnion(std::span<const BinaryMask> masks, int width, int height);

Rle EncodeRle(const BinaryMask& mask);
// Throws std::invalid_argument when the runs do not sum to width * height.
BinaryMask DecodeRle(const Rle& rle);
// COCO compressed-string form (LEB128-like, 6 bits per char, offset 48).
std::string RleToString(const Rle& rle);
Rle RleFromString(std::string_view s, int height, int width);

// Object keypoint similarity between an annotated pose and a prediction.
// `visibility` > 0 marks annotated ground-truth keypoints. Returns nullopt
// when nothing is annotated or the area is not positive.
std::optional<double> ObjectKeypointSimilarity(std::span<const Keypoint> gt,
                                               std::span<const int> visibility,
                                               double area,
                                               std::span<const Keypoint> pred,
                                               std::span<const double> sigmas);

std::optional<double> ObjectKeypointSimilarity(const Pose& gt,
                                               std::span<const int> visibility,
                                               double area, const Pose& pred,
                                               const SkeletonConfig& skeleton);

}  // namespace bmp

#endif  // BMP_GEOMETRY_H_
