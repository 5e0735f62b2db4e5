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

#include "bmp/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

namespace bmp {

double SquaredDistance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

Pixel PixelOf(const Point& p) {
  return {static_cast<int>(std::floor(p.x + 0.5)),
          static_cast<int>(std::floor(p.y + 0.5))};
}

double BoxIoU(const BBox& a, const BBox& b) {
  const double iw =
      std::min(a.Right(), b.Right()) - std::max(a.x, b.x);
  const double ih =
      std::min(a.Bottom(), b.Bottom()) - std::max(a.y, b.y);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = std::max(a.Area(), 0.0) + std::max(b.Area(), 0.0) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox ExtendToCover(const BBox& box, std::span<const Point> points) {
  double x0 = box.x, y0 = box.y, x1 = box.Right(), y1 = box.Bottom();
  for (const Point& p : points) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0, y1 - y0, box.score};
}

// ---------------------------------------------------------------------------
// Skeletons

bool SkeletonConfig::IsFacial(int index) const {
  return std::find(facial_indices.begin(), facial_indices.end(), index) !=
         facial_indices.end();
}

void SkeletonConfig::Validate() const {
  if (name.empty()) throw std::invalid_argument("skeleton without a name");
  if (keypoint_count <= 0) {
    throw std::invalid_argument("skeleton " + name + ": keypoint_count <= 0");
  }
  if (static_cast<int>(oks_sigmas.size()) != keypoint_count) {
    throw std::invalid_argument("skeleton " + name +
                                ": oks_sigmas size != keypoint_count");
  }
  if (!keypoint_names.empty() &&
      static_cast<int>(keypoint_names.size()) != keypoint_count) {
    throw std::invalid_argument("skeleton " + name +
                                ": keypoint_names size != keypoint_count");
  }
  for (double s : oks_sigmas) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("skeleton " + name + ": sigma must be > 0");
    }
  }
  for (int f : facial_indices) {
    if (f < 0 || f >= keypoint_count) {
      throw std::invalid_argument("skeleton " + name +
                                  ": facial index out of range");
    }
  }
}

namespace {

SkeletonConfig MakeCoco() {
  SkeletonConfig s;
  s.name = "coco17";
  s.keypoint_count = 17;
  s.keypoint_names = {"nose",           "left_eye",       "right_eye",
                      "left_ear",       "right_ear",      "left_shoulder",
                      "right_shoulder", "left_elbow",     "right_elbow",
                      "left_wrist",     "right_wrist",    "left_hip",
                      "right_hip",      "left_knee",      "right_knee",
                      "left_ankle",     "right_ankle"};
  s.facial_indices = {0, 1, 2};
  s.oks_sigmas = {.026, .025, .025, .035, .035, .079, .079, .072, .072,
                  .062, .062, .107, .107, .087, .087, .089, .089};
  return s;
}

SkeletonConfig MakeMerged22() {
  SkeletonConfig s = MakeCoco();
  s.name = "merged22";
  s.keypoint_count = 22;
  for (const char* extra : {"head_top", "neck", "thorax", "pelvis", "spine"}) {
    s.keypoint_names.emplace_back(extra);
    s.oks_sigmas.push_back(0.079);
  }
  return s;
}

struct Registry {
  std::mutex mu;
  std::map<std::string, SkeletonConfig, std::less<>> skeletons;

  Registry() {
    for (SkeletonConfig s : {MakeCoco(), MakeMerged22()}) {
      std::string key = s.name;
      skeletons.emplace(std::move(key), std::move(s));
    }
  }
};

Registry& GetRegistry() {
  static Registry* registry = new Registry();
  return *registry;
}

}  // namespace

const SkeletonConfig& CocoSkeleton() { return FindSkeleton("coco17"); }
const SkeletonConfig& Merged22Skeleton() { return FindSkeleton("merged22"); }

const SkeletonConfig& FindSkeleton(std::string_view name) {
  Registry& r = GetRegistry();
  std::lock_guard<std::mutex> lock(r.mu);
  auto it = r.skeletons.find(name);
  if (it == r.skeletons.end()) {
    throw std::out_of_range("unknown skeleton: " + std::string(name));
  }
  return it->second;
}

// std::map nodes are stable, so references handed out by FindSkeleton stay
// valid unless the same name is re-registered.
void RegisterSkeleton(SkeletonConfig skeleton) {
  skeleton.Validate();
  Registry& r = GetRegistry();
  std::lock_guard<std::mutex> lock(r.mu);
  std::string key = skeleton.name;
  r.skeletons.insert_or_assign(std::move(key), std::move(skeleton));
}

std::vector<std::string> RegisteredSkeletonNames() {
  Registry& r = GetRegistry();
  std::lock_guard<std::mutex> lock(r.mu);
  std::vector<std::string> names;
  for (const auto& [name, _] : r.skeletons) names.push_back(name);
  return names;
}

// ---------------------------------------------------------------------------
// BinaryMask

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw std::invalid_argument("mask dimensions must be non-negative");
  }
  bits_.assign(static_cast<size_t>(width) * static_cast<size_t>(height), 0);
}

BinaryMask BinaryMask::FromBox(const BBox& box, int width, int height) {
  BinaryMask m(width, height);
  // A pixel belongs to the box when its centre does.
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y - 0.5)));
  const int x1 = std::min(width - 1,
                          static_cast<int>(std::floor(box.Right() - 0.5)));
  const int y1 = std::min(height - 1,
                          static_cast<int>(std::floor(box.Bottom() - 0.5)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m.Set(x, y);
  }
  return m;
}

bool BinaryMask::Contains(const Point& p) const {
  const Pixel px = PixelOf(p);
  return GetOr0(px.x, px.y);
}

int64_t BinaryMask::Area() const {
  return std::count(bits_.begin(), bits_.end(), uint8_t{1});
}

std::optional<BBox> BinaryMask::BoundingBox() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!Get(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return BBox{static_cast<double>(x0), static_cast<double>(y0),
              static_cast<double>(x1 - x0 + 1),
              static_cast<double>(y1 - y0 + 1), 1.0};
}

std::optional<Point> BinaryMask::Centroid() const {
  double sx = 0, sy = 0;
  int64_t n = 0;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!Get(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Point{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

void BinaryMask::CheckSameSize(const BinaryMask& other) const {
  if (width_ != other.width_ || height_ != other.height_) {
    throw DimensionError("mask size mismatch: " + std::to_string(width_) +
                         "x" + std::to_string(height_) + " vs " +
                         std::to_string(other.width_) + "x" +
                         std::to_string(other.height_));
  }
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  CheckSameSize(other);
  for (size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

BinaryMask& BinaryMask::operator&=(const BinaryMask& other) {
  CheckSameSize(other);
  for (size_t i = 0; i < bits_.size(); ++i) bits_[i] &= other.bits_[i];
  return *this;
}

BinaryMask BinaryMask::Complement() const {
  BinaryMask out = *this;
  for (uint8_t& b : out.bits_) b ^= 1;
  return out;
}

BinaryMask BinaryMask::Minus(const BinaryMask& other) const {
  CheckSameSize(other);
  BinaryMask out = *this;
  for (size_t i = 0; i < bits_.size(); ++i) {
    out.bits_[i] = bits_[i] & static_cast<uint8_t>(other.bits_[i] ^ 1);
  }
  return out;
}

int64_t IntersectionArea(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("mask size mismatch");
  }
  auto ab = a.bits();
  auto bb = b.bits();
  int64_t n = 0;
  for (size_t i = 0; i < ab.size(); ++i) n += ab[i] & bb[i];
  return n;
}

double MaskIoU(const BinaryMask& a, const BinaryMask& b) {
  const int64_t inter = IntersectionArea(a, b);
  const int64_t uni = a.Area() + b.Area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask MaskUnion(std::span<const BinaryMask> masks, int width,
                     int height) {
  BinaryMask out(width, height);
  for (const BinaryMask& m : masks) out |= m;
  return out;
}

// ---------------------------------------------------------------------------
// RLE

Rle EncodeRle(const BinaryMask& mask) {
  Rle rle;
  rle.height = mask.height();
  rle.width = mask.width();
  uint8_t current = 0;
  uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const uint8_t v = mask.Get(x, y) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask DecodeRle(const Rle& rle) {
  const uint64_t expected =
      static_cast<uint64_t>(rle.height) * static_cast<uint64_t>(rle.width);
  const uint64_t total = std::accumulate(rle.counts.begin(), rle.counts.end(),
                                         uint64_t{0});
  if (total != expected) {
    throw std::invalid_argument("RLE runs sum to " + std::to_string(total) +
                                ", expected " + std::to_string(expected));
  }
  BinaryMask mask(rle.width, rle.height);
  uint64_t pos = 0;
  bool value = false;
  for (uint32_t run : rle.counts) {
    if (value) {
      for (uint64_t i = pos; i < pos + run; ++i) {
        const int x = static_cast<int>(i / static_cast<uint64_t>(rle.height));
        const int y = static_cast<int>(i % static_cast<uint64_t>(rle.height));
        mask.Set(x, y);
      }
    }
    pos += run;
    value = !value;
  }
  return mask;
}

std::string RleToString(const Rle& rle) {
  std::string s;
  const auto& counts = rle.counts;
  for (size_t i = 0; i < counts.size(); ++i) {
    int64_t x = static_cast<int64_t>(counts[i]);
    if (i > 2) x -= static_cast<int64_t>(counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

Rle RleFromString(std::string_view s, int height, int width) {
  Rle rle;
  rle.height = height;
  rle.width = width;
  size_t k = 0;
  while (k < s.size()) {
    int64_t x = 0;
    int m = 0;
    bool more = true;
    while (more) {
      if (k >= s.size()) {
        throw std::invalid_argument("truncated compressed RLE string");
      }
      const int c = static_cast<unsigned char>(s[k]) - 48;
      if (c < 0 || c > 63) {
        throw std::invalid_argument("invalid character in compressed RLE");
      }
      x |= static_cast<int64_t>(c & 0x1f) << (5 * m);
      more = (c & 0x20) != 0;
      ++k;
      ++m;
      if (!more && (c & 0x10)) x |= static_cast<int64_t>(-1) << (5 * m);
    }
    const size_t i = rle.counts.size();
    if (i > 2) x += static_cast<int64_t>(rle.counts[i - 2]);
    if (x < 0 || x > std::numeric_limits<uint32_t>::max()) {
      throw std::invalid_argument("compressed RLE run out of range");
    }
    rle.counts.push_back(static_cast<uint32_t>(x));
  }
  return rle;
}

// ---------------------------------------------------------------------------
// OKS

std::optional<double> ObjectKeypointSimilarity(std::span<const Keypoint> gt,
                                               std::span<const int> visibility,
                                               double area,
                                               std::span<const Keypoint> pred,
                                               std::span<const double> sigmas) {
  if (gt.size() != pred.size() || gt.size() != visibility.size() ||
      gt.size() != sigmas.size()) {
    throw std::invalid_argument("OKS: keypoint count mismatch");
  }
  if (!(area > 0.0)) return std::nullopt;
  double sum = 0.0;
  int annotated = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (visibility[i] <= 0) continue;
    const double kappa = 2.0 * sigmas[i];
    const double d2 = SquaredDistance(gt[i].position(), pred[i].position());
    sum += std::exp(-d2 / (2.0 * area * kappa * kappa));
    ++annotated;
  }
  if (annotated == 0) return std::nullopt;
  return sum / annotated;
}

std::optional<double> ObjectKeypointSimilarity(const Pose& gt,
                                               std::span<const int> visibility,
                                               double area, const Pose& pred,
                                               const SkeletonConfig& skeleton) {
  return ObjectKeypointSimilarity(gt.keypoints, visibility, area,
                                  pred.keypoints, skeleton.oks_sigmas);
}

}  // namespace bmp
