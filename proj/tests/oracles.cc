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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace bmp::testing {

BinaryMask RandomMask(Rng& rng, int width, int height, double density) {
  std::bernoulli_distribution bit(density);
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) m.Set(x, y, bit(rng));
  }
  return m;
}

Image RandomImage(Rng& rng, int width, int height) {
  std::uniform_int_distribution<int> byte(0, 255);
  Image im(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      im.Put(x, y,
             {static_cast<uint8_t>(byte(rng)), static_cast<uint8_t>(byte(rng)),
              static_cast<uint8_t>(byte(rng))});
    }
  }
  return im;
}

Pose RandomGridPose(Rng& rng, int keypoints, int grid) {
  std::uniform_int_distribution<int> cell(0, grid - 1);
  std::uniform_int_distribution<int> tenth(0, 10);
  Pose p;
  p.skeleton_id = "coco17";
  for (int i = 0; i < keypoints; ++i) {
    p.keypoints.push_back({static_cast<double>(cell(rng)),
                           static_cast<double>(cell(rng)), tenth(rng) / 10.0});
  }
  return p;
}

BBox RandomBox(Rng& rng, double extent) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> size(1.0, extent / 2.0);
  return {pos(rng), pos(rng), size(rng), size(rng), 1.0};
}

Image OracleMaskOut(const Image& image, const BinaryMask& mask) {
  Image out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.Put(x, y, mask.Get(x, y) ? Rgb{0, 0, 0} : image.At(x, y));
    }
  }
  return out;
}

Image OracleBlend(const Image& image, const BinaryMask& mask, double alpha) {
  Image out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      Rgb c = image.At(x, y);
      if (!mask.Get(x, y)) {
        for (auto& v : c) v = static_cast<uint8_t>(std::round(v * alpha));
      }
      out.Put(x, y, c);
    }
  }
  return out;
}

std::vector<int> OracleGreedyPrompts(const Pose& pose, double t_c, int n_max,
                                     const std::set<int>& facial,
                                     bool facial_cap) {
  const auto& k = pose.keypoints;
  const int n = static_cast<int>(k.size());
  std::vector<int> chosen;
  auto eligible = [&](int i) {
    if (k[i].confidence < t_c) return false;
    if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) {
      return false;
    }
    if (facial_cap && facial.count(i)) {
      for (int c : chosen) {
        if (facial.count(c)) return false;
      }
    }
    return true;
  };
  while (static_cast<int>(chosen.size()) < n_max) {
    int best = -1;
    std::tuple<double, double, int> best_key;
    for (int i = 0; i < n; ++i) {
      if (!eligible(i)) continue;
      double d = std::numeric_limits<double>::infinity();
      for (int c : chosen) {
        d = std::min(d, std::hypot(k[i].x - k[c].x, k[i].y - k[c].y));
      }
      // Before anything is chosen every distance is infinite, so the
      // confidence term decides the seed.
      const std::tuple<double, double, int> key{d, k[i].confidence, -i};
      if (best < 0 || key > best_key) {
        best = i;
        best_key = key;
      }
    }
    if (best < 0) break;
    chosen.push_back(best);
  }
  return chosen;
}

double OracleBoxIoU(const BBox& a, const BBox& b) {
  const double x1 = std::max(a.x, b.x);
  const double y1 = std::max(a.y, b.y);
  const double x2 = std::min(a.x + a.w, b.x + b.w);
  const double y2 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

template <typename Score, typename Overlap>
std::set<size_t> GreedyOracle(size_t n, Score score, Overlap overlap,
                              double threshold) {
  std::set<size_t> kept;
  std::vector<bool> alive(n, true);
  for (;;) {
    size_t best = n;
    for (size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      if (best == n || score(i) > score(best)) best = i;
    }
    if (best == n) break;
    kept.insert(best);
    alive[best] = false;
    for (size_t i = 0; i < n; ++i) {
      if (alive[i] && overlap(best, i) > threshold) alive[i] = false;
    }
  }
  return kept;
}

}  // namespace

std::set<size_t> OracleBboxNms(const std::vector<BBox>& boxes,
                               double iou_threshold) {
  return GreedyOracle(
      boxes.size(), [&](size_t i) { return boxes[i].score; },
      [&](size_t a, size_t b) { return OracleBoxIoU(boxes[a], boxes[b]); },
      iou_threshold);
}

std::set<size_t> OraclePoseNms(const std::vector<OraclePose>& poses,
                               double oks_threshold,
                               const std::vector<double>& sigmas, double t_c) {
  auto oks = [&](size_t ref, size_t other) {
    std::vector<int> vis;
    for (const Keypoint& kp : poses[ref].keypoints) {
      vis.push_back(kp.confidence >= t_c ? 1 : 0);
    }
    const double area = std::sqrt(poses[ref].area * poses[other].area);
    const double v = ReferenceOks(poses[ref].keypoints, vis, area,
                                  poses[other].keypoints, sigmas);
    return v < 0 ? 0.0 : v;
  };
  return GreedyOracle(
      poses.size(), [&](size_t i) { return poses[i].score; }, oks,
      oks_threshold);
}

double ReferenceOks(const std::vector<Keypoint>& gt,
                    const std::vector<int>& visibility, double area,
                    const std::vector<Keypoint>& pred,
                    const std::vector<double>& sigmas) {
  double total = 0.0;
  int count = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (visibility[i] <= 0) continue;
    const double var = (sigmas[i] * 2) * (sigmas[i] * 2);
    const double dx = pred[i].x - gt[i].x;
    const double dy = pred[i].y - gt[i].y;
    const double e = (dx * dx + dy * dy) / var /
                     (area + std::numeric_limits<double>::epsilon()) / 2;
    total += std::exp(-e);
    ++count;
  }
  return count ? total / count : -1.0;
}

double OracleBoxAp(const std::vector<BBox>& gt,
                   const std::vector<std::pair<BBox, double>>& dets,
                   double iou_threshold) {
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dets[a].second > dets[b].second;
  });
  std::vector<bool> taken(gt.size(), false);
  std::vector<int> tp;
  for (size_t d : order) {
    int match = -1;
    double best = std::min(iou_threshold, 1 - 1e-10);
    for (size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double iou = OracleBoxIoU(dets[d].first, gt[g]);
      if (iou < best) continue;
      best = iou;
      match = static_cast<int>(g);
    }
    if (match >= 0) taken[match] = true;
    tp.push_back(match >= 0 ? 1 : 0);
  }
  std::vector<double> precision, recall;
  int tps = 0;
  for (size_t i = 0; i < tp.size(); ++i) {
    tps += tp[i];
    precision.push_back(static_cast<double>(tps) / (i + 1));
    recall.push_back(static_cast<double>(tps) / gt.size());
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    for (size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= level) {
        sum += precision[i];
        break;
      }
    }
  }
  return sum / 101.0;
}

}  // namespace bmp::testing
