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

#include "bmp/suppression.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bmp {

namespace {

std::vector<size_t> ByDescendingScore(size_t n, auto score_of) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return score_of(a) > score_of(b);
  });
  return order;
}

}  // namespace

std::vector<size_t> BboxNms(std::span<const BBox> boxes,
                            double iou_threshold) {
  const auto order = ByDescendingScore(
      boxes.size(), [&](size_t i) { return boxes[i].score; });
  std::vector<size_t> kept;
  for (size_t i : order) {
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](size_t k) {
          return BoxIoU(boxes[k], boxes[i]) > iou_threshold;
        });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

double PoseScore(const Pose& pose, double t_c) {
  double sum = 0.0;
  int n = 0;
  for (const Keypoint& k : pose.keypoints) {
    if (k.confidence < t_c) continue;
    sum += k.confidence;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

double PredictionOks(const Pose& reference, double reference_area,
                     const Pose& pred, double pred_area,
                     const SkeletonConfig& skeleton, double t_c) {
  if (reference.keypoints.size() != pred.keypoints.size()) return 0.0;
  std::vector<int> visibility(reference.keypoints.size());
  for (size_t i = 0; i < visibility.size(); ++i) {
    visibility[i] = reference.keypoints[i].confidence >= t_c ? 1 : 0;
  }
  const double area = std::sqrt(std::max(reference_area, 0.0) *
                                std::max(pred_area, 0.0));
  return ObjectKeypointSimilarity(reference.keypoints, visibility, area,
                                  pred.keypoints, skeleton.oks_sigmas)
      .value_or(0.0);
}

std::vector<size_t> PoseNms(std::span<const PoseCandidate> candidates,
                            double oks_threshold,
                            const SkeletonConfig& skeleton, double t_c,
                            size_t num_pinned) {
  num_pinned = std::min(num_pinned, candidates.size());
  std::vector<size_t> kept;
  std::vector<size_t> references;
  for (size_t i = 0; i < num_pinned; ++i) {
    kept.push_back(i);
    if (candidates[i].pose) references.push_back(i);
  }
  auto rest = ByDescendingScore(candidates.size() - num_pinned, [&](size_t i) {
    return candidates[num_pinned + i].score;
  });
  for (size_t r : rest) {
    const size_t i = num_pinned + r;
    const PoseCandidate& c = candidates[i];
    if (!c.pose) {
      kept.push_back(i);
      continue;
    }
    const bool suppressed =
        std::any_of(references.begin(), references.end(), [&](size_t k) {
          const PoseCandidate& ref = candidates[k];
          return PredictionOks(*ref.pose, ref.area, *c.pose, c.area, skeleton,
                               t_c) > oks_threshold;
        });
    if (!suppressed) {
      kept.push_back(i);
      references.push_back(i);
    }
  }
  return kept;
}

}  // namespace bmp
