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

#ifndef BMP_SUPPRESSION_H_
#define BMP_SUPPRESSION_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bmp/geometry.h"

namespace bmp {

// Greedy NMS by descending box score (lower index first on ties). A box is
// dropped when its IoU with an already kept box exceeds `iou_threshold`.
// Returns kept indices in the order they were kept.
std::vector<size_t> BboxNms(std::span<const BBox> boxes, double iou_threshold);

// Mean confidence of keypoints at or above `t_c`; 0 when none qualify.
double PoseScore(const Pose& pose, double t_c);

struct PoseCandidate {
  std::optional<Pose> pose;  // candidates without a pose are always kept
  double score = 0.0;
  double area = 0.0;  // object scale for OKS
};

// Similarity of `pred` to `reference`, treating reference keypoints with
// confidence >= t_c as annotated and using sqrt(area_a * area_b) as scale.
// Returns 0 when the similarity is undefined.
double PredictionOks(const Pose& reference, double reference_area,
                     const Pose& pred, double pred_area,
                     const SkeletonConfig& skeleton, double t_c);

// Greedy pose NMS by descending score. The first `num_pinned` candidates
// are kept unconditionally and act as already-kept references.
std::vector<size_t> PoseNms(std::span<const PoseCandidate> candidates,
                            double oks_threshold,
                            const SkeletonConfig& skeleton, double t_c,
                            size_t num_pinned = 0);

}  // namespace bmp

#endif  // BMP_SUPPRESSION_H_
