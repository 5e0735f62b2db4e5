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

// Point and box prompts for a promptable segmenter, derived from a pose.

#ifndef BMP_PROMPTING_H_
#define BMP_PROMPTING_H_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmp/geometry.h"

namespace bmp {

enum class SelectionMode {
  kConfidence,             // top-N by confidence
  kDistance,               // N farthest from the box centre
  kConfidencePlusDistance  // most confident, then greedy farthest-point
};

enum class BboxPromptMode {
  kNever,
  kAlways,
  kByMaxIoU  // box only for instances whose overlap is below the threshold
};

std::string_view ToString(SelectionMode mode);
std::string_view ToString(BboxPromptMode mode);
// Accepts "c", "d", "c+d" and the long names; throws std::invalid_argument.
SelectionMode ParseSelectionMode(std::string_view text);

struct PromptPolicy {
  double t_c = 0.3;
  int n_max = 6;
  // Positive count when a box prompt accompanies the points.
  int n_max_with_bbox = 6;
  int n_neg = 0;
  SelectionMode selection_mode = SelectionMode::kConfidencePlusDistance;
  BboxPromptMode bbox_mode = BboxPromptMode::kNever;
  double bbox_iou_threshold = 0.5;
  bool extend_bbox = false;
  bool facial_cap = true;

  // Prompting used inside the loop.
  static PromptPolicy LoopDefault();
  // Prompting used for post-loop mask/pose refinement.
  static PromptPolicy Refinement();

  void Validate() const;
  friend bool operator==(const PromptPolicy&, const PromptPolicy&) = default;
};

struct PromptSet {
  std::vector<Point> positives;
  std::vector<Point> negatives;
  std::optional<BBox> bbox;
};

// Indices into pose.keypoints, in selection order. `box` is only consulted
// by the distance-only mode (falls back to the candidates' tight box).
std::vector<int> SelectPositiveIndices(const Pose& pose,
                                       const SkeletonConfig& skeleton,
                                       const PromptPolicy& policy, int n_max,
                                       const std::optional<BBox>& box = {});

std::vector<Point> SelectPositivePrompts(const Pose& pose,
                                         const SkeletonConfig& skeleton,
                                         const PromptPolicy& policy,
                                         const std::optional<BBox>& box = {});

// Up to policy.n_neg confident keypoints of `others`, nearest first to the
// selected positives.
std::vector<Point> SelectNegativePrompts(std::span<const Point> positives,
                                         std::span<const Pose> others,
                                         const PromptPolicy& policy);

// Whether the policy sends a box for an instance with this overlap.
bool UsesBboxPrompt(const PromptPolicy& policy, double max_iou);

std::optional<BBox> BboxPrompt(const BBox& bbox,
                               std::span<const Point> positives,
                               double max_iou, const PromptPolicy& policy);

// Everything above composed: decides on the box first (it changes the
// positive budget), then picks positives, negatives and the final box.
PromptSet BuildPromptSet(const Pose& pose, const SkeletonConfig& skeleton,
                         const BBox& bbox, std::span<const Pose> others,
                         double max_iou, const PromptPolicy& policy);

}  // namespace bmp

#endif  // BMP_PROMPTING_H_
