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

#ifndef BMP_CONSISTENCY_H_
#define BMP_CONSISTENCY_H_

#include <optional>
#include <span>

#include "bmp/geometry.h"

namespace bmp {

// Pose-mask consistency: share of own keypoints inside the mask plus share
// of other instances' keypoints outside it. No negatives counts as 1.0.
struct ConsistencyReport {
  double pmc = 0.0;
  int positives_inside = 0;
  int positives_total = 0;
  int negatives_outside = 0;
  int negatives_total = 0;
};

// nullopt when `positives` is empty.
std::optional<ConsistencyReport> PoseMaskConsistency(
    const BinaryMask& mask, std::span<const Point> positives,
    std::span<const Point> negatives);

struct MaskGateResult {
  BinaryMask mask;
  bool refined_kept = false;
  ConsistencyReport original;
  ConsistencyReport refined;
};

// Keeps `refined` unless its consistency is strictly lower than the
// original's. Throws DimensionError on size mismatch and
// std::invalid_argument when `positives` is empty.
MaskGateResult MaskGate(const BinaryMask& original, const BinaryMask& refined,
                        std::span<const Point> positives,
                        std::span<const Point> negatives);

}  // namespace bmp

#endif  // BMP_CONSISTENCY_H_
