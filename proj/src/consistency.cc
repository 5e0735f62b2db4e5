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

#include "bmp/consistency.h"

#include <stdexcept>

namespace bmp {

std::optional<ConsistencyReport> PoseMaskConsistency(
    const BinaryMask& mask, std::span<const Point> positives,
    std::span<const Point> negatives) {
  if (positives.empty()) return std::nullopt;
  ConsistencyReport r;
  r.positives_total = static_cast<int>(positives.size());
  r.negatives_total = static_cast<int>(negatives.size());
  for (const Point& p : positives) r.positives_inside += mask.Contains(p);
  for (const Point& p : negatives) r.negatives_outside += !mask.Contains(p);
  r.pmc = static_cast<double>(r.positives_inside) / r.positives_total;
  r.pmc += r.negatives_total == 0
               ? 1.0
               : static_cast<double>(r.negatives_outside) / r.negatives_total;
  return r;
}

MaskGateResult MaskGate(const BinaryMask& original, const BinaryMask& refined,
                        std::span<const Point> positives,
                        std::span<const Point> negatives) {
  if (original.width() != refined.width() ||
      original.height() != refined.height()) {
    throw DimensionError("mask gate: original and refined differ in size");
  }
  auto before = PoseMaskConsistency(original, positives, negatives);
  auto after = PoseMaskConsistency(refined, positives, negatives);
  if (!before || !after) {
    throw std::invalid_argument("mask gate: no positive keypoints");
  }
  MaskGateResult out;
  out.original = *before;
  out.refined = *after;
  out.refined_kept = after->pmc >= before->pmc;
  out.mask = out.refined_kept ? refined : original;
  return out;
}

}  // namespace bmp
