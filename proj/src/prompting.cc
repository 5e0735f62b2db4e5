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

#include "bmp/prompting.h"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace bmp {

std::string_view ToString(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::kConfidence:
      return "c";
    case SelectionMode::kDistance:
      return "d";
    case SelectionMode::kConfidencePlusDistance:
      return "c+d";
  }
  return "?";
}

std::string_view ToString(BboxPromptMode mode) {
  switch (mode) {
    case BboxPromptMode::kNever:
      return "never";
    case BboxPromptMode::kAlways:
      return "always";
    case BboxPromptMode::kByMaxIoU:
      return "by-max-iou";
  }
  return "?";
}

SelectionMode ParseSelectionMode(std::string_view text) {
  if (text == "c" || text == "confidence_only") {
    return SelectionMode::kConfidence;
  }
  if (text == "d" || text == "distance_only") return SelectionMode::kDistance;
  if (text == "c+d" || text == "confidence_plus_distance") {
    return SelectionMode::kConfidencePlusDistance;
  }
  throw std::invalid_argument("unknown selection mode: " + std::string(text));
}

PromptPolicy PromptPolicy::LoopDefault() {
  PromptPolicy p;
  p.t_c = 0.3;
  p.n_max = 6;
  p.n_max_with_bbox = 6;
  p.n_neg = 0;
  p.selection_mode = SelectionMode::kConfidencePlusDistance;
  p.bbox_mode = BboxPromptMode::kNever;
  p.extend_bbox = false;
  return p;
}

PromptPolicy PromptPolicy::Refinement() {
  PromptPolicy p;
  p.t_c = 0.5;
  p.n_max = 6;
  p.n_max_with_bbox = 4;
  p.n_neg = 0;
  p.selection_mode = SelectionMode::kConfidencePlusDistance;
  p.bbox_mode = BboxPromptMode::kByMaxIoU;
  p.bbox_iou_threshold = 0.5;
  p.extend_bbox = true;
  return p;
}

void PromptPolicy::Validate() const {
  if (!(t_c >= 0.0 && t_c <= 1.0)) {
    throw std::invalid_argument("prompt policy: t_c must lie in [0, 1]");
  }
  if (n_max < 1 || n_max_with_bbox < 1) {
    throw std::invalid_argument("prompt policy: n_max must be >= 1");
  }
  if (n_neg < 0) throw std::invalid_argument("prompt policy: n_neg < 0");
  if (!(bbox_iou_threshold >= 0.0 && bbox_iou_threshold <= 1.0)) {
    throw std::invalid_argument("prompt policy: bbox IoU threshold");
  }
}

namespace {

// Appends `idx` unless the facial budget is spent. Returns true if taken.
bool TakeRespectingFacialCap(int idx, const SkeletonConfig& skeleton,
                             bool facial_cap, bool& facial_taken,
                             std::vector<int>& out) {
  const bool facial = skeleton.IsFacial(idx);
  if (facial_cap && facial && facial_taken) return false;
  if (facial) facial_taken = true;
  out.push_back(idx);
  return true;
}

std::vector<int> GreedyFarthest(const Pose& pose,
                                const SkeletonConfig& skeleton,
                                std::vector<int> candidates, bool facial_cap,
                                int n_max) {
  const auto& kps = pose.keypoints;
  std::vector<int> selected;
  bool facial_taken = false;

  auto drop_facial = [&] {
    if (!facial_cap || !facial_taken) return;
    std::erase_if(candidates, [&](int i) { return skeleton.IsFacial(i); });
  };

  // Seed: highest confidence, lower index on ties (candidates are ordered).
  auto seed = std::max_element(
      candidates.begin(), candidates.end(), [&](int a, int b) {
        return kps[a].confidence < kps[b].confidence;
      });
  // max_element returns the first maximum, i.e. the lowest index.
  const int first = *seed;
  candidates.erase(seed);
  TakeRespectingFacialCap(first, skeleton, facial_cap, facial_taken, selected);
  drop_facial();

  std::vector<double> min_d2(kps.size(),
                             std::numeric_limits<double>::infinity());
  auto relax = [&](int from) {
    for (int c : candidates) {
      min_d2[c] = std::min(
          min_d2[c], SquaredDistance(kps[c].position(), kps[from].position()));
    }
  };
  relax(first);

  while (static_cast<int>(selected.size()) < n_max && !candidates.empty()) {
    size_t best = 0;
    for (size_t j = 1; j < candidates.size(); ++j) {
      const int c = candidates[j];
      const int b = candidates[best];
      if (min_d2[c] > min_d2[b] ||
          (min_d2[c] == min_d2[b] && kps[c].confidence > kps[b].confidence)) {
        best = j;
      }
    }
    const int pick = candidates[best];
    candidates.erase(candidates.begin() + static_cast<ptrdiff_t>(best));
    TakeRespectingFacialCap(pick, skeleton, facial_cap, facial_taken,
                            selected);
    drop_facial();
    relax(pick);
  }
  return selected;
}

}  // namespace

std::vector<int> SelectPositiveIndices(const Pose& pose,
                                       const SkeletonConfig& skeleton,
                                       const PromptPolicy& policy, int n_max,
                                       const std::optional<BBox>& box) {
  const auto& kps = pose.keypoints;
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(kps.size()); ++i) {
    if (kps[i].confidence >= policy.t_c) candidates.push_back(i);
  }
  if (candidates.empty() || n_max <= 0) return {};

  if (policy.selection_mode == SelectionMode::kConfidencePlusDistance) {
    return GreedyFarthest(pose, skeleton, std::move(candidates),
                          policy.facial_cap, n_max);
  }

  std::vector<double> key(kps.size(), 0.0);
  if (policy.selection_mode == SelectionMode::kConfidence) {
    for (int c : candidates) key[c] = kps[c].confidence;
  } else {
    Point center;
    if (box) {
      center = box->Center();
    } else {
      std::vector<Point> pts;
      for (int c : candidates) pts.push_back(kps[c].position());
      const BBox tight = ExtendToCover(
          BBox{pts[0].x, pts[0].y, 0.0, 0.0, 1.0}, pts);
      center = tight.Center();
    }
    for (int c : candidates) {
      key[c] = SquaredDistance(kps[c].position(), center);
    }
  }
  // Descending key, then confidence, then lower index.
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return kps[a].confidence > kps[b].confidence;
  });
  std::vector<int> selected;
  bool facial_taken = false;
  for (int c : candidates) {
    if (static_cast<int>(selected.size()) >= n_max) break;
    TakeRespectingFacialCap(c, skeleton, policy.facial_cap, facial_taken,
                            selected);
  }
  return selected;
}

std::vector<Point> SelectPositivePrompts(const Pose& pose,
                                         const SkeletonConfig& skeleton,
                                         const PromptPolicy& policy,
                                         const std::optional<BBox>& box) {
  std::vector<Point> out;
  for (int i : SelectPositiveIndices(pose, skeleton, policy, policy.n_max,
                                     box)) {
    out.push_back(pose.keypoints[i].position());
  }
  return out;
}

std::vector<Point> SelectNegativePrompts(std::span<const Point> positives,
                                         std::span<const Pose> others,
                                         const PromptPolicy& policy) {
  if (policy.n_neg <= 0 || positives.empty()) return {};
  // (distance to nearest positive, pose order, keypoint index)
  std::vector<std::tuple<double, size_t, size_t>> pool;
  for (size_t p = 0; p < others.size(); ++p) {
    const auto& kps = others[p].keypoints;
    for (size_t k = 0; k < kps.size(); ++k) {
      if (kps[k].confidence < policy.t_c) continue;
      double d2 = std::numeric_limits<double>::infinity();
      for (const Point& pos : positives) {
        d2 = std::min(d2, SquaredDistance(pos, kps[k].position()));
      }
      pool.emplace_back(d2, p, k);
    }
  }
  std::sort(pool.begin(), pool.end());
  std::vector<Point> out;
  for (const auto& [d2, p, k] : pool) {
    if (static_cast<int>(out.size()) >= policy.n_neg) break;
    out.push_back(others[p].keypoints[k].position());
  }
  return out;
}

bool UsesBboxPrompt(const PromptPolicy& policy, double max_iou) {
  switch (policy.bbox_mode) {
    case BboxPromptMode::kNever:
      return false;
    case BboxPromptMode::kAlways:
      return true;
    case BboxPromptMode::kByMaxIoU:
      return max_iou < policy.bbox_iou_threshold;
  }
  return false;
}

std::optional<BBox> BboxPrompt(const BBox& bbox,
                               std::span<const Point> positives,
                               double max_iou, const PromptPolicy& policy) {
  if (!UsesBboxPrompt(policy, max_iou)) return std::nullopt;
  if (policy.extend_bbox) return ExtendToCover(bbox, positives);
  return bbox;
}

PromptSet BuildPromptSet(const Pose& pose, const SkeletonConfig& skeleton,
                         const BBox& bbox, std::span<const Pose> others,
                         double max_iou, const PromptPolicy& policy) {
  const bool with_box = UsesBboxPrompt(policy, max_iou);
  const int n = with_box ? policy.n_max_with_bbox : policy.n_max;
  PromptSet set;
  for (int i : SelectPositiveIndices(pose, skeleton, policy, n, bbox)) {
    set.positives.push_back(pose.keypoints[i].position());
  }
  set.negatives = SelectNegativePrompts(set.positives, others, policy);
  set.bbox = BboxPrompt(bbox, set.positives, max_iou, policy);
  return set;
}

}  // namespace bmp
