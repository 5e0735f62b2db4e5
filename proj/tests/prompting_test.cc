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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.h"

namespace bmp {
namespace {

using testing::Rng;

PromptPolicy Greedy(double t_c, int n_max, bool facial_cap = true) {
  PromptPolicy p = PromptPolicy::LoopDefault();
  p.t_c = t_c;
  p.n_max = n_max;
  p.facial_cap = facial_cap;
  return p;
}

std::set<int> FacialSet(const SkeletonConfig& sk) {
  return {sk.facial_indices.begin(), sk.facial_indices.end()};
}

// Poses with at most 12 candidates above t_c = 0.5.
Pose SparsePose(Rng& rng) {
  const auto& sk = CocoSkeleton();
  Pose p = testing::RandomGridPose(rng, sk.keypoint_count, 8);
  int above = 0;
  for (auto& k : p.keypoints) {
    if (k.confidence >= 0.5 && ++above > 12) k.confidence = 0.2;
  }
  return p;
}

TEST(SelectPositivesTest, MatchesGreedyOracle) {
  const auto& sk = CocoSkeleton();
  Rng rng(42);
  std::uniform_int_distribution<int> n(1, 8);
  for (int trial = 0; trial < 500; ++trial) {
    const Pose pose = SparsePose(rng);
    const int n_max = n(rng);
    const bool cap = trial % 3 != 0;
    ASSERT_EQ(SelectPositiveIndices(pose, sk, Greedy(0.5, n_max, cap), n_max),
              testing::OracleGreedyPrompts(pose, 0.5, n_max, FacialSet(sk),
                                           cap))
        << "trial " << trial;
  }
}

TEST(SelectPositivesTest, PrefixMonotoneInNMax) {
  const auto& sk = CocoSkeleton();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose pose = SparsePose(rng);
    std::vector<int> prev;
    for (int n = 1; n <= 12; ++n) {
      const auto cur = SelectPositiveIndices(pose, sk, Greedy(0.5, n), n);
      ASSERT_GE(cur.size(), prev.size());
      ASSERT_TRUE(std::equal(prev.begin(), prev.end(), cur.begin()));
      prev = cur;
    }
  }
}

TEST(SelectPositivesTest, AtMostOneFacialKeypoint) {
  const auto& sk = CocoSkeleton();
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const Pose pose = testing::RandomGridPose(rng, sk.keypoint_count, 6);
    for (SelectionMode mode :
         {SelectionMode::kConfidence, SelectionMode::kDistance,
          SelectionMode::kConfidencePlusDistance}) {
      PromptPolicy p = Greedy(0.2, 17);
      p.selection_mode = mode;
      int facial = 0;
      for (int i : SelectPositiveIndices(pose, sk, p, 17)) {
        facial += sk.IsFacial(i) ? 1 : 0;
      }
      ASSERT_LE(facial, 1);
    }
  }
}

TEST(SelectPositivesTest, OutputSizeIsBudgetOrCandidates) {
  const auto& sk = CocoSkeleton();
  Pose pose;
  pose.keypoints.assign(sk.keypoint_count, {0, 0, 0.1});
  EXPECT_TRUE(SelectPositivePrompts(pose, sk, Greedy(0.3, 6)).empty());
  pose.keypoints[9] = {4, 5, 0.9};
  EXPECT_EQ(SelectPositivePrompts(pose, sk, Greedy(0.3, 6)),
            (std::vector<Point>{{4, 5}}));
  // All five facial points confident: only one survives the cap.
  for (int i = 0; i < 5; ++i) pose.keypoints[i] = {double(i * 10), 0, 0.8};
  EXPECT_EQ(SelectPositivePrompts(pose, sk, Greedy(0.3, 17)).size(), 4u);
  EXPECT_EQ(SelectPositivePrompts(pose, sk, Greedy(0.3, 17, false)).size(),
            6u);
}

TEST(SelectPositivesTest, PointsOnALine) {
  const auto& sk = CocoSkeleton();
  Pose pose;
  pose.keypoints.assign(sk.keypoint_count, {0, 0, 0.0});
  // Ten collinear non-facial candidates; the most confident sits at x = 40.
  for (int i = 0; i < 10; ++i) {
    pose.keypoints[5 + i] = {double(i * 10), 50, 0.6};
  }
  pose.keypoints[9].confidence = 0.95;
  const auto got = SelectPositiveIndices(pose, sk, Greedy(0.5, 3), 3);
  EXPECT_EQ(got, testing::OracleGreedyPrompts(pose, 0.5, 3, FacialSet(sk),
                                              true));
  EXPECT_EQ(got, (std::vector<int>{9, 14, 5}));
}

TEST(SelectPositivesTest, ConfidenceAndDistanceModes) {
  const auto& sk = CocoSkeleton();
  Pose pose;
  pose.keypoints.assign(sk.keypoint_count, {0, 0, 0.0});
  pose.keypoints[5] = {10, 10, 0.9};
  pose.keypoints[6] = {11, 10, 0.8};
  pose.keypoints[7] = {30, 10, 0.7};
  PromptPolicy c = Greedy(0.5, 2);
  c.selection_mode = SelectionMode::kConfidence;
  EXPECT_EQ(SelectPositiveIndices(pose, sk, c, 2), (std::vector<int>{5, 6}));
  PromptPolicy d = c;
  d.selection_mode = SelectionMode::kDistance;
  const BBox box{10, 5, 2, 10};  // centre (11, 10)
  EXPECT_EQ(SelectPositiveIndices(pose, sk, d, 2, box),
            (std::vector<int>{7, 5}));
}

TEST(SelectNegativesTest, NearestConfidentOtherKeypoint) {
  Rng rng(9);
  const auto& sk = CocoSkeleton();
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Pose> others = {
        testing::RandomGridPose(rng, sk.keypoint_count, 50),
        testing::RandomGridPose(rng, sk.keypoint_count, 50)};
    const std::vector<Point> pos = {{25, 25}, {3, 40}};
    PromptPolicy p = Greedy(0.5, 6);
    p.n_neg = 1;
    const auto got = SelectNegativePrompts(pos, others, p);
    double best = std::numeric_limits<double>::infinity();
    for (const Pose& o : others) {
      for (const Keypoint& k : o.keypoints) {
        if (k.confidence < 0.5) continue;
        for (const Point& q : pos) {
          best = std::min(best, std::hypot(k.x - q.x, k.y - q.y));
        }
      }
    }
    if (std::isinf(best)) {
      EXPECT_TRUE(got.empty());
      continue;
    }
    ASSERT_EQ(got.size(), 1u);
    double d = std::numeric_limits<double>::infinity();
    for (const Point& q : pos) {
      d = std::min(d, std::hypot(got[0].x - q.x, got[0].y - q.y));
    }
    EXPECT_EQ(d, best);
  }
}

TEST(SelectNegativesTest, EmptyCases) {
  const std::vector<Point> pos = {{1, 1}};
  PromptPolicy p = Greedy(0.3, 6);
  p.n_neg = 3;
  EXPECT_TRUE(SelectNegativePrompts(pos, {}, p).empty());
  Rng rng(1);
  const std::vector<Pose> others = {testing::RandomGridPose(rng, 17, 10)};
  p.n_neg = 0;
  EXPECT_TRUE(SelectNegativePrompts(pos, others, p).empty());
}

TEST(BboxPromptTest, Modes) {
  const BBox box{10, 10, 20, 20};
  const std::vector<Point> pos = {{40, 15}};
  PromptPolicy p = Greedy(0.3, 6);
  EXPECT_FALSE(BboxPrompt(box, pos, 0.0, p).has_value());
  p.bbox_mode = BboxPromptMode::kAlways;
  EXPECT_EQ(*BboxPrompt(box, pos, 0.9, p), box);
  p.extend_bbox = true;
  EXPECT_TRUE(BboxPrompt(box, pos, 0.9, p)->Contains(pos[0]));
  p.bbox_mode = BboxPromptMode::kByMaxIoU;
  p.bbox_iou_threshold = 0.5;
  EXPECT_FALSE(BboxPrompt(box, pos, 0.7, p).has_value());
  EXPECT_TRUE(BboxPrompt(box, pos, 0.3, p).has_value());
}

TEST(BuildPromptSetTest, BoxChangesPositiveBudget) {
  const auto& sk = CocoSkeleton();
  Pose pose;
  pose.keypoints.assign(sk.keypoint_count, {0, 0, 0.0});
  for (int i = 5; i < 17; ++i) pose.keypoints[i] = {double(i * 7), 20, 0.9};
  const PromptPolicy p = PromptPolicy::Refinement();
  const BBox box{30, 0, 100, 50};
  EXPECT_EQ(BuildPromptSet(pose, sk, box, {}, 0.2, p).positives.size(), 4u);
  EXPECT_TRUE(BuildPromptSet(pose, sk, box, {}, 0.2, p).bbox.has_value());
  EXPECT_EQ(BuildPromptSet(pose, sk, box, {}, 0.8, p).positives.size(), 6u);
  EXPECT_FALSE(BuildPromptSet(pose, sk, box, {}, 0.8, p).bbox.has_value());
}

TEST(PromptPolicyTest, ValidationAndNames) {
  PromptPolicy p;
  p.n_max = 0;
  EXPECT_THROW(p.Validate(), std::invalid_argument);
  p = PromptPolicy();
  p.t_c = 1.5;
  EXPECT_THROW(p.Validate(), std::invalid_argument);
  EXPECT_EQ(ParseSelectionMode("c+d"), SelectionMode::kConfidencePlusDistance);
  EXPECT_EQ(ParseSelectionMode("distance_only"), SelectionMode::kDistance);
  EXPECT_THROW(ParseSelectionMode("x"), std::invalid_argument);
}

}  // namespace
}  // namespace bmp
