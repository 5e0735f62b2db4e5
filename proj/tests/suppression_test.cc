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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.h"

namespace bmp {
namespace {

using testing::Rng;

std::set<size_t> AsSet(const std::vector<size_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<BBox> RandomBoxes(Rng& rng, int n) {
  std::uniform_int_distribution<int> score(0, 20);
  std::vector<BBox> boxes;
  for (int i = 0; i < n; ++i) {
    BBox b = testing::RandomBox(rng, 60.0);
    b.score = score(rng) / 20.0;  // frequent ties
    boxes.push_back(b);
  }
  return boxes;
}

TEST(BboxNmsTest, MatchesOracle) {
  Rng rng(1);
  std::uniform_int_distribution<int> n(0, 15);
  std::uniform_real_distribution<double> thr(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto boxes = RandomBoxes(rng, n(rng));
    const double t = trial % 5 == 0 ? 0.3 : thr(rng);
    ASSERT_EQ(AsSet(BboxNms(boxes, t)), testing::OracleBboxNms(boxes, t))
        << trial;
  }
}

TEST(BboxNmsTest, KeptSetIsPermutationInvariant) {
  Rng rng(2);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    // Distinct scores: the tie-break by index is the only order dependence.
    auto boxes = RandomBoxes(rng, 12);
    for (auto& b : boxes) b.score = score(rng);
    std::vector<size_t> perm(boxes.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<BBox> shuffled;
    for (size_t p : perm) shuffled.push_back(boxes[p]);
    std::set<size_t> mapped;
    for (size_t k : BboxNms(shuffled, 0.3)) mapped.insert(perm[k]);
    ASSERT_EQ(mapped, AsSet(BboxNms(boxes, 0.3)));
  }
}

TEST(BboxNmsTest, Thresholds) {
  const std::vector<BBox> same = {{0, 0, 10, 10, 0.8}, {0, 0, 10, 10, 0.9}};
  EXPECT_EQ(BboxNms(same, 0.3), (std::vector<size_t>{1}));
  EXPECT_EQ(BboxNms(same, 1.0).size(), 2u);
  // Chain a-b-c overlapping pairwise in sequence, d apart: at 0 one box per
  // overlap component survives only if the kept box touches the others.
  const std::vector<BBox> chain = {{0, 0, 10, 10, 0.9},
                                   {5, 0, 10, 10, 0.8},
                                   {100, 100, 5, 5, 0.7}};
  EXPECT_EQ(AsSet(BboxNms(chain, 0.0)), (std::set<size_t>{0, 2}));
  EXPECT_TRUE(BboxNms({}, 0.3).empty());
}

PoseCandidate Jittered(const Pose& base, Rng& rng, double amount,
                       double score) {
  std::uniform_real_distribution<double> j(-amount, amount);
  Pose p = base;
  for (auto& k : p.keypoints) k.x += j(rng), k.y += j(rng);
  return {p, score, 2500.0};
}

TEST(PoseNmsTest, MatchesOracle) {
  const auto& sk = CocoSkeleton();
  Rng rng(3);
  std::uniform_int_distribution<int> n(0, 15), bases(1, 4);
  std::uniform_int_distribution<int> score(0, 10);
  std::uniform_real_distribution<double> amount(0.0, 12.0), thr(0.3, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Pose> base;
    for (int b = 0; b < bases(rng); ++b) {
      base.push_back(testing::RandomGridPose(rng, sk.keypoint_count, 60));
    }
    std::vector<PoseCandidate> cands;
    std::vector<testing::OraclePose> oracle;
    for (int i = 0; i < n(rng); ++i) {
      PoseCandidate c = Jittered(base[i % base.size()], rng, amount(rng),
                                 score(rng) / 10.0);
      cands.push_back(c);
      oracle.push_back({c.pose->keypoints, c.score, c.area});
    }
    const double t = thr(rng);
    ASSERT_EQ(AsSet(PoseNms(cands, t, sk, 0.3)),
              testing::OraclePoseNms(oracle, t, sk.oks_sigmas, 0.3))
        << trial;
  }
}

TEST(PoseNmsTest, JitteredCopiesCollapse) {
  const auto& sk = CocoSkeleton();
  Rng rng(4);
  Pose a = testing::RandomGridPose(rng, sk.keypoint_count, 50);
  Pose b = a;
  for (auto& k : a.keypoints) k.confidence = 0.9;
  for (auto& k : b.keypoints) k.x += 200, k.confidence = 0.9;
  std::vector<PoseCandidate> cands;
  for (int i = 0; i < 6; ++i) {
    cands.push_back(Jittered(i % 2 ? a : b, rng, 0.5, 0.5 + i * 0.05));
  }
  EXPECT_EQ(PoseNms(cands, 0.9, sk, 0.3).size(), 2u);
}

TEST(PoseNmsTest, PinnedAndPoselessCandidatesAreKept) {
  const auto& sk = CocoSkeleton();
  Rng rng(5);
  Pose a = testing::RandomGridPose(rng, sk.keypoint_count, 50);
  for (auto& k : a.keypoints) k.confidence = 0.9;
  const std::vector<PoseCandidate> cands = {
      {a, 0.1, 900.0}, {a, 0.95, 900.0}, {std::nullopt, 0.5, 0.0}};
  // Pinned low-score copy wins over the higher-score newcomer.
  EXPECT_EQ(AsSet(PoseNms(cands, 0.9, sk, 0.3, 1)),
            (std::set<size_t>{0, 2}));
  EXPECT_EQ(AsSet(PoseNms(cands, 0.9, sk, 0.3, 0)),
            (std::set<size_t>{1, 2}));
  EXPECT_EQ(PoseNms(cands, 1.0, sk, 0.3).size(), 3u);
}

TEST(PoseScoreTest, MeanOfConfidentKeypoints) {
  Pose p;
  p.keypoints = {{0, 0, 0.9}, {0, 0, 0.5}, {0, 0, 0.1}};
  EXPECT_DOUBLE_EQ(PoseScore(p, 0.3), 0.7);
  EXPECT_EQ(PoseScore(p, 0.95), 0.0);
}

}  // namespace
}  // namespace bmp
