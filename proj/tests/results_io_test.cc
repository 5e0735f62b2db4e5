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

#include "bmp/results_io.h"

#include <gtest/gtest.h>

#include "bmp/evaluation.h"
#include "bmp/scene_gen.h"
#include "bmp/synthetic.h"

namespace bmp {
namespace {

using nlohmann::json;

TEST(BboxPromptSpecTest, ParseAndPrint) {
  PromptPolicy p;
  ApplyBboxPromptSpec("always", p);
  EXPECT_EQ(p.bbox_mode, BboxPromptMode::kAlways);
  EXPECT_EQ(BboxPromptSpec(p), "always");
  ApplyBboxPromptSpec("by-max-iou:0.25", p);
  EXPECT_EQ(p.bbox_mode, BboxPromptMode::kByMaxIoU);
  EXPECT_EQ(p.bbox_iou_threshold, 0.25);
  EXPECT_EQ(BboxPromptSpec(p), "by-max-iou:0.25");
  ApplyBboxPromptSpec("by-max-iou", p);
  EXPECT_EQ(p.bbox_iou_threshold, 0.25);
  ApplyBboxPromptSpec("never", p);
  EXPECT_EQ(BboxPromptSpec(p), "never");
  for (const char* bad : {"", "sometimes", "by-max-iou:", "by-max-iou:1.5",
                          "by-max-iou:0.3x"}) {
    EXPECT_THROW(ApplyBboxPromptSpec(bad, p), std::invalid_argument) << bad;
  }
}

TEST(ConfigJsonTest, RoundTripsNonDefaultValues) {
  BmpConfig c;
  c.max_iterations = 3;
  c.alpha = 0.5;
  c.det_score_min = 0.4;
  c.refine = true;
  c.pmc_gate = false;
  c.rerun_pose_after_refine = true;
  c.loop_policy.t_c = 0.7;
  c.loop_policy.n_neg = 2;
  c.loop_policy.selection_mode = SelectionMode::kDistance;
  c.refine_policy.bbox_mode = BboxPromptMode::kByMaxIoU;
  c.refine_policy.bbox_iou_threshold = 0.35;
  const json j = BmpConfigToJson(c);
  EXPECT_EQ(BmpConfigFromJson(j), c);
  EXPECT_EQ(BmpConfigToJson(BmpConfigFromJson(j)), j);
  EXPECT_EQ(BmpConfigFromJson(json::object()), BmpConfig{});
}

TEST(ConfigJsonTest, PartialOverridesKeepTheBase) {
  BmpConfig base;
  base.alpha = 0.6;
  const BmpConfig c = BmpConfigFromJson(
      {{"max_iterations", 1}, {"loop_policy", {{"n_max", 3}}}}, base);
  EXPECT_EQ(c.max_iterations, 1);
  EXPECT_EQ(c.alpha, 0.6);
  EXPECT_EQ(c.loop_policy.n_max, 3);
  EXPECT_EQ(c.loop_policy.t_c, base.loop_policy.t_c);
}

TEST(ConfigJsonTest, RejectsUnknownFieldsTypesAndRanges) {
  EXPECT_THROW(BmpConfigFromJson({{"alhpa", 0.5}}), std::invalid_argument);
  EXPECT_THROW(BmpConfigFromJson({{"loop_policy", {{"tc", 0.5}}}}),
               std::invalid_argument);
  EXPECT_THROW(BmpConfigFromJson({{"alpha", "high"}}), std::invalid_argument);
  EXPECT_THROW(BmpConfigFromJson({{"alpha", 1.5}}), std::invalid_argument);
  EXPECT_THROW(BmpConfigFromJson({{"max_iterations", 0}}),
               std::invalid_argument);
  EXPECT_THROW(BmpConfigFromJson(json::array()), std::invalid_argument);
  try {
    BmpConfigFromJson({{"loop_policy", {{"selection", "x"}}}});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_FALSE(std::string(e.what()).empty());
  }
}

class CanonicalRun : public ::testing::Test {
 protected:
  void SetUp() override {
    backend_ = std::make_shared<SyntheticBackend>(CanonicalOcclusionScene());
    backends_ = MakeSyntheticBackends(backend_);
    backends_.Handshake("coco17");
    result_ = RunBmp(backend_->render(), backends_, BmpConfig{});
  }
  std::shared_ptr<SyntheticBackend> backend_;
  BackendSet backends_;
  LoopResult result_;
};

TEST_F(CanonicalRun, CocoEntriesLoadAndScorePerfectly) {
  const json coco = LoopResultToCoco(result_, 1);
  ASSERT_EQ(coco.size(), 2u);
  for (const json& e : coco) {
    EXPECT_EQ(e["keypoints"].size(), 51u);
    EXPECT_EQ(e["segmentation"]["size"],
              json({result_.height, result_.width}));
    EXPECT_TRUE(e["segmentation"]["counts"].is_string());
  }
  const Dataset gt = AnnotationsFromJson(
      ScenesToCocoGt({CanonicalOcclusionScene()}, {"a.png"}));
  const auto results = ResultsFromJson(coco, gt);
  for (EvalTask t : {EvalTask::kBbox, EvalTask::kSegm}) {
    EXPECT_DOUBLE_EQ(
        AveragePrecision(gt, results, t, EvalParams::Default()).ap, 1.0)
        << ToString(t);
  }
}

TEST_F(CanonicalRun, ScoreIsTheDetectorScore) {
  const json coco = LoopResultToCoco(result_, 7);
  for (size_t i = 0; i < coco.size(); ++i) {
    EXPECT_EQ(coco[i]["image_id"], 7);
    EXPECT_EQ(coco[i]["score"].get<double>(), result_.instances[i].det_score);
    EXPECT_EQ(coco[i]["instance_id"], result_.instances[i].id);
  }
}

TEST_F(CanonicalRun, PoselessInstancesGetZeroTriplets) {
  result_.instances[0].pose.reset();
  const json coco = LoopResultToCoco(result_, 1);
  EXPECT_EQ(coco[0]["keypoints"], json(std::vector<double>(51, 0.0)));
}

TEST_F(CanonicalRun, ProvenanceListsEveryEvent) {
  const json p = LoopResultProvenance(result_, 1, "a.png");
  EXPECT_EQ(p.dump(), LoopResultProvenance(result_, 1, "a.png").dump());
  const std::string text = p.dump();
  for (const char* kind : {"detected", "pose-estimated", "accepted"}) {
    EXPECT_NE(text.find(kind), std::string::npos) << kind;
  }
  EXPECT_EQ(text.find("time"), std::string::npos);
}

}  // namespace
}  // namespace bmp
