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

// The detect / pose / segment / mask-out loop.
//
// One iteration:
//   1. mask out every accepted instance (opaque black) and run the detector;
//      drop detections under det_score_min; box NMS within the batch.
//   2. pose each survivor on the image blended towards its detector mask,
//      cropped around its box.
//   3. pose NMS over accepted + new; accepted instances are never dropped.
//   4. prompt the segmenter from each new pose and gate the answer with
//      pose-mask consistency.
//   5. accept; the union mask grows by the new masks.
// The loop stops after an iteration that accepts nothing new, or after
// max_iterations.

#ifndef BMP_LOOP_ENGINE_H_
#define BMP_LOOP_ENGINE_H_

#include <optional>
#include <string>
#include <vector>

#include "bmp/backends.h"
#include "bmp/geometry.h"
#include "bmp/imaging.h"
#include "bmp/prompting.h"
#include "json.hpp"

namespace bmp {

struct InstanceEvent {
  int iteration = 0;
  // detected, pose-estimated, pose-failed, suppressed, segment-skipped,
  // segment-failed, mask-refined, mask-gate-kept-original, accepted.
  std::string kind;
  nlohmann::json detail = nlohmann::json::object();
};

struct Instance {
  int id = 0;
  int iteration_born = 1;
  BBox bbox;  // bbox.score is the detector score
  BinaryMask mask;
  std::optional<Pose> pose;
  double det_score = 0.0;
  double pose_score = 0.0;
  double mask_score = 0.0;
  std::vector<InstanceEvent> provenance;
};

struct BmpConfig {
  int max_iterations = 2;
  double alpha = 0.8;
  double det_score_min = 0.3;
  PromptPolicy loop_policy = PromptPolicy::LoopDefault();
  PromptPolicy refine_policy = PromptPolicy::Refinement();
  bool refine = false;
  bool pmc_gate = true;
  double bbox_nms_iou = 0.3;
  double pose_nms_oks = 0.9;
  bool rerun_pose_after_refine = false;
  std::string skeleton = "coco17";
  double crop_padding = 0.25;
  double crop_aspect = 0.75;

  // Throws std::invalid_argument.
  void Validate() const;
  friend bool operator==(const BmpConfig&, const BmpConfig&) = default;
};

struct IterationStats {
  int iteration = 0;
  int detections = 0;  // as returned by the detector
  int below_score = 0;
  int bbox_suppressed = 0;
  int pose_suppressed = 0;
  int accepted = 0;
  int pose_failures = 0;
  int segment_calls = 0;
  int segment_skipped = 0;
  int segment_failures = 0;
  int gate_discarded = 0;  // refined masks rejected by the gate
  double masked_fraction = 0.0;  // union area / image area after the step

  double GateDiscardRate() const {
    return segment_calls == 0
               ? 0.0
               : static_cast<double>(gate_discarded) / segment_calls;
  }
};

struct LoopResult {
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;   // accepted, in id order
  std::vector<Instance> suppressed;  // dropped by NMS, for provenance
  std::vector<IterationStats> iterations;
  bool refined = false;
  // Set when a protocol failure cut the run short; `instances` then holds
  // everything accepted before the failure.
  std::optional<std::string> error;
};

// `backends` must have completed its handshake.
LoopResult RunBmp(const Image& image, BackendSet& backends,
                  const BmpConfig& config);

// One segment-and-gate pass over existing instances with `policy`, with an
// optional pose re-run (config.rerun_pose_after_refine). No re-detection.
std::vector<Instance> RefineOnce(const Image& image,
                                 std::vector<Instance> instances,
                                 BackendSet& backends, const BmpConfig& config,
                                 const PromptPolicy& policy, int iteration);

}  // namespace bmp

#endif  // BMP_LOOP_ENGINE_H_
