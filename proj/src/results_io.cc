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

#include <charconv>
#include <set>
#include <stdexcept>

namespace bmp {

using nlohmann::json;

namespace {

void RejectUnknown(const json& j, const std::set<std::string>& known,
                   const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument(where + ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

json BoxJson(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

}  // namespace

void ApplyBboxPromptSpec(std::string_view spec, PromptPolicy& policy) {
  if (spec == "never") {
    policy.bbox_mode = BboxPromptMode::kNever;
  } else if (spec == "always") {
    policy.bbox_mode = BboxPromptMode::kAlways;
  } else if (spec == "by-max-iou") {
    policy.bbox_mode = BboxPromptMode::kByMaxIoU;
  } else if (spec.rfind("by-max-iou:", 0) == 0) {
    const std::string_view num = spec.substr(11);
    double theta = 0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), theta);
    if (ec != std::errc() || end != num.data() + num.size() || theta < 0 ||
        theta > 1) {
      throw std::invalid_argument("bad IoU threshold in '" + std::string(spec) +
                                  "'");
    }
    policy.bbox_mode = BboxPromptMode::kByMaxIoU;
    policy.bbox_iou_threshold = theta;
  } else {
    throw std::invalid_argument("bbox prompt must be never, always or "
                                "by-max-iou:<theta>, got '" +
                                std::string(spec) + "'");
  }
}

std::string BboxPromptSpec(const PromptPolicy& policy) {
  if (policy.bbox_mode != BboxPromptMode::kByMaxIoU) {
    return std::string(ToString(policy.bbox_mode));
  }
  return "by-max-iou:" + json(policy.bbox_iou_threshold).dump();
}

json PromptPolicyToJson(const PromptPolicy& p) {
  return {{"t_c", p.t_c},
          {"n_max", p.n_max},
          {"n_max_with_bbox", p.n_max_with_bbox},
          {"n_neg", p.n_neg},
          {"selection", std::string(ToString(p.selection_mode))},
          {"bbox_prompt", BboxPromptSpec(p)},
          {"extend_bbox", p.extend_bbox},
          {"facial_cap", p.facial_cap}};
}

PromptPolicy PromptPolicyFromJson(const json& j, PromptPolicy p) {
  const std::string where = "prompt policy";
  RejectUnknown(j,
                {"t_c", "n_max", "n_max_with_bbox", "n_neg", "selection",
                 "bbox_prompt", "extend_bbox", "facial_cap"},
                where);
  Read(j, "t_c", p.t_c, where);
  Read(j, "n_max", p.n_max, where);
  Read(j, "n_max_with_bbox", p.n_max_with_bbox, where);
  Read(j, "n_neg", p.n_neg, where);
  std::string text;
  Read(j, "selection", text, where);
  if (!text.empty()) p.selection_mode = ParseSelectionMode(text);
  text.clear();
  Read(j, "bbox_prompt", text, where);
  if (!text.empty()) ApplyBboxPromptSpec(text, p);
  Read(j, "extend_bbox", p.extend_bbox, where);
  Read(j, "facial_cap", p.facial_cap, where);
  p.Validate();
  return p;
}

json BmpConfigToJson(const BmpConfig& c) {
  return {{"max_iterations", c.max_iterations},
          {"alpha", c.alpha},
          {"det_score_min", c.det_score_min},
          {"loop_policy", PromptPolicyToJson(c.loop_policy)},
          {"refine_policy", PromptPolicyToJson(c.refine_policy)},
          {"refine", c.refine},
          {"pmc_gate", c.pmc_gate},
          {"bbox_nms_iou", c.bbox_nms_iou},
          {"pose_nms_oks", c.pose_nms_oks},
          {"rerun_pose_after_refine", c.rerun_pose_after_refine},
          {"skeleton", c.skeleton},
          {"crop_padding", c.crop_padding},
          {"crop_aspect", c.crop_aspect}};
}

BmpConfig BmpConfigFromJson(const json& j, BmpConfig c) {
  const std::string where = "config";
  RejectUnknown(j,
                {"max_iterations", "alpha", "det_score_min", "loop_policy",
                 "refine_policy", "refine", "pmc_gate", "bbox_nms_iou",
                 "pose_nms_oks", "rerun_pose_after_refine", "skeleton",
                 "crop_padding", "crop_aspect"},
                where);
  Read(j, "max_iterations", c.max_iterations, where);
  Read(j, "alpha", c.alpha, where);
  Read(j, "det_score_min", c.det_score_min, where);
  if (j.contains("loop_policy")) {
    c.loop_policy = PromptPolicyFromJson(j["loop_policy"], c.loop_policy);
  }
  if (j.contains("refine_policy")) {
    c.refine_policy = PromptPolicyFromJson(j["refine_policy"], c.refine_policy);
  }
  Read(j, "refine", c.refine, where);
  Read(j, "pmc_gate", c.pmc_gate, where);
  Read(j, "bbox_nms_iou", c.bbox_nms_iou, where);
  Read(j, "pose_nms_oks", c.pose_nms_oks, where);
  Read(j, "rerun_pose_after_refine", c.rerun_pose_after_refine, where);
  Read(j, "skeleton", c.skeleton, where);
  Read(j, "crop_padding", c.crop_padding, where);
  Read(j, "crop_aspect", c.crop_aspect, where);
  c.Validate();
  return c;
}

json LoopResultToCoco(const LoopResult& result, int64_t image_id,
                      const std::string& skeleton, int64_t category_id) {
  json out = json::array();
  for (const Instance& inst : result.instances) {
    const Rle rle = EncodeRle(inst.mask);
    json kps = json::array();
    if (inst.pose) {
      for (const Keypoint& k : inst.pose->keypoints) {
        kps.push_back(k.x);
        kps.push_back(k.y);
        kps.push_back(k.confidence);
      }
    } else {
      const int n = FindSkeleton(skeleton).keypoint_count;
      for (int i = 0; i < 3 * n; ++i) kps.push_back(0.0);
    }
    out.push_back({{"image_id", image_id},
                   {"category_id", category_id},
                   {"bbox", BoxJson(inst.bbox)},
                   {"segmentation",
                    {{"size", {rle.height, rle.width}},
                     {"counts", RleToString(rle)}}},
                   {"keypoints", std::move(kps)},
                   {"score", inst.det_score},
                   {"pose_score", inst.pose_score},
                   {"mask_score", inst.mask_score},
                   {"instance_id", inst.id},
                   {"iteration", inst.iteration_born}});
  }
  return out;
}

namespace {

json InstanceProvenance(const Instance& inst) {
  json events = json::array();
  for (const InstanceEvent& e : inst.provenance) {
    events.push_back(
        {{"iteration", e.iteration}, {"event", e.kind}, {"detail", e.detail}});
  }
  return {{"id", inst.id},
          {"iteration_born", inst.iteration_born},
          {"bbox", BoxJson(inst.bbox)},
          {"mask_area", inst.mask.Area()},
          {"det_score", inst.det_score},
          {"pose_score", inst.pose_score},
          {"mask_score", inst.mask_score},
          {"events", std::move(events)}};
}

}  // namespace

json LoopResultProvenance(const LoopResult& result, int64_t image_id,
                          const std::string& image_name) {
  json iterations = json::array();
  for (const IterationStats& s : result.iterations) {
    iterations.push_back({{"iteration", s.iteration},
                          {"detections", s.detections},
                          {"below_score", s.below_score},
                          {"bbox_suppressed", s.bbox_suppressed},
                          {"pose_suppressed", s.pose_suppressed},
                          {"accepted", s.accepted},
                          {"pose_failures", s.pose_failures},
                          {"segment_calls", s.segment_calls},
                          {"segment_skipped", s.segment_skipped},
                          {"segment_failures", s.segment_failures},
                          {"gate_discarded", s.gate_discarded},
                          {"gate_discard_rate", s.GateDiscardRate()},
                          {"masked_fraction", s.masked_fraction}});
  }
  json instances = json::array();
  for (const Instance& i : result.instances) {
    instances.push_back(InstanceProvenance(i));
  }
  json suppressed = json::array();
  for (const Instance& i : result.suppressed) {
    suppressed.push_back(InstanceProvenance(i));
  }
  return {{"image_id", image_id},
          {"image", image_name},
          {"width", result.width},
          {"height", result.height},
          {"iterations", std::move(iterations)},
          {"refined", result.refined},
          {"error", result.error ? json(*result.error) : json(nullptr)},
          {"instances", std::move(instances)},
          {"suppressed", std::move(suppressed)}};
}

}  // namespace bmp
