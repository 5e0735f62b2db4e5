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

#include "bmp/loop_engine.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <stdexcept>

#include "bmp/consistency.h"
#include "bmp/suppression.h"

namespace bmp {

using nlohmann::json;

void BmpConfig::Validate() const {
  if (max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  if (!(det_score_min >= 0.0 && det_score_min <= 1.0)) {
    throw std::invalid_argument("det_score_min must lie in [0, 1]");
  }
  if (!(bbox_nms_iou >= 0.0 && bbox_nms_iou <= 1.0)) {
    throw std::invalid_argument("bbox_nms_iou must lie in [0, 1]");
  }
  if (!(pose_nms_oks >= 0.0 && pose_nms_oks <= 1.0)) {
    throw std::invalid_argument("pose_nms_oks must lie in [0, 1]");
  }
  if (!(crop_padding >= 0.0)) {
    throw std::invalid_argument("crop_padding must be >= 0");
  }
  if (!(crop_aspect > 0.0)) {
    throw std::invalid_argument("crop_aspect must be > 0");
  }
  loop_policy.Validate();
  refine_policy.Validate();
  FindSkeleton(skeleton);
}

namespace {

json BoxJson(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

void Log(Instance& inst, int iteration, std::string kind,
         json detail = json::object()) {
  inst.provenance.push_back({iteration, std::move(kind), std::move(detail)});
}

std::vector<Point> ConfidentPoints(const Pose& pose, double t_c) {
  std::vector<Point> out;
  for (const Keypoint& k : pose.keypoints) {
    if (k.confidence >= t_c) out.push_back(k.position());
  }
  return out;
}

double MaskAreaOrBox(const Instance& inst) {
  const int64_t a = inst.mask.Area();
  return a > 0 ? static_cast<double>(a) : inst.bbox.Area();
}

// Poses `inst` on `image` blended towards `conditioning` (or on the plain
// image when there is none). Fills pose + pose_score, or logs a failure.
// Protocol errors propagate.
void EstimateInstancePose(const Image& image, Instance& inst,
                          const BinaryMask* conditioning, BackendSet& backends,
                          const BmpConfig& config,
                          const SkeletonConfig& skeleton, int iteration) {
  const bool use_mask = conditioning != nullptr && config.alpha < 1.0;
  try {
    const Image blended =
        use_mask ? SemiTransparentBlend(image, *conditioning, config.alpha)
                 : image;
    const Crop crop =
        CropExpand(blended, inst.bbox, config.crop_padding, config.crop_aspect);
    Pose pose = backends.pose->EstimatePose(crop.image, crop.transform,
                                            skeleton.name);
    if (static_cast<int>(pose.keypoints.size()) != skeleton.keypoint_count) {
      throw BackendError("bad_reply", "pose has " +
                                          std::to_string(pose.keypoints.size()) +
                                          " keypoints");
    }
    for (Keypoint& k : pose.keypoints) {
      const Point p = crop.transform.ToImage(k.position());
      k.x = p.x;
      k.y = p.y;
    }
    pose.skeleton_id = skeleton.name;
    inst.pose_score = PoseScore(pose, config.loop_policy.t_c);
    inst.pose = std::move(pose);
    Log(inst, iteration, "pose-estimated",
        {{"conditioning", use_mask ? "mask" : "bbox"},
         {"crop", {crop.image.width(), crop.image.height()}},
         {"pose_score", inst.pose_score}});
  } catch (const BackendError& e) {
    inst.pose.reset();
    inst.pose_score = 0.0;
    Log(inst, iteration, "pose-failed",
        {{"code", e.code()}, {"message", e.what()}});
    spdlog::warn("instance {}: pose failed: {}", inst.id, e.what());
  } catch (const std::invalid_argument& e) {
    inst.pose.reset();
    inst.pose_score = 0.0;
    Log(inst, iteration, "pose-failed",
        {{"code", "bad_crop"}, {"message", e.what()}});
    spdlog::warn("instance {}: no crop: {}", inst.id, e.what());
  }
}

struct SegmentOutcome {
  bool called = false;
  bool skipped = false;
  bool failed = false;
  bool discarded = false;
};

// Prompts the segmenter for `inst` and applies the gate. `others` supply
// negatives and the overlap measure.
SegmentOutcome SegmentInstance(const Image& image, Instance& inst,
                               const std::vector<const Instance*>& others_in,
                               BackendSet& backends, const BmpConfig& config,
                               const PromptPolicy& policy,
                               const SkeletonConfig& skeleton, int iteration) {
  SegmentOutcome out;
  if (!inst.pose) {
    out.skipped = true;
    Log(inst, iteration, "segment-skipped", {{"reason", "no pose"}});
    return out;
  }
  std::vector<Pose> others;
  double max_iou = 0.0;
  for (const Instance* o : others_in) {
    max_iou = std::max(max_iou, BoxIoU(inst.bbox, o->bbox));
    if (o->pose) others.push_back(*o->pose);
  }
  const PromptSet prompts =
      BuildPromptSet(*inst.pose, skeleton, inst.bbox, others, max_iou, policy);
  if (prompts.positives.empty() && !prompts.bbox) {
    out.skipped = true;
    Log(inst, iteration, "segment-skipped", {{"reason", "no prompts"}});
    return out;
  }

  SegmentResult seg;
  try {
    out.called = true;
    seg = backends.segmenter->Segment(image, prompts);
    if (seg.mask.width() != image.width() ||
        seg.mask.height() != image.height()) {
      throw BackendError("bad_reply", "mask size differs from image");
    }
  } catch (const BackendError& e) {
    out.failed = true;
    Log(inst, iteration, "segment-failed",
        {{"code", e.code()}, {"message", e.what()}});
    spdlog::warn("instance {}: segmentation failed: {}", inst.id, e.what());
    return out;
  }

  json prompt_detail = {{"positives", prompts.positives.size()},
                        {"negatives", prompts.negatives.size()},
                        {"bbox", prompts.bbox ? BoxJson(*prompts.bbox)
                                              : json(nullptr)},
                        {"max_iou", max_iou}};
  bool keep_refined = !seg.mask.Empty();
  json gate_detail = json::object();
  if (keep_refined && config.pmc_gate) {
    const std::vector<Point> pos = ConfidentPoints(*inst.pose, policy.t_c);
    std::vector<Point> neg;
    for (const Pose& o : others) {
      for (const Point& p : ConfidentPoints(o, policy.t_c)) neg.push_back(p);
    }
    if (pos.empty()) {
      keep_refined = false;
      gate_detail = {{"reason", "no confident keypoints"}};
    } else {
      const MaskGateResult gate = MaskGate(inst.mask, seg.mask, pos, neg);
      keep_refined = gate.refined_kept;
      gate_detail = {{"pmc_original", gate.original.pmc},
                     {"pmc_refined", gate.refined.pmc}};
    }
  } else if (!keep_refined) {
    gate_detail = {{"reason", "empty mask"}};
  }
  json detail = {{"prompts", std::move(prompt_detail)},
                 {"mask_score", seg.score}};
  detail.update(gate_detail);
  if (keep_refined) {
    inst.mask = std::move(seg.mask);
    const double score = inst.bbox.score;
    inst.bbox = *inst.mask.BoundingBox();
    inst.bbox.score = score;
    inst.mask_score = seg.score;
    Log(inst, iteration, "mask-refined", std::move(detail));
    if (config.rerun_pose_after_refine) {
      const BinaryMask conditioning = inst.mask;
      EstimateInstancePose(image, inst, &conditioning, backends, config,
                           skeleton, iteration);
    }
  } else {
    out.discarded = true;
    Log(inst, iteration, "mask-gate-kept-original", std::move(detail));
  }
  return out;
}

}  // namespace

LoopResult RunBmp(const Image& image, BackendSet& backends,
                  const BmpConfig& config) {
  config.Validate();
  if (!backends.handshake_done) {
    throw ProtocolError("backends used before handshake");
  }
  const SkeletonConfig& skeleton = FindSkeleton(config.skeleton);
  const double image_area =
      static_cast<double>(image.width()) * static_cast<double>(image.height());

  LoopResult result;
  result.width = image.width();
  result.height = image.height();
  BinaryMask union_mask(image.width(), image.height());
  int next_id = 1;

  for (int it = 1; it <= config.max_iterations; ++it) {
    IterationStats stats;
    stats.iteration = it;
    std::vector<Instance> fresh;
    try {
      // Detection on the masked-out image.
      const Image composite = MaskOut(image, union_mask);
      std::vector<Detection> dets = backends.detector->Detect(composite);
      stats.detections = static_cast<int>(dets.size());
      std::vector<Detection> kept_dets;
      for (Detection& d : dets) {
        if (d.bbox.score >= config.det_score_min && d.bbox.w > 0 &&
            d.bbox.h > 0) {
          kept_dets.push_back(std::move(d));
        } else {
          ++stats.below_score;
        }
      }
      std::vector<BBox> boxes;
      for (const Detection& d : kept_dets) boxes.push_back(d.bbox);
      std::vector<size_t> keep = BboxNms(boxes, config.bbox_nms_iou);
      std::sort(keep.begin(), keep.end());
      std::vector<bool> kept_flag(kept_dets.size(), false);
      for (size_t k : keep) kept_flag[k] = true;

      for (size_t k = 0; k < kept_dets.size(); ++k) {
        Instance inst;
        inst.id = next_id++;
        inst.iteration_born = it;
        inst.bbox = kept_dets[k].bbox;
        inst.det_score = kept_dets[k].bbox.score;
        const bool has_mask =
            kept_dets[k].mask &&
            kept_dets[k].mask->width() == image.width() &&
            kept_dets[k].mask->height() == image.height();
        inst.mask = has_mask ? *kept_dets[k].mask
                             : BinaryMask::FromBox(inst.bbox, image.width(),
                                                   image.height());
        Log(inst, it, "detected",
            {{"bbox", BoxJson(inst.bbox)},
             {"score", inst.det_score},
             {"mask", has_mask ? "detector" : "box"}});
        if (!kept_flag[k]) {
          ++stats.bbox_suppressed;
          Log(inst, it, "suppressed", {{"stage", "bbox_nms"}});
          result.suppressed.push_back(std::move(inst));
          continue;
        }
        // Pose conditioning: the detector mask; box-only detectors fall
        // back to the crop alone.
        EstimateInstancePose(image, inst, has_mask ? &inst.mask : nullptr,
                             backends, config, skeleton, it);
        if (!inst.pose) ++stats.pose_failures;
        fresh.push_back(std::move(inst));
      }

      // Pose NMS; accepted instances are pinned in front.
      std::vector<PoseCandidate> cands;
      for (const Instance& a : result.instances) {
        cands.push_back({a.pose, a.pose_score, MaskAreaOrBox(a)});
      }
      for (const Instance& f : fresh) {
        cands.push_back({f.pose, f.pose_score, MaskAreaOrBox(f)});
      }
      const size_t pinned = result.instances.size();
      std::vector<size_t> pose_keep =
          PoseNms(cands, config.pose_nms_oks, skeleton,
                  config.loop_policy.t_c, pinned);
      std::vector<bool> pose_kept(cands.size(), false);
      for (size_t k : pose_keep) pose_kept[k] = true;
      std::vector<Instance> survivors;
      for (size_t k = 0; k < fresh.size(); ++k) {
        if (pose_kept[pinned + k]) {
          survivors.push_back(std::move(fresh[k]));
        } else {
          ++stats.pose_suppressed;
          Log(fresh[k], it, "suppressed", {{"stage", "pose_nms"}});
          result.suppressed.push_back(std::move(fresh[k]));
        }
      }
      fresh.clear();

      // Segmentation of the new instances, seen against everyone present
      // before any mask of this batch changed.
      const std::vector<Instance> snapshot = survivors;
      for (size_t k = 0; k < survivors.size(); ++k) {
        std::vector<const Instance*> others;
        for (const Instance& a : result.instances) others.push_back(&a);
        for (size_t j = 0; j < snapshot.size(); ++j) {
          if (j != k) others.push_back(&snapshot[j]);
        }
        const SegmentOutcome o =
            SegmentInstance(image, survivors[k], others, backends, config,
                            config.loop_policy, skeleton, it);
        stats.segment_calls += o.called;
        stats.segment_skipped += o.skipped;
        stats.segment_failures += o.failed;
        stats.gate_discarded += o.discarded && o.called && !o.failed;
      }
      for (Instance& s : survivors) {
        Log(s, it, "accepted");
        union_mask |= s.mask;
        result.instances.push_back(std::move(s));
        ++stats.accepted;
      }
    } catch (const ProtocolError& e) {
      result.error = e.what();
    } catch (const BackendError& e) {
      // A detector that cannot answer leaves nothing to iterate on.
      result.error = std::string("detector: ") + e.what();
    }
    stats.masked_fraction =
        image_area > 0 ? static_cast<double>(union_mask.Area()) / image_area
                       : 0.0;
    result.iterations.push_back(stats);
    if (result.error) {
      spdlog::error("run aborted in iteration {}: {}", it, *result.error);
      return result;
    }
    if (stats.accepted == 0) break;
  }

  if (config.refine && !result.instances.empty()) {
    try {
      result.instances =
          RefineOnce(image, std::move(result.instances), backends, config,
                     config.refine_policy,
                     static_cast<int>(result.iterations.size()) + 1);
      result.refined = true;
    } catch (const ProtocolError& e) {
      result.error = e.what();
    }
  }
  return result;
}

std::vector<Instance> RefineOnce(const Image& image,
                                 std::vector<Instance> instances,
                                 BackendSet& backends, const BmpConfig& config,
                                 const PromptPolicy& policy, int iteration) {
  policy.Validate();
  const SkeletonConfig& skeleton = FindSkeleton(config.skeleton);
  // Every instance is prompted against the others as they were before the
  // pass, so the outcome does not depend on processing order.
  const std::vector<Instance> before = instances;
  for (size_t k = 0; k < instances.size(); ++k) {
    std::vector<const Instance*> others;
    for (size_t j = 0; j < before.size(); ++j) {
      if (j != k) others.push_back(&before[j]);
    }
    SegmentInstance(image, instances[k], others, backends, config, policy,
                    skeleton, iteration);
  }
  return instances;
}

}  // namespace bmp
