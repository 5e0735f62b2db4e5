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

#include "bmp/synthetic.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "bmp/image_io.h"

namespace bmp {

using nlohmann::json;

namespace {

constexpr double kVisibleConfidence = 0.9;
constexpr double kOccludedConfidence = 0.2;

bool IsBlack(const Rgb& c) { return c[0] == 0 && c[1] == 0 && c[2] == 0; }

BinaryMask BlackPixels(const Image& image) {
  BinaryMask m(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (IsBlack(image.At(x, y))) m.Set(x, y);
    }
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scene

void Scene::Validate() const {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("scene: non-positive dimensions");
  }
  if (IsBlack(background)) {
    throw std::invalid_argument("scene: background must not be pure black");
  }
  const SkeletonConfig& skel = FindSkeleton(skeleton);
  std::set<int> depths;
  std::set<int> ids;
  for (const SceneInstance& inst : instances) {
    if (inst.mask.width() != width || inst.mask.height() != height) {
      throw std::invalid_argument("scene: instance " +
                                  std::to_string(inst.id) +
                                  " mask size differs from scene");
    }
    if (!depths.insert(inst.depth).second) {
      throw std::invalid_argument("scene: duplicate depth " +
                                  std::to_string(inst.depth));
    }
    if (!ids.insert(inst.id).second) {
      throw std::invalid_argument("scene: duplicate instance id " +
                                  std::to_string(inst.id));
    }
    if (IsBlack(inst.color)) {
      throw std::invalid_argument("scene: instance colour must not be black");
    }
    if (static_cast<int>(inst.pose.keypoints.size()) != skel.keypoint_count ||
        inst.visibility.size() != inst.pose.keypoints.size()) {
      throw std::invalid_argument("scene: instance " +
                                  std::to_string(inst.id) +
                                  " keypoint count does not match skeleton");
    }
  }
}

std::vector<int> Scene::OwnerMap() const {
  std::vector<int> owner(static_cast<size_t>(width) * height, -1);
  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Paint back to front so the front-most owner wins.
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return instances[a].depth > instances[b].depth;
  });
  for (size_t i : order) {
    auto bits = instances[i].mask.bits();
    for (size_t p = 0; p < bits.size(); ++p) {
      if (bits[p]) owner[p] = static_cast<int>(i);
    }
  }
  return owner;
}

BinaryMask Scene::VisibleMask(size_t index) const {
  const std::vector<int> owner = OwnerMap();
  BinaryMask m(width, height);
  auto bits = m.mutable_bits();
  for (size_t p = 0; p < owner.size(); ++p) {
    bits[p] = owner[p] == static_cast<int>(index) ? 1 : 0;
  }
  return m;
}

Image Scene::Render() const {
  Image image(width, height, background);
  const std::vector<int> owner = OwnerMap();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int o = owner[static_cast<size_t>(y) * width + x];
      if (o >= 0) image.Put(x, y, instances[o].color);
    }
  }
  return image;
}

json SceneToJson(const Scene& scene) {
  json instances = json::array();
  for (const SceneInstance& inst : scene.instances) {
    const Rle rle = EncodeRle(inst.mask);
    json kps = json::array();
    for (size_t k = 0; k < inst.pose.keypoints.size(); ++k) {
      const Keypoint& kp = inst.pose.keypoints[k];
      kps.push_back({kp.x, kp.y, inst.visibility[k]});
    }
    instances.push_back({{"id", inst.id},
                         {"depth", inst.depth},
                         {"color", inst.color},
                         {"mask",
                          {{"size", {rle.height, rle.width}},
                           {"counts", RleToString(rle)}}},
                         {"keypoints", std::move(kps)}});
  }
  return {{"format", "bmp-scene"},
          {"version", 1},
          {"width", scene.width},
          {"height", scene.height},
          {"skeleton", scene.skeleton},
          {"background", scene.background},
          {"instances", std::move(instances)}};
}

Scene SceneFromJson(const json& j) {
  try {
    if (j.at("format") != "bmp-scene" || j.at("version") != 1) {
      throw std::invalid_argument("scene: expected format bmp-scene v1");
    }
    Scene scene;
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    scene.skeleton = j.value("skeleton", std::string("coco17"));
    if (j.contains("background")) {
      scene.background = j["background"].get<Rgb>();
    }
    for (const json& ji : j.at("instances")) {
      SceneInstance inst;
      inst.id = ji.at("id").get<int>();
      inst.depth = ji.at("depth").get<int>();
      inst.color = ji.at("color").get<Rgb>();
      const json& jm = ji.at("mask");
      const int h = jm.at("size").at(0).get<int>();
      const int w = jm.at("size").at(1).get<int>();
      if (jm.at("counts").is_string()) {
        inst.mask = DecodeRle(
            RleFromString(jm["counts"].get<std::string>(), h, w));
      } else {
        inst.mask = DecodeRle(
            Rle{h, w, jm["counts"].get<std::vector<uint32_t>>()});
      }
      inst.pose.skeleton_id = scene.skeleton;
      for (const json& k : ji.at("keypoints")) {
        inst.pose.keypoints.push_back(
            {k.at(0).get<double>(), k.at(1).get<double>(), 1.0});
        inst.visibility.push_back(k.at(2).get<int>());
      }
      scene.instances.push_back(std::move(inst));
    }
    scene.Validate();
    return scene;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
}

Scene LoadScene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scene " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw std::invalid_argument("scene " + path.string() + " is not JSON");
  }
  return SceneFromJson(j);
}

void SaveScene(const std::filesystem::path& path, const Scene& scene) {
  WriteFileAtomically(path, SceneToJson(scene).dump() + "\n");
}

// ---------------------------------------------------------------------------
// Rules

namespace {

std::vector<Detection> DetectWith(const Scene& scene,
                                  const std::vector<BinaryMask>& visible,
                                  const BinaryMask& union_mask, double v_det,
                                  bool emit_masks) {
  if (!(v_det > 0.0 && v_det <= 1.0)) {
    throw std::invalid_argument("v_det must lie in (0, 1]");
  }
  std::vector<Detection> out;
  for (size_t i = 0; i < scene.instances.size(); ++i) {
    const BinaryMask own = scene.instances[i].mask.Minus(union_mask);
    const int64_t own_area = own.Area();
    if (own_area == 0) continue;
    BinaryMask vis = visible[i].Minus(union_mask);
    const double ratio =
        static_cast<double>(vis.Area()) / static_cast<double>(own_area);
    if (ratio < v_det) continue;
    Detection det;
    det.bbox = *own.BoundingBox();
    det.bbox.score = ratio;
    if (emit_masks) det.mask = std::move(vis);
    out.push_back(std::move(det));
  }
  return out;
}

}  // namespace

std::vector<Detection> SyntheticDetectRule(const Scene& scene,
                                           const BinaryMask& union_mask,
                                           double v_det, bool emit_masks) {
  std::vector<BinaryMask> visible;
  for (size_t i = 0; i < scene.instances.size(); ++i) {
    visible.push_back(scene.VisibleMask(i));
  }
  return DetectWith(scene, visible, union_mask, v_det, emit_masks);
}

SyntheticBackend::SyntheticBackend(Scene scene, double v_det, bool emit_masks)
    : scene_(std::move(scene)), v_det_(v_det), emit_masks_(emit_masks) {
  scene_.Validate();
  owner_ = scene_.OwnerMap();
  for (size_t i = 0; i < scene_.instances.size(); ++i) {
    BinaryMask m(scene_.width, scene_.height);
    auto bits = m.mutable_bits();
    for (size_t p = 0; p < owner_.size(); ++p) {
      bits[p] = owner_[p] == static_cast<int>(i) ? 1 : 0;
    }
    visible_centroid_.push_back(m.Centroid().value_or(Point{
        std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::infinity()}));
    visible_.push_back(std::move(m));
  }
  render_ = scene_.Render();
}

HandshakeInfo SyntheticBackend::Handshake() {
  HandshakeInfo info;
  info.name = "synthetic";
  info.skeletons = {scene_.skeleton};
  info.detector_masks = emit_masks_;
  return info;
}

void SyntheticBackend::CheckSize(const Image& image) const {
  if (image.width() != scene_.width || image.height() != scene_.height) {
    throw BackendError("bad_image", "image size differs from the scene");
  }
}

std::vector<Detection> SyntheticBackend::Detect(const Image& composited) {
  CheckSize(composited);
  return DetectWith(scene_, visible_, BlackPixels(composited), v_det_,
                    emit_masks_);
}

Pose SyntheticBackend::EstimatePose(const Image& crop,
                                    const CropTransform& transform,
                                    const std::string& skeleton) {
  if (skeleton != scene_.skeleton) {
    throw BackendError("unsupported_skeleton", skeleton);
  }
  if (crop.width() == 0 || crop.height() == 0) {
    throw BackendError("bad_image", "empty crop");
  }
  std::vector<int64_t> votes(scene_.instances.size(), 0);
  for (int v = 0; v < crop.height(); ++v) {
    for (int u = 0; u < crop.width(); ++u) {
      const Pixel p = PixelOf(transform.ToImage(
          {static_cast<double>(u), static_cast<double>(v)}));
      const int o = OwnerAt(p.x, p.y);
      if (o < 0) continue;
      if (crop.At(u, v) == render_.At(p.x, p.y)) ++votes[o];
    }
  }
  int target = -1;
  for (size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] == 0) continue;
    if (target < 0 || votes[i] > votes[target] ||
        (votes[i] == votes[target] &&
         scene_.instances[i].depth < scene_.instances[target].depth)) {
      target = static_cast<int>(i);
    }
  }

  const SkeletonConfig& skel = FindSkeleton(skeleton);
  Pose pose;
  pose.skeleton_id = skeleton;
  const double max_u = crop.width() - 1;
  const double max_v = crop.height() - 1;
  if (target < 0) {
    pose.keypoints.assign(skel.keypoint_count,
                          Keypoint{max_u / 2.0, max_v / 2.0, 0.0});
    return pose;
  }
  const SceneInstance& inst = scene_.instances[target];
  for (size_t k = 0; k < inst.pose.keypoints.size(); ++k) {
    const Point gt = inst.pose.keypoints[k].position();
    const Point c = transform.ToCrop(gt);
    Keypoint kp{c.x, c.y, 0.0};
    const bool in_crop = c.x >= 0 && c.y >= 0 && c.x <= max_u && c.y <= max_v;
    if (!in_crop) {
      kp.x = std::clamp(c.x, 0.0, max_u);
      kp.y = std::clamp(c.y, 0.0, max_v);
    } else if (inst.visibility[k] > 0) {
      const Pixel p = PixelOf(gt);
      kp.confidence =
          OwnerAt(p.x, p.y) == target ? kVisibleConfidence : kOccludedConfidence;
    }
    pose.keypoints.push_back(kp);
  }
  return pose;
}

SegmentResult SyntheticBackend::Segment(const Image& image,
                                        const PromptSet& prompts) {
  CheckSize(image);
  SegmentResult out;
  if (prompts.positives.empty()) {
    if (!prompts.bbox) {
      throw BackendError("bad_prompts", "need a positive point or a box");
    }
    out.mask = BinaryMask(scene_.width, scene_.height);
    for (const BinaryMask& v : visible_) out.mask |= v;
    out.mask &= BinaryMask::FromBox(*prompts.bbox, scene_.width,
                                    scene_.height);
    out.score = 1.0;
    return out;
  }

  std::vector<int> votes(scene_.instances.size(), 0);
  Point mean;
  for (const Point& p : prompts.positives) {
    const Pixel px = PixelOf(p);
    const int o = OwnerAt(px.x, px.y);
    if (o >= 0) ++votes[o];
    mean.x += p.x / prompts.positives.size();
    mean.y += p.y / prompts.positives.size();
  }
  int best = -1;
  for (size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] == 0) continue;
    if (best < 0 || votes[i] > votes[best] ||
        (votes[i] == votes[best] &&
         SquaredDistance(visible_centroid_[i], mean) <
             SquaredDistance(visible_centroid_[best], mean))) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    out.mask = BinaryMask(scene_.width, scene_.height);
    out.score = 0.0;
    return out;
  }
  out.mask = visible_[best];
  if (prompts.bbox) {
    out.mask &= BinaryMask::FromBox(*prompts.bbox, scene_.width,
                                    scene_.height);
  }
  out.score = static_cast<double>(votes[best]) / prompts.positives.size();
  return out;
}

BackendSet MakeSyntheticBackends(std::shared_ptr<SyntheticBackend> backend) {
  BackendSet set;
  set.detector = backend;
  set.pose = backend;
  set.segmenter = backend;
  return set;
}

}  // namespace bmp
