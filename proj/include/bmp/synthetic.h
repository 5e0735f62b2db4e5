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

// Rule-based stand-in for the detector, pose estimator and segmenter. All
// three answer from a known scene, so closed-loop behaviour can be checked
// without model weights.
//
// Rules:
//  * Every non-black pixel of a request image is scene content; pure black
//    marks masked-out pixels (renders never contain black).
//  * detect: instance i is reported iff its own pixels outside the masked
//    region are non-empty and the visible (front-most) share of them is at
//    least v_det. Box = tight box of those own pixels, score = that share,
//    mask = the visible ones.
//  * pose: the target is the instance owning the most crop pixels that the
//    conditioning blend left unchanged. Keypoints are its ground truth with
//    confidence 0.9 where it is front-most, 0.2 where occluded and 0 outside
//    the crop (those are clamped onto the crop border).
//  * segment: the visible mask of the instance owning most positive
//    prompts (ties: nearest centroid), clipped to the box prompt if any. A
//    box without points returns every visible pixel inside the box.

#ifndef BMP_SYNTHETIC_H_
#define BMP_SYNTHETIC_H_

#include <filesystem>
#include <string>
#include <vector>

#include "bmp/backends.h"
#include "bmp/geometry.h"
#include "bmp/imaging.h"
#include "json.hpp"

namespace bmp {

struct SceneInstance {
  int id = 0;
  int depth = 0;  // lower is closer to the camera
  Rgb color = {200, 200, 200};
  BinaryMask mask;  // full (amodal) extent
  Pose pose;
  std::vector<int> visibility;  // 0 = not labelled
};

struct Scene {
  int width = 0;
  int height = 0;
  Rgb background = {64, 64, 64};
  std::string skeleton = "coco17";
  std::vector<SceneInstance> instances;

  // Throws std::invalid_argument on inconsistent data.
  void Validate() const;
  // Per pixel: index into `instances` of the front-most owner, or -1.
  std::vector<int> OwnerMap() const;
  // Pixels where instance `index` is front-most.
  BinaryMask VisibleMask(size_t index) const;
  Image Render() const;
};

nlohmann::json SceneToJson(const Scene& scene);
Scene SceneFromJson(const nlohmann::json& j);
Scene LoadScene(const std::filesystem::path& path);
void SaveScene(const std::filesystem::path& path, const Scene& scene);

// Detection rule on an explicit union mask.
std::vector<Detection> SyntheticDetectRule(const Scene& scene,
                                           const BinaryMask& union_mask,
                                           double v_det,
                                           bool emit_masks = true);

class SyntheticBackend : public Detector,
                         public PoseEstimator,
                         public Segmenter {
 public:
  explicit SyntheticBackend(Scene scene, double v_det = 0.5,
                            bool emit_masks = true);

  HandshakeInfo Handshake() override;
  std::vector<Detection> Detect(const Image& composited) override;
  Pose EstimatePose(const Image& crop, const CropTransform& transform,
                    const std::string& skeleton) override;
  SegmentResult Segment(const Image& image, const PromptSet& prompts) override;

  const Scene& scene() const { return scene_; }
  const Image& render() const { return render_; }
  const BinaryMask& visible(size_t index) const { return visible_[index]; }

 private:
  void CheckSize(const Image& image) const;
  int OwnerAt(int x, int y) const {
    if (x < 0 || y < 0 || x >= scene_.width || y >= scene_.height) return -1;
    return owner_[static_cast<size_t>(y) * scene_.width + x];
  }

  Scene scene_;
  double v_det_;
  bool emit_masks_;
  std::vector<int> owner_;
  std::vector<BinaryMask> visible_;
  std::vector<Point> visible_centroid_;
  Image render_;
};

// Backend set whose three roles share one synthetic instance.
BackendSet MakeSyntheticBackends(std::shared_ptr<SyntheticBackend> backend);

}  // namespace bmp

#endif  // BMP_SYNTHETIC_H_
