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

// Procedural stick-figure scenes with controlled occlusion, and their COCO
// ground truth.

#ifndef BMP_SCENE_GEN_H_
#define BMP_SCENE_GEN_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bmp/synthetic.h"
#include "json.hpp"

namespace bmp {

// mt19937_64 with a portable integer-to-double mapping, so the same seed
// yields the same scenes on every standard library.
class SceneRng {
 public:
  explicit SceneRng(uint64_t seed) : engine_(seed) {}
  double Uniform();  // [0, 1)
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  int UniformInt(int lo, int hi);  // inclusive

 private:
  std::mt19937_64 engine_;
};

struct SceneGenParams {
  int width = 256;
  int height = 192;
  int min_persons = 2;
  int max_persons = 3;
  // Share of the rear person of the main pair hidden by the front one.
  double occlusion_min = 0.3;
  double occlusion_max = 0.9;
  double tolerance = 0.01;
  // Person height as a share of the image height.
  double min_person_height = 0.55;
  double max_person_height = 0.8;

  void Validate() const;
};

// Pixel rows of a person rasterised on its own canvas, plus keypoints.
struct PersonShape {
  int width = 0;
  int height = 0;
  struct Run {
    int y;
    int x0;
    int x1;  // exclusive
  };
  std::vector<Run> runs;
  std::vector<Point> keypoints;  // integer coordinates, all inside the shape

  int64_t Area() const;
};

PersonShape MakePersonShape(double person_height, SceneRng& rng);
BinaryMask PlaceShape(const PersonShape& shape, int dx, int dy, int width,
                      int height);

// |back ∩ front| / |back|; 0 for an empty back mask.
double OcclusionFraction(const BinaryMask& back, const BinaryMask& front);

// With two or more persons, a front/back pair is placed so that `occlusion`
// of the rear person is hidden; further persons go anywhere in the depth
// order. Throws std::runtime_error if the target cannot be met.
Scene GenerateScene(const SceneGenParams& params, double occlusion,
                    SceneRng& rng);

// Scene `index` depends only on (seed, index).
std::vector<Scene> GenerateCorpus(uint64_t seed, int count,
                                  const SceneGenParams& params);

// Two persons, the rear one 70% hidden by default.
Scene CanonicalOcclusionScene(double occlusion = 0.7);

// COCO keypoint ground truth: modal masks, boxes and areas; keypoint
// visibility 2 where front-most, 1 where hidden. Image ids are 1-based
// positions in `scenes`.
nlohmann::json ScenesToCocoGt(const std::vector<Scene>& scenes,
                              const std::vector<std::string>& file_names);

}  // namespace bmp

#endif  // BMP_SCENE_GEN_H_
