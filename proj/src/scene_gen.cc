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

#include "bmp/scene_gen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bmp {

using nlohmann::json;

double SceneRng::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int SceneRng::UniformInt(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("UniformInt: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

void SceneGenParams::Validate() const {
  if (width < 32 || height < 32) {
    throw std::invalid_argument("scene size must be at least 32x32");
  }
  if (min_persons < 1 || max_persons < min_persons) {
    throw std::invalid_argument("need 1 <= min_persons <= max_persons");
  }
  if (!(occlusion_min >= 0.0 && occlusion_min <= occlusion_max &&
        occlusion_max <= 1.0)) {
    throw std::invalid_argument("need 0 <= occlusion_min <= occlusion_max <= 1");
  }
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if (!(min_person_height > 0.0 && min_person_height <= max_person_height &&
        max_person_height <= 0.85)) {
    throw std::invalid_argument(
        "need 0 < min_person_height <= max_person_height <= 0.85");
  }
}

namespace {

// COCO-17 layout in a unit box (x across, y down).
constexpr std::array<std::array<double, 2>, 17> kTemplate = {{
    {0.50, 0.08}, {0.54, 0.06}, {0.46, 0.06}, {0.58, 0.08}, {0.42, 0.08},
    {0.68, 0.22}, {0.32, 0.22}, {0.80, 0.38}, {0.20, 0.38}, {0.88, 0.52},
    {0.12, 0.52}, {0.62, 0.55}, {0.38, 0.55}, {0.64, 0.76}, {0.36, 0.76},
    {0.65, 0.96}, {0.35, 0.96},
}};

constexpr std::array<std::array<int, 2>, 12> kLimbs = {{
    {5, 7}, {7, 9}, {6, 8}, {8, 10}, {11, 13}, {13, 15}, {12, 14}, {14, 16},
    {5, 6}, {11, 12}, {5, 11}, {6, 12},
}};

constexpr std::array<Rgb, 8> kPalette = {{
    {220, 120, 100}, {100, 180, 230}, {140, 220, 120}, {230, 200, 110},
    {180, 130, 230}, {120, 220, 210}, {240, 150, 190}, {170, 170, 110},
}};

double SegmentDistanceSq(const Point& p, const Point& a, const Point& b) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0) {
    t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
  }
  return SquaredDistance(p, {a.x + t * vx, a.y + t * vy});
}

bool InConvexQuad(const Point& p, const std::array<Point, 4>& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const Point& a = q[i];
    const Point& b = q[(i + 1) % 4];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

// Row prefix sums of a mask, for O(1) run intersection counts.
class RowPrefix {
 public:
  explicit RowPrefix(const BinaryMask& m)
      : width_(m.width()),
        sums_(static_cast<size_t>(m.height()) * (m.width() + 1), 0) {
    for (int y = 0; y < m.height(); ++y) {
      int64_t* row = &sums_[static_cast<size_t>(y) * (width_ + 1)];
      for (int x = 0; x < width_; ++x) row[x + 1] = row[x] + m.Get(x, y);
    }
  }
  int64_t Count(int y, int x0, int x1) const {
    const int64_t* row = &sums_[static_cast<size_t>(y) * (width_ + 1)];
    return row[x1] - row[x0];
  }

 private:
  int width_;
  std::vector<int64_t> sums_;
};

SceneInstance MakeInstance(const PersonShape& shape, int dx, int dy,
                           const SceneGenParams& params) {
  SceneInstance inst;
  inst.mask = PlaceShape(shape, dx, dy, params.width, params.height);
  inst.pose.skeleton_id = "coco17";
  for (const Point& k : shape.keypoints) {
    inst.pose.keypoints.push_back({k.x + dx, k.y + dy, 1.0});
  }
  inst.visibility.assign(shape.keypoints.size(), 2);
  return inst;
}

PersonShape RandomShape(const SceneGenParams& params, SceneRng& rng) {
  const double h = rng.Uniform(params.min_person_height,
                               params.max_person_height) *
                   params.height;
  PersonShape shape = MakePersonShape(h, rng);
  if (shape.width > params.width || shape.height > params.height) {
    throw std::invalid_argument("person does not fit the scene");
  }
  return shape;
}

}  // namespace

int64_t PersonShape::Area() const {
  int64_t a = 0;
  for (const Run& r : runs) a += r.x1 - r.x0;
  return a;
}

PersonShape MakePersonShape(double person_height, SceneRng& rng) {
  const double h = person_height;
  const double fw = 0.45 * h;
  const int margin = static_cast<int>(std::ceil(0.09 * h)) + 2;
  PersonShape shape;
  shape.width = static_cast<int>(std::ceil(fw)) + 2 * margin;
  shape.height = static_cast<int>(std::ceil(h)) + 2 * margin;

  const double body_jitter = 0.02 * h;
  const double face_jitter = 0.006 * h;
  for (size_t k = 0; k < kTemplate.size(); ++k) {
    const double j = k < 5 ? face_jitter : body_jitter;
    const double x = margin + kTemplate[k][0] * fw + rng.Uniform(-j, j);
    const double y = margin + kTemplate[k][1] * h + rng.Uniform(-j, j);
    shape.keypoints.push_back({std::round(x), std::round(y)});
  }
  const auto& kp = shape.keypoints;
  const Point neck = {(kp[5].x + kp[6].x) / 2.0, (kp[5].y + kp[6].y) / 2.0};
  const double head_r2 = std::pow(0.07 * h, 2);
  const double limb_r2 = std::pow(0.035 * h, 2);
  const double neck_r2 = std::pow(0.04 * h, 2);
  const std::array<Point, 4> torso = {kp[5], kp[11], kp[12], kp[6]};

  for (int y = 0; y < shape.height; ++y) {
    int run_start = -1;
    for (int x = 0; x <= shape.width; ++x) {
      bool inside = false;
      if (x < shape.width) {
        const Point p = {static_cast<double>(x), static_cast<double>(y)};
        inside = SquaredDistance(p, kp[0]) <= head_r2 ||
                 SegmentDistanceSq(p, kp[0], neck) <= neck_r2 ||
                 InConvexQuad(p, torso);
        for (size_t l = 0; !inside && l < kLimbs.size(); ++l) {
          inside = SegmentDistanceSq(p, kp[kLimbs[l][0]], kp[kLimbs[l][1]]) <=
                   limb_r2;
        }
        // Facial keypoints sit inside the head disc by construction; this
        // guards the extreme jitter.
        for (size_t k = 0; !inside && k < kp.size(); ++k) {
          inside = p == kp[k];
        }
      }
      if (inside && run_start < 0) run_start = x;
      if (!inside && run_start >= 0) {
        shape.runs.push_back({y, run_start, x});
        run_start = -1;
      }
    }
  }
  return shape;
}

BinaryMask PlaceShape(const PersonShape& shape, int dx, int dy, int width,
                      int height) {
  BinaryMask m(width, height);
  for (const PersonShape::Run& r : shape.runs) {
    const int y = r.y + dy;
    if (y < 0 || y >= height) continue;
    for (int x = std::max(0, r.x0 + dx); x < std::min(width, r.x1 + dx); ++x) {
      m.Set(x, y);
    }
  }
  return m;
}

double OcclusionFraction(const BinaryMask& back, const BinaryMask& front) {
  const int64_t area = back.Area();
  if (area == 0) return 0.0;
  return static_cast<double>(IntersectionArea(back, front)) /
         static_cast<double>(area);
}

Scene GenerateScene(const SceneGenParams& params, double occlusion,
                    SceneRng& rng) {
  params.Validate();
  if (!(occlusion >= 0.0 && occlusion <= 1.0)) {
    throw std::invalid_argument("occlusion must lie in [0, 1]");
  }
  const int persons = rng.UniformInt(params.min_persons, params.max_persons);

  Scene scene;
  scene.width = params.width;
  scene.height = params.height;
  std::array<size_t, kPalette.size()> colors;
  for (size_t i = 0; i < colors.size(); ++i) colors[i] = i;
  for (size_t i = colors.size() - 1; i > 0; --i) {
    std::swap(colors[i], colors[rng.UniformInt(0, static_cast<int>(i))]);
  }

  std::vector<SceneInstance> people;  // front to back
  if (persons == 1) {
    const PersonShape s = RandomShape(params, rng);
    people.push_back(MakeInstance(s, rng.UniformInt(0, params.width - s.width),
                                  rng.UniformInt(0, params.height - s.height),
                                  params));
  } else {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const PersonShape back = RandomShape(params, rng);
      const PersonShape front = RandomShape(params, rng);
      const int bx = rng.UniformInt(0, params.width - back.width);
      const int by = rng.UniformInt(0, params.height - back.height);
      const BinaryMask back_mask =
          PlaceShape(back, bx, by, params.width, params.height);
      const double back_area = static_cast<double>(back_mask.Area());
      const RowPrefix prefix(back_mask);
      const Point prefer = {rng.Uniform(0, params.width - front.width),
                            rng.Uniform(0, params.height - front.height)};

      double best_err = std::numeric_limits<double>::infinity();
      double best_dist = 0.0;
      int best_x = 0;
      int best_y = 0;
      for (int fy = 0; fy <= params.height - front.height; ++fy) {
        for (int fx = 0; fx <= params.width - front.width; ++fx) {
          int64_t overlap = 0;
          const bool disjoint = fx >= bx + back.width ||
                                bx >= fx + front.width ||
                                fy >= by + back.height ||
                                by >= fy + front.height;
          if (!disjoint) {
            for (const PersonShape::Run& r : front.runs) {
              overlap += prefix.Count(r.y + fy, r.x0 + fx, r.x1 + fx);
            }
          }
          const double err = std::abs(overlap / back_area - occlusion);
          const double dist = SquaredDistance(
              {static_cast<double>(fx), static_cast<double>(fy)}, prefer);
          if (err < best_err - 1e-12 ||
              (err <= best_err + 1e-12 && dist < best_dist)) {
            best_err = err;
            best_dist = dist;
            best_x = fx;
            best_y = fy;
          }
        }
      }
      if (best_err > params.tolerance) continue;
      people.push_back(MakeInstance(front, best_x, best_y, params));
      people.push_back(MakeInstance(back, bx, by, params));
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("cannot reach occlusion " +
                               std::to_string(occlusion));
    }
  }

  // Extra persons go anywhere, in front or behind, as long as everybody
  // keeps a tenth of their pixels visible.
  for (int extra = static_cast<int>(people.size()); extra < persons; ++extra) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const PersonShape s = RandomShape(params, rng);
      SceneInstance inst =
          MakeInstance(s, rng.UniformInt(0, params.width - s.width),
                       rng.UniformInt(0, params.height - s.height), params);
      std::vector<SceneInstance> trial = people;
      const size_t pos = static_cast<size_t>(
          rng.UniformInt(0, static_cast<int>(trial.size())));
      trial.insert(trial.begin() + pos, std::move(inst));
      Scene probe = scene;
      probe.instances = trial;
      for (size_t i = 0; i < probe.instances.size(); ++i) {
        probe.instances[i].depth = static_cast<int>(i);
      }
      const std::vector<int> owner = probe.OwnerMap();
      bool ok = true;
      for (size_t i = 0; ok && i < probe.instances.size(); ++i) {
        int64_t visible = 0;
        for (int o : owner) visible += o == static_cast<int>(i);
        ok = visible * 10 >= probe.instances[i].mask.Area();
      }
      if (ok) {
        people = std::move(trial);
        break;
      }
    }
  }

  for (size_t i = 0; i < people.size(); ++i) {
    people[i].id = static_cast<int>(i) + 1;
    people[i].depth = static_cast<int>(i);
    people[i].color = kPalette[colors[i % colors.size()]];
  }
  scene.instances = std::move(people);
  scene.Validate();
  return scene;
}

std::vector<Scene> GenerateCorpus(uint64_t seed, int count,
                                  const SceneGenParams& params) {
  if (count < 0) throw std::invalid_argument("count must be >= 0");
  std::vector<Scene> scenes;
  for (int i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<uint32_t>(seed),
                      static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(i)};
    std::array<uint32_t, 2> words;
    seq.generate(words.begin(), words.end());
    SceneRng rng((static_cast<uint64_t>(words[0]) << 32) | words[1]);
    const double occlusion =
        rng.Uniform(params.occlusion_min, params.occlusion_max);
    scenes.push_back(GenerateScene(params, occlusion, rng));
  }
  return scenes;
}

Scene CanonicalOcclusionScene(double occlusion) {
  SceneGenParams params;
  params.min_persons = 2;
  params.max_persons = 2;
  params.min_person_height = 0.7;
  params.max_person_height = 0.75;
  SceneRng rng(20241017);
  return GenerateScene(params, occlusion, rng);
}

json ScenesToCocoGt(const std::vector<Scene>& scenes,
                    const std::vector<std::string>& file_names) {
  if (file_names.size() != scenes.size()) {
    throw std::invalid_argument("one file name per scene required");
  }
  const SkeletonConfig& coco = CocoSkeleton();
  json images = json::array();
  json annotations = json::array();
  int64_t next_ann = 1;
  for (size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = scenes[s];
    const int image_id = static_cast<int>(s) + 1;
    images.push_back({{"id", image_id},
                      {"file_name", file_names[s]},
                      {"width", scene.width},
                      {"height", scene.height}});
    const std::vector<int> owner = scene.OwnerMap();
    for (size_t i = 0; i < scene.instances.size(); ++i) {
      const SceneInstance& inst = scene.instances[i];
      const BinaryMask visible = scene.VisibleMask(i);
      const std::optional<BBox> box = visible.BoundingBox();
      if (!box) continue;
      json kps = json::array();
      int labelled = 0;
      for (size_t k = 0; k < inst.pose.keypoints.size(); ++k) {
        const Keypoint& kp = inst.pose.keypoints[k];
        int v = 0;
        if (inst.visibility[k] > 0) {
          const Pixel p = PixelOf(kp.position());
          const bool front = p.x >= 0 && p.y >= 0 && p.x < scene.width &&
                             p.y < scene.height &&
                             owner[static_cast<size_t>(p.y) * scene.width +
                                   p.x] == static_cast<int>(i);
          v = front ? 2 : 1;
          ++labelled;
        }
        kps.push_back(kp.x);
        kps.push_back(kp.y);
        kps.push_back(v);
      }
      const Rle rle = EncodeRle(visible);
      annotations.push_back(
          {{"id", next_ann++},
           {"image_id", image_id},
           {"category_id", 1},
           {"iscrowd", 0},
           {"area", visible.Area()},
           {"bbox", {box->x, box->y, box->w, box->h}},
           {"segmentation",
            {{"size", {rle.height, rle.width}}, {"counts", RleToString(rle)}}},
           {"keypoints", std::move(kps)},
           {"num_keypoints", labelled}});
    }
  }
  json skeleton = json::array();
  for (const auto& pair :
       {std::array<int, 2>{16, 14}, {14, 12}, {17, 15}, {15, 13}, {12, 13},
        {6, 12}, {7, 13}, {6, 7}, {6, 8}, {7, 9}, {8, 10}, {9, 11}, {2, 3},
        {1, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 6}, {5, 7}}) {
    skeleton.push_back(pair);
  }
  return {{"images", std::move(images)},
          {"annotations", std::move(annotations)},
          {"categories",
           {{{"id", 1},
             {"name", "person"},
             {"supercategory", "person"},
             {"keypoints", coco.keypoint_names},
             {"skeleton", std::move(skeleton)}}}}};
}

}  // namespace bmp
