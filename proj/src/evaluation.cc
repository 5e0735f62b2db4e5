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

#include "bmp/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace bmp {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Schema helpers. Every accessor takes the JSON path of its argument so the
// error names exactly what was wrong.

[[noreturn]] void Fail(const std::string& path, const std::string& what) {
  throw SchemaError(path + ": " + what);
}

const json& Field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) Fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) Fail(path, std::string("missing field '") + key + "'");
  return *it;
}

double Number(const json& j, const std::string& path) {
  if (!j.is_number()) Fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) Fail(path, "expected a finite number");
  return v;
}

int64_t Integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) Fail(path, "expected an integer");
  return j.get<int64_t>();
}

const json& Array(const json& j, const std::string& path) {
  if (!j.is_array()) Fail(path, "expected an array");
  return j;
}

BBox ParseBox(const json& j, const std::string& path) {
  Array(j, path);
  if (j.size() != 4) Fail(path, "expected [x, y, w, h]");
  BBox b{Number(j[0], path + "[0]"), Number(j[1], path + "[1]"),
         Number(j[2], path + "[2]"), Number(j[3], path + "[3]")};
  if (b.w < 0 || b.h < 0) Fail(path, "negative box size");
  return b;
}

std::vector<double> ParseKeypoints(const json& j, const std::string& path) {
  Array(j, path);
  if (j.size() % 3 != 0) Fail(path, "length must be a multiple of 3");
  std::vector<double> out;
  for (size_t i = 0; i < j.size(); ++i) {
    out.push_back(Number(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Rle ParseRleObject(const json& j, const std::string& path, int height,
                   int width) {
  const json& size = Array(Field(j, "size", path), path + ".size");
  if (size.size() != 2) Fail(path + ".size", "expected [height, width]");
  const int h = static_cast<int>(Integer(size[0], path + ".size[0]"));
  const int w = static_cast<int>(Integer(size[1], path + ".size[1]"));
  if (h != height || w != width) {
    Fail(path + ".size", "does not match image size " +
                             std::to_string(height) + "x" +
                             std::to_string(width));
  }
  const json& counts = Field(j, "counts", path);
  Rle rle;
  try {
    if (counts.is_string()) {
      rle = RleFromString(counts.get<std::string>(), h, w);
    } else {
      Array(counts, path + ".counts");
      rle = Rle{h, w, {}};
      for (size_t i = 0; i < counts.size(); ++i) {
        const int64_t c =
            Integer(counts[i], path + ".counts[" + std::to_string(i) + "]");
        if (c < 0) Fail(path + ".counts", "negative run");
        rle.counts.push_back(static_cast<uint32_t>(c));
      }
    }
    uint64_t total = 0;
    for (uint32_t c : rle.counts) total += c;
    if (total != static_cast<uint64_t>(h) * static_cast<uint64_t>(w)) {
      Fail(path + ".counts", "runs do not cover the image");
    }
  } catch (const std::invalid_argument& e) {
    Fail(path + ".counts", e.what());
  }
  return rle;
}

Rle ParseSegmentation(const json& j, const std::string& path,
                      const ImageInfo& image) {
  if (j.is_object()) return ParseRleObject(j, path, image.height, image.width);
  Array(j, path);
  BinaryMask all(image.width, image.height);
  for (size_t p = 0; p < j.size(); ++p) {
    const std::string pp = path + "[" + std::to_string(p) + "]";
    std::vector<double> xy;
    for (size_t i = 0; i < Array(j[p], pp).size(); ++i) {
      xy.push_back(Number(j[p][i], pp + "[" + std::to_string(i) + "]"));
    }
    if (xy.size() < 6 || xy.size() % 2 != 0) {
      Fail(pp, "polygon needs at least three x, y pairs");
    }
    all |= DecodeRle(RleFromPolygon(xy, image.height, image.width));
  }
  return EncodeRle(all);
}

std::string Indexed(const std::string& base, size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

}  // namespace

const ImageInfo* Dataset::FindImage(int64_t id) const {
  auto it = std::lower_bound(
      images.begin(), images.end(), id,
      [](const ImageInfo& im, int64_t v) { return im.id < v; });
  return it != images.end() && it->id == id ? &*it : nullptr;
}

Dataset AnnotationsFromJson(const json& j, const std::string& source) {
  Dataset ds;
  if (!j.is_object()) Fail(source, "expected a COCO annotation object");

  const json& images = Array(Field(j, "images", source), source + ".images");
  std::set<int64_t> image_ids;
  for (size_t i = 0; i < images.size(); ++i) {
    const std::string p = Indexed(source + ".images", i);
    ImageInfo im;
    im.id = Integer(Field(images[i], "id", p), p + ".id");
    if (images[i].contains("file_name") && images[i]["file_name"].is_string()) {
      im.file_name = images[i]["file_name"].get<std::string>();
    }
    im.width = static_cast<int>(Integer(Field(images[i], "width", p), p + ".width"));
    im.height =
        static_cast<int>(Integer(Field(images[i], "height", p), p + ".height"));
    if (im.width <= 0 || im.height <= 0) Fail(p, "non-positive image size");
    if (!image_ids.insert(im.id).second) Fail(p + ".id", "duplicate image id");
    ds.images.push_back(std::move(im));
  }
  std::sort(ds.images.begin(), ds.images.end(),
            [](const ImageInfo& a, const ImageInfo& b) { return a.id < b.id; });

  if (j.contains("categories")) {
    const json& cats = Array(j["categories"], source + ".categories");
    for (size_t i = 0; i < cats.size(); ++i) {
      const std::string p = Indexed(source + ".categories", i);
      Category c;
      c.id = Integer(Field(cats[i], "id", p), p + ".id");
      if (cats[i].contains("name") && cats[i]["name"].is_string()) {
        c.name = cats[i]["name"].get<std::string>();
      }
      if (cats[i].contains("keypoints")) {
        const json& kn = Array(cats[i]["keypoints"], p + ".keypoints");
        for (size_t k = 0; k < kn.size(); ++k) {
          if (!kn[k].is_string()) Fail(Indexed(p + ".keypoints", k), "expected a string");
          c.keypoints.push_back(kn[k].get<std::string>());
        }
      }
      ds.categories.push_back(std::move(c));
    }
  }

  const json& anns =
      Array(Field(j, "annotations", source), source + ".annotations");
  std::set<int64_t> ann_ids;
  for (size_t i = 0; i < anns.size(); ++i) {
    const std::string p = Indexed(source + ".annotations", i);
    const json& a = anns[i];
    GtAnnotation g;
    g.id = Integer(Field(a, "id", p), p + ".id");
    if (!ann_ids.insert(g.id).second) Fail(p + ".id", "duplicate annotation id");
    g.image_id = Integer(Field(a, "image_id", p), p + ".image_id");
    const ImageInfo* im = ds.FindImage(g.image_id);
    if (im == nullptr) {
      Fail(p + ".image_id", "unknown image " + std::to_string(g.image_id));
    }
    g.category_id = a.contains("category_id")
                        ? Integer(a["category_id"], p + ".category_id")
                        : 1;
    if (a.contains("iscrowd")) {
      const json& c = a["iscrowd"];
      if (c.is_boolean()) {
        g.iscrowd = c.get<bool>();
      } else {
        g.iscrowd = Integer(c, p + ".iscrowd") != 0;
      }
    }
    if (a.contains("segmentation") && !a["segmentation"].is_null()) {
      g.segmentation = ParseSegmentation(a["segmentation"],
                                         p + ".segmentation", *im);
    }
    if (a.contains("bbox")) {
      g.bbox = ParseBox(a["bbox"], p + ".bbox");
    } else if (g.segmentation) {
      g.bbox = DecodeRle(*g.segmentation).BoundingBox().value_or(BBox{});
    } else {
      Fail(p, "needs a bbox or a segmentation");
    }
    if (a.contains("keypoints")) {
      g.keypoints = ParseKeypoints(a["keypoints"], p + ".keypoints");
    }
    int labelled = 0;
    for (size_t k = 2; k < g.keypoints.size(); k += 3) {
      labelled += g.keypoints[k] > 0;
    }
    g.num_keypoints = a.contains("num_keypoints")
                          ? static_cast<int>(Integer(a["num_keypoints"],
                                                     p + ".num_keypoints"))
                          : labelled;
    if (a.contains("area")) {
      g.area = Number(a["area"], p + ".area");
    } else if (g.segmentation) {
      g.area = static_cast<double>(RleArea(*g.segmentation));
    } else {
      g.area = g.bbox.Area();
    }
    ds.annotations.push_back(std::move(g));
  }
  return ds;
}

namespace {

json ParseFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace

Dataset LoadAnnotations(const std::filesystem::path& path) {
  return AnnotationsFromJson(ParseFile(path), path.string());
}

std::vector<ResultAnnotation> ResultsFromJson(const json& j, const Dataset& gt,
                                              const std::string& source) {
  Array(j, source);
  std::vector<ResultAnnotation> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = Indexed(source, i);
    const json& r = j[i];
    ResultAnnotation res;
    res.image_id = Integer(Field(r, "image_id", p), p + ".image_id");
    const ImageInfo* im = gt.FindImage(res.image_id);
    if (im == nullptr) {
      Fail(p + ".image_id", "unknown image " + std::to_string(res.image_id));
    }
    res.category_id = r.contains("category_id")
                          ? Integer(r["category_id"], p + ".category_id")
                          : 1;
    res.score = Number(Field(r, "score", p), p + ".score");
    if (r.contains("bbox")) res.bbox = ParseBox(r["bbox"], p + ".bbox");
    if (r.contains("segmentation")) {
      res.segmentation = ParseSegmentation(r["segmentation"],
                                           p + ".segmentation", *im);
    }
    if (r.contains("keypoints")) {
      res.keypoints = ParseKeypoints(r["keypoints"], p + ".keypoints");
    }
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<ResultAnnotation> LoadResults(const std::filesystem::path& path,
                                          const Dataset& gt) {
  return ResultsFromJson(ParseFile(path), gt, path.string());
}

// ---------------------------------------------------------------------------
// RLE helpers

Rle RleFromPolygon(std::span<const double> xy, int height, int width) {
  // Port of the COCO mask API polygon rasteriser: trace the boundary at 5x
  // resolution, keep the y-crossings per column, then run-length them.
  const int64_t h = height;
  const int64_t w = width;
  const double scale = 5;
  size_t k = xy.size() / 2;
  std::vector<int> x1(k), y1(k), x, y;
  for (size_t i = 0; i < k; ++i) {
    x1[i] = static_cast<int>(scale * xy[2 * i] + .5);
    y1[i] = static_cast<int>(scale * xy[2 * i + 1] + .5);
  }
  if (x1[k - 1] != x1[0] || y1[k - 1] != y1[0]) {
    x1.push_back(x1[0]);
    y1.push_back(y1[0]);
    ++k;
  }
  for (size_t i = 0; i + 1 < k; ++i) {
    int xs = x1[i], xe = x1[i + 1], ys = y1[i], ye = y1[i + 1];
    const int dx = std::abs(xe - xs);
    const int dy = std::abs(ys - ye);
    if (!dx && !dy) {
      x.push_back(xs);
      y.push_back(ys);
      continue;
    }
    const bool flip = (dx >= dy && xs > xe) || (dx < dy && ys > ye);
    if (flip) {
      std::swap(xs, xe);
      std::swap(ys, ye);
    }
    const double s = dx >= dy ? static_cast<double>(ye - ys) / dx
                              : static_cast<double>(xe - xs) / dy;
    if (dx >= dy) {
      for (int j = 0; j <= dx; ++j) {
        const int t = flip ? dx - j : j;
        x.push_back(t + xs);
        y.push_back(static_cast<int>(ys + s * t + .5));
      }
    } else {
      for (int j = 0; j <= dy; ++j) {
        const int t = flip ? dy - j : j;
        y.push_back(t + ys);
        x.push_back(static_cast<int>(xs + s * t + .5));
      }
    }
  }
  std::vector<int64_t> cross;
  for (size_t i = 1; i < x.size(); ++i) {
    if (x[i] == x[i - 1]) continue;
    double xd = x[i] < x[i - 1] ? x[i] : x[i] - 1;
    xd = (xd + .5) / scale - .5;
    if (std::floor(xd) != xd || xd < 0 || xd > w - 1) continue;
    double yd = y[i] < y[i - 1] ? y[i] : y[i - 1];
    yd = (yd + .5) / scale - .5;
    if (yd < 0) {
      yd = 0;
    } else if (yd > h) {
      yd = static_cast<double>(h);
    }
    yd = std::ceil(yd);
    cross.push_back(static_cast<int64_t>(xd) * h + static_cast<int64_t>(yd));
  }
  std::sort(cross.begin(), cross.end());
  cross.push_back(h * w);
  std::vector<uint32_t> c;
  int64_t prev = 0;
  for (int64_t v : cross) {
    c.push_back(static_cast<uint32_t>(v - prev));
    prev = v;
  }
  Rle rle{height, width, {c[0]}};
  for (size_t i = 1; i < c.size();) {
    if (c[i] > 0) {
      rle.counts.push_back(c[i++]);
    } else {
      ++i;
      if (i < c.size()) rle.counts.back() += c[i++];
    }
  }
  return rle;
}

int64_t RleArea(const Rle& rle) {
  int64_t a = 0;
  for (size_t i = 1; i < rle.counts.size(); i += 2) a += rle.counts[i];
  return a;
}

int64_t RleIntersectionArea(const Rle& a, const Rle& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("RLE sizes differ");
  }
  // Walk both run lists; runs alternate 0/1 starting with 0.
  size_t ia = 0, ib = 0;
  int64_t left_a = a.counts.empty() ? 0 : a.counts[0];
  int64_t left_b = b.counts.empty() ? 0 : b.counts[0];
  int64_t inter = 0;
  while (ia < a.counts.size() && ib < b.counts.size()) {
    if (left_a == 0) {
      if (++ia >= a.counts.size()) break;
      left_a = a.counts[ia];
      continue;
    }
    if (left_b == 0) {
      if (++ib >= b.counts.size()) break;
      left_b = b.counts[ib];
      continue;
    }
    const int64_t step = std::min(left_a, left_b);
    if ((ia & 1) && (ib & 1)) inter += step;
    left_a -= step;
    left_b -= step;
  }
  return inter;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view ToString(EvalTask task) {
  switch (task) {
    case EvalTask::kBbox:
      return "bbox";
    case EvalTask::kSegm:
      return "segm";
    case EvalTask::kKeypoints:
      return "keypoints";
  }
  return "?";
}

EvalTask ParseEvalTask(std::string_view text) {
  if (text == "bbox") return EvalTask::kBbox;
  if (text == "segm") return EvalTask::kSegm;
  if (text == "keypoints") return EvalTask::kKeypoints;
  throw std::invalid_argument("unknown task '" + std::string(text) +
                              "' (bbox, segm, keypoints)");
}

EvalParams EvalParams::Default() {
  EvalParams p;
  for (int i = 0; i < 10; ++i) p.iou_thresholds.push_back(0.5 + i * 0.45 / 9);
  for (int i = 0; i <= 100; ++i) p.recall_thresholds.push_back(i / 100.0);
  return p;
}

namespace {

constexpr double kEps = 2.220446049250313e-16;

double CrowdAwareBoxIou(const BBox& d, const BBox& g, bool crowd) {
  const double iw = std::min(d.Right(), g.Right()) - std::max(d.x, g.x);
  const double ih = std::min(d.Bottom(), g.Bottom()) - std::max(d.y, g.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double u = crowd ? d.Area() : d.Area() + g.Area() - inter;
  return u > 0 ? inter / u : 0.0;
}

double CrowdAwareMaskIou(const Rle& d, const Rle& g, bool crowd) {
  const double inter = static_cast<double>(RleIntersectionArea(d, g));
  const double ad = static_cast<double>(RleArea(d));
  const double u = crowd ? ad : ad + RleArea(g) - inter;
  return u > 0 ? inter / u : 0.0;
}

// The COCO keypoint similarity as used for matching, including the
// box-distance fallback for GT without labelled keypoints.
double EvalOks(const GtAnnotation& g, const std::vector<double>& d,
               const SkeletonConfig& skel) {
  const size_t k = skel.oks_sigmas.size();
  int k1 = 0;
  for (size_t i = 0; i < k; ++i) k1 += g.keypoints[3 * i + 2] > 0;
  const double x0 = g.bbox.x - g.bbox.w, x1 = g.bbox.x + g.bbox.w * 2;
  const double y0 = g.bbox.y - g.bbox.h, y1 = g.bbox.y + g.bbox.h * 2;
  double sum = 0.0;
  int n = 0;
  for (size_t i = 0; i < k; ++i) {
    const double vg = g.keypoints[3 * i + 2];
    if (k1 > 0 && vg <= 0) continue;
    const double xd = d[3 * i], yd = d[3 * i + 1];
    double dx, dy;
    if (k1 > 0) {
      dx = xd - g.keypoints[3 * i];
      dy = yd - g.keypoints[3 * i + 1];
    } else {
      dx = std::max(0.0, x0 - xd) + std::max(0.0, xd - x1);
      dy = std::max(0.0, y0 - yd) + std::max(0.0, yd - y1);
    }
    const double var = std::pow(2 * skel.oks_sigmas[i], 2);
    const double e = (dx * dx + dy * dy) / var / (g.area + kEps) / 2;
    sum += std::exp(-e);
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

struct EvalImage {
  std::vector<double> dt_scores;
  std::vector<std::vector<bool>> dt_matched;  // [t][d]
  std::vector<std::vector<bool>> dt_ignore;   // [t][d]
  std::vector<bool> gt_ignore;
};

struct PreparedDt {
  const ResultAnnotation* r;
  BBox box;
};

}  // namespace

ApSummary AveragePrecision(const Dataset& gt,
                           const std::vector<ResultAnnotation>& results,
                           EvalTask task, const EvalParams& params,
                           const std::vector<bool>& ignore) {
  if (!ignore.empty() && ignore.size() != gt.annotations.size()) {
    throw std::invalid_argument("ignore flags must cover every annotation");
  }
  const SkeletonConfig* skel = nullptr;
  if (task == EvalTask::kKeypoints) {
    skel = &FindSkeleton(params.skeleton);
    const size_t want = 3 * skel->oks_sigmas.size();
    for (const GtAnnotation& g : gt.annotations) {
      if (!g.keypoints.empty() && g.keypoints.size() != want) {
        throw std::invalid_argument(
            "skeleton mismatch: GT annotation " + std::to_string(g.id) +
            " has " + std::to_string(g.keypoints.size() / 3) +
            " keypoints, skeleton '" + params.skeleton + "' has " +
            std::to_string(want / 3));
      }
    }
    for (const ResultAnnotation& r : results) {
      if (r.keypoints.size() != want) {
        throw std::invalid_argument("skeleton mismatch: a result has " +
                                    std::to_string(r.keypoints.size() / 3) +
                                    " keypoints, skeleton '" +
                                    params.skeleton + "' has " +
                                    std::to_string(want / 3));
      }
    }
  }

  std::set<int64_t> cat_set;
  for (const Category& c : gt.categories) cat_set.insert(c.id);
  if (cat_set.empty()) {
    for (const GtAnnotation& g : gt.annotations) cat_set.insert(g.category_id);
  }
  const std::vector<int64_t> cats(cat_set.begin(), cat_set.end());

  // Group by (category, image).
  std::map<std::pair<int64_t, int64_t>, std::vector<size_t>> gts;
  std::map<std::pair<int64_t, int64_t>, std::vector<PreparedDt>> dts;
  for (size_t i = 0; i < gt.annotations.size(); ++i) {
    const GtAnnotation& g = gt.annotations[i];
    gts[{g.category_id, g.image_id}].push_back(i);
  }
  ApSummary summary;
  for (const ResultAnnotation& r : results) {
    if (!cat_set.count(r.category_id)) continue;
    PreparedDt d{&r, {}};
    if (task == EvalTask::kBbox) {
      if (r.bbox) {
        d.box = *r.bbox;
      } else if (r.segmentation) {
        d.box = DecodeRle(*r.segmentation).BoundingBox().value_or(BBox{});
      } else {
        throw std::invalid_argument("a result has no bbox for bbox evaluation");
      }
    } else if (task == EvalTask::kSegm && !r.segmentation) {
      throw std::invalid_argument(
          "a result has no segmentation for segm evaluation");
    }
    dts[{r.category_id, r.image_id}].push_back(d);
    ++summary.num_dt;
  }

  const size_t T = params.iou_thresholds.size();
  const size_t R = params.recall_thresholds.size();
  const size_t K = cats.size();
  // precision[t][r][k], recall[t][k]
  std::vector<double> precision(T * R * K, -1.0);
  std::vector<double> recall(T * K, -1.0);

  for (size_t kc = 0; kc < K; ++kc) {
    const int64_t cat = cats[kc];
    std::vector<EvalImage> evals;
    for (const ImageInfo& im : gt.images) {
      const auto gi = gts.find({cat, im.id});
      const auto di = dts.find({cat, im.id});
      std::vector<size_t> g_idx =
          gi == gts.end() ? std::vector<size_t>{} : gi->second;
      std::vector<PreparedDt> dt =
          di == dts.end() ? std::vector<PreparedDt>{} : di->second;
      if (g_idx.empty() && dt.empty()) continue;

      auto is_ignored = [&](size_t idx) {
        const GtAnnotation& g = gt.annotations[idx];
        return g.iscrowd || (!ignore.empty() && ignore[idx]) ||
               (task == EvalTask::kKeypoints && g.num_keypoints == 0);
      };
      // Non-ignored GT first, stable.
      std::stable_partition(g_idx.begin(), g_idx.end(),
                            [&](size_t idx) { return !is_ignored(idx); });
      std::stable_sort(dt.begin(), dt.end(),
                       [](const PreparedDt& a, const PreparedDt& b) {
                         return a.r->score > b.r->score;
                       });
      if (dt.size() > static_cast<size_t>(params.max_dets)) {
        dt.resize(params.max_dets);
      }
      const size_t G = g_idx.size();
      const size_t D = dt.size();
      std::vector<std::vector<double>> ious(D, std::vector<double>(G, 0.0));
      for (size_t d = 0; d < D; ++d) {
        for (size_t g = 0; g < G; ++g) {
          const GtAnnotation& ga = gt.annotations[g_idx[g]];
          switch (task) {
            case EvalTask::kBbox:
              ious[d][g] = CrowdAwareBoxIou(dt[d].box, ga.bbox, ga.iscrowd);
              break;
            case EvalTask::kSegm:
              if (!ga.segmentation) {
                throw std::invalid_argument(
                    "GT annotation " + std::to_string(ga.id) +
                    " has no segmentation");
              }
              ious[d][g] = CrowdAwareMaskIou(*dt[d].r->segmentation,
                                             *ga.segmentation, ga.iscrowd);
              break;
            case EvalTask::kKeypoints:
              ious[d][g] = ga.keypoints.empty()
                               ? 0.0
                               : EvalOks(ga, dt[d].r->keypoints, *skel);
              break;
          }
        }
      }

      EvalImage e;
      e.gt_ignore.resize(G);
      std::vector<bool> crowd(G);
      for (size_t g = 0; g < G; ++g) {
        e.gt_ignore[g] = is_ignored(g_idx[g]);
        crowd[g] = gt.annotations[g_idx[g]].iscrowd;
      }
      e.dt_matched.assign(T, std::vector<bool>(D, false));
      e.dt_ignore.assign(T, std::vector<bool>(D, false));
      for (size_t t = 0; t < T; ++t) {
        std::vector<bool> gt_taken(G, false);
        for (size_t d = 0; d < D; ++d) {
          double best = std::min(params.iou_thresholds[t], 1 - 1e-10);
          int m = -1;
          for (size_t g = 0; g < G; ++g) {
            if (gt_taken[g] && !crowd[g]) continue;
            if (m > -1 && !e.gt_ignore[m] && e.gt_ignore[g]) break;
            if (ious[d][g] < best) continue;
            best = ious[d][g];
            m = static_cast<int>(g);
          }
          if (m == -1) continue;
          e.dt_ignore[t][d] = e.gt_ignore[m];
          e.dt_matched[t][d] = true;
          gt_taken[m] = true;
        }
      }
      for (const PreparedDt& d : dt) e.dt_scores.push_back(d.r->score);
      evals.push_back(std::move(e));
    }

    // Accumulate over images.
    std::vector<double> scores;
    std::vector<std::vector<bool>> matched(T), dt_ig(T);
    int64_t npig = 0;
    for (const EvalImage& e : evals) {
      scores.insert(scores.end(), e.dt_scores.begin(), e.dt_scores.end());
      for (size_t t = 0; t < T; ++t) {
        matched[t].insert(matched[t].end(), e.dt_matched[t].begin(),
                          e.dt_matched[t].end());
        dt_ig[t].insert(dt_ig[t].end(), e.dt_ignore[t].begin(),
                        e.dt_ignore[t].end());
      }
      for (bool ig : e.gt_ignore) npig += !ig;
    }
    summary.num_gt += npig;
    if (npig == 0) continue;
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    const size_t nd = order.size();
    for (size_t t = 0; t < T; ++t) {
      std::vector<double> rc(nd), pr(nd);
      double tp = 0, fp = 0;
      for (size_t i = 0; i < nd; ++i) {
        const size_t s = order[i];
        if (!dt_ig[t][s]) {
          if (matched[t][s]) {
            tp += 1;
          } else {
            fp += 1;
          }
        }
        rc[i] = tp / static_cast<double>(npig);
        pr[i] = tp / (fp + tp + kEps);
      }
      recall[t * K + kc] = nd ? rc.back() : 0.0;
      for (size_t i = nd; i-- > 1;) {
        if (pr[i] > pr[i - 1]) pr[i - 1] = pr[i];
      }
      for (size_t r = 0; r < R; ++r) {
        const size_t pi = static_cast<size_t>(
            std::lower_bound(rc.begin(), rc.end(),
                             params.recall_thresholds[r]) -
            rc.begin());
        precision[(t * R + r) * K + kc] = pi < nd ? pr[pi] : 0.0;
      }
    }
  }

  auto mean_valid = [](const std::vector<double>& v) {
    double s = 0;
    int n = 0;
    for (double x : v) {
      if (x > -1) {
        s += x;
        ++n;
      }
    }
    return n ? s / n : -1.0;
  };
  auto threshold_index = [&](double thr) -> std::optional<size_t> {
    for (size_t t = 0; t < T; ++t) {
      if (std::abs(params.iou_thresholds[t] - thr) < 1e-9) return t;
    }
    return std::nullopt;
  };
  auto ap_at = [&](size_t t) {
    return mean_valid(std::vector<double>(precision.begin() + t * R * K,
                                          precision.begin() + (t + 1) * R * K));
  };
  summary.ap = mean_valid(precision);
  if (auto t = threshold_index(0.5)) {
    summary.ap50 = ap_at(*t);
    summary.recall50 = mean_valid(std::vector<double>(
        recall.begin() + *t * K, recall.begin() + (*t + 1) * K));
  }
  if (auto t = threshold_index(0.75)) summary.ap75 = ap_at(*t);
  summary.ar = mean_valid(recall);
  summary.precision.assign(T, std::vector<double>(R, -1.0));
  summary.recall.assign(T, -1.0);
  for (size_t t = 0; t < T; ++t) {
    for (size_t r = 0; r < R; ++r) {
      summary.precision[t][r] = mean_valid(std::vector<double>(
          precision.begin() + (t * R + r) * K,
          precision.begin() + (t * R + r + 1) * K));
    }
    summary.recall[t] = mean_valid(std::vector<double>(
        recall.begin() + t * K, recall.begin() + (t + 1) * K));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Stratification

std::vector<MaxIouBin> DefaultMaxIouBins() {
  return {{0.0, 0.2, false},
          {0.2, 0.4, false},
          {0.4, 0.6, false},
          {0.6, 0.8, false},
          {0.8, 1.0, true}};
}

void ValidateBins(const std::vector<MaxIouBin>& bins) {
  if (bins.empty()) throw std::invalid_argument("no bins");
  if (bins.front().lo != 0.0 || bins.back().hi != 1.0 || !bins.back().closed) {
    throw std::invalid_argument("bins must cover [0, 1]");
  }
  for (size_t i = 0; i < bins.size(); ++i) {
    if (!(bins[i].lo < bins[i].hi)) {
      throw std::invalid_argument("empty or inverted bin");
    }
    if (i + 1 < bins.size()) {
      if (bins[i].closed) throw std::invalid_argument("only the last bin is closed");
      if (bins[i].hi != bins[i + 1].lo) {
        throw std::invalid_argument("bins overlap or leave a gap");
      }
    }
  }
}

std::vector<std::optional<double>> GtMaxIou(const Dataset& gt) {
  std::map<int64_t, std::vector<size_t>> by_image;
  for (size_t i = 0; i < gt.annotations.size(); ++i) {
    if (!gt.annotations[i].iscrowd) {
      by_image[gt.annotations[i].image_id].push_back(i);
    }
  }
  std::vector<std::optional<double>> out(gt.annotations.size());
  for (const auto& [image, idx] : by_image) {
    for (size_t a : idx) {
      double best = 0.0;
      for (size_t b : idx) {
        if (a == b) continue;
        best = std::max(best, BoxIoU(gt.annotations[a].bbox,
                                     gt.annotations[b].bbox));
      }
      out[a] = best;
    }
  }
  return out;
}

StratifiedReport StratifiedBboxAp(const Dataset& gt,
                                  const std::vector<ResultAnnotation>& results,
                                  const std::vector<MaxIouBin>& bins,
                                  const EvalParams& params) {
  ValidateBins(bins);
  const std::vector<std::optional<double>> max_iou = GtMaxIou(gt);
  StratifiedReport report;
  report.bins = bins;
  for (const MaxIouBin& bin : bins) {
    std::vector<bool> ignore(gt.annotations.size(), true);
    int64_t population = 0;
    for (size_t i = 0; i < gt.annotations.size(); ++i) {
      if (max_iou[i] && bin.Contains(*max_iou[i])) {
        ignore[i] = false;
        ++population;
      }
    }
    report.populations.push_back(population);
    report.per_bin.push_back(
        AveragePrecision(gt, results, EvalTask::kBbox, params, ignore));
  }
  report.overall = AveragePrecision(gt, results, EvalTask::kBbox, params);
  return report;
}

// ---------------------------------------------------------------------------
// Reports

json SummaryToJson(const ApSummary& s, bool with_curves) {
  json j = {{"ap", s.ap},         {"ap50", s.ap50},
            {"ap75", s.ap75},     {"ar", s.ar},
            {"recall50", s.recall50}, {"num_gt", s.num_gt},
            {"num_dt", s.num_dt}};
  if (with_curves) {
    j["precision"] = s.precision;
    j["recall"] = s.recall;
  }
  return j;
}

namespace {

std::string BinLabel(const MaxIouBin& b) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f-%.1f", b.lo, b.hi);
  return buf;
}

std::string Percent(double v) {
  if (v < 0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

std::string WithDelta(double v, const double* base) {
  std::string s = Percent(v);
  if (base == nullptr || v < 0 || *base < 0) return s;
  char buf[32];
  std::snprintf(buf, sizeof(buf), " (%+.1f)", 100.0 * (v - *base));
  return s + buf;
}

}  // namespace

json StratifiedToJson(const StratifiedReport& r) {
  json bins = json::array();
  for (size_t i = 0; i < r.bins.size(); ++i) {
    json b = SummaryToJson(r.per_bin[i], false);
    b["range"] = {r.bins[i].lo, r.bins[i].hi};
    b["label"] = BinLabel(r.bins[i]);
    b["population"] = r.populations[i];
    bins.push_back(std::move(b));
  }
  return {{"bins", std::move(bins)}, {"map", SummaryToJson(r.overall, false)}};
}

std::string FormatStratifiedTable(const StratifiedReport& r,
                                  const StratifiedReport* baseline) {
  const int width = baseline ? 15 : 9;
  std::ostringstream out;
  auto cell = [&](const std::string& s) {
    out << std::string(std::max<int>(1, width - static_cast<int>(s.size())),
                       ' ')
        << s;
  };
  out << "bbox AP @ max_IoU\n";
  out << "            ";
  for (const MaxIouBin& b : r.bins) cell(BinLabel(b));
  cell("mAP");
  out << "\n";

  out << "GT          ";
  for (int64_t p : r.populations) cell(std::to_string(p));
  cell(std::to_string(r.overall.num_gt));
  out << "\n";

  out << "AP          ";
  for (size_t i = 0; i < r.per_bin.size(); ++i) {
    cell(WithDelta(r.per_bin[i].ap,
                   baseline ? &baseline->per_bin[i].ap : nullptr));
  }
  cell(WithDelta(r.overall.ap, baseline ? &baseline->overall.ap : nullptr));
  out << "\n";

  out << "Recall@0.5  ";
  for (size_t i = 0; i < r.per_bin.size(); ++i) {
    cell(WithDelta(r.per_bin[i].recall50,
                   baseline ? &baseline->per_bin[i].recall50 : nullptr));
  }
  cell(WithDelta(r.overall.recall50,
                 baseline ? &baseline->overall.recall50 : nullptr));
  out << "\n";
  return out.str();
}

}  // namespace bmp
