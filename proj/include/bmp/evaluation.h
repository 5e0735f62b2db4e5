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

// COCO-protocol average precision for boxes, masks and keypoints, and box
// AP stratified by how much each person overlaps its neighbours.

#ifndef BMP_EVALUATION_H_
#define BMP_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmp/geometry.h"
#include "json.hpp"

namespace bmp {

// Raised for malformed annotation or result files. The message names the
// offending JSON path, e.g. "gt.json: annotations[3].bbox: ...".
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageInfo {
  int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
};

struct Category {
  int64_t id = 0;
  std::string name;
  std::vector<std::string> keypoints;
};

struct GtAnnotation {
  int64_t id = 0;
  int64_t image_id = 0;
  int64_t category_id = 0;
  BBox bbox;
  double area = 0.0;
  bool iscrowd = false;
  std::optional<Rle> segmentation;
  std::vector<double> keypoints;  // x, y, v triplets
  int num_keypoints = 0;
};

struct Dataset {
  std::vector<ImageInfo> images;
  std::vector<GtAnnotation> annotations;
  std::vector<Category> categories;

  const ImageInfo* FindImage(int64_t id) const;
};

struct ResultAnnotation {
  int64_t image_id = 0;
  int64_t category_id = 0;
  double score = 0.0;
  std::optional<BBox> bbox;
  std::optional<Rle> segmentation;
  std::vector<double> keypoints;  // x, y, score triplets
};

Dataset AnnotationsFromJson(const nlohmann::json& j,
                            const std::string& source = "annotations");
Dataset LoadAnnotations(const std::filesystem::path& path);

// Results must reference images of `gt`.
std::vector<ResultAnnotation> ResultsFromJson(const nlohmann::json& j,
                                              const Dataset& gt,
                                              const std::string& source =
                                                  "results");
std::vector<ResultAnnotation> LoadResults(const std::filesystem::path& path,
                                          const Dataset& gt);

// Polygon (x0, y0, x1, y1, ...) rasterised with the COCO mask API rule.
Rle RleFromPolygon(std::span<const double> xy, int height, int width);
int64_t RleArea(const Rle& rle);
int64_t RleIntersectionArea(const Rle& a, const Rle& b);

enum class EvalTask { kBbox, kSegm, kKeypoints };
std::string_view ToString(EvalTask task);
EvalTask ParseEvalTask(std::string_view text);

struct EvalParams {
  std::vector<double> iou_thresholds;     // 0.50:0.05:0.95
  std::vector<double> recall_thresholds;  // 0:0.01:1
  int max_dets = 100;
  std::string skeleton = "coco17";

  static EvalParams Default();
};

struct ApSummary {
  // Mean over thresholds and categories; -1 when no GT can be scored.
  double ap = -1.0;
  double ap50 = -1.0;
  double ap75 = -1.0;
  double ar = -1.0;
  double recall50 = -1.0;
  int64_t num_gt = 0;  // non-ignored GT instances
  int64_t num_dt = 0;
  // [threshold][recall step], category-averaged; -1 entries = undefined.
  std::vector<std::vector<double>> precision;
  std::vector<double> recall;  // per threshold
};

// `ignore`, if non-empty, marks extra GT (by index into gt.annotations) as
// ignore regions: matches to them are neither true nor false positives.
ApSummary AveragePrecision(const Dataset& gt,
                           const std::vector<ResultAnnotation>& results,
                           EvalTask task, const EvalParams& params,
                           const std::vector<bool>& ignore = {});

struct MaxIouBin {
  double lo = 0.0;
  double hi = 0.0;
  bool closed = false;  // include hi
  bool Contains(double v) const {
    return v >= lo && (closed ? v <= hi : v < hi);
  }
};

std::vector<MaxIouBin> DefaultMaxIouBins();
// Throws std::invalid_argument unless the bins tile [0, 1] in order.
void ValidateBins(const std::vector<MaxIouBin>& bins);

// Highest box IoU of each GT annotation with another non-crowd GT of the
// same image; crowd annotations get nullopt.
std::vector<std::optional<double>> GtMaxIou(const Dataset& gt);

struct StratifiedReport {
  std::vector<MaxIouBin> bins;
  std::vector<int64_t> populations;
  std::vector<ApSummary> per_bin;
  ApSummary overall;
};

StratifiedReport StratifiedBboxAp(const Dataset& gt,
                                  const std::vector<ResultAnnotation>& results,
                                  const std::vector<MaxIouBin>& bins,
                                  const EvalParams& params);

nlohmann::json SummaryToJson(const ApSummary& s, bool with_curves);
nlohmann::json StratifiedToJson(const StratifiedReport& r);
// Fixed-width table: bins across, mAP last, percentages with one decimal.
// With a baseline, each cell shows "value (+delta)".
std::string FormatStratifiedTable(const StratifiedReport& r,
                                  const StratifiedReport* baseline = nullptr);

}  // namespace bmp

#endif  // BMP_EVALUATION_H_
