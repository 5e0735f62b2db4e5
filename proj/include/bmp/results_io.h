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

// JSON forms of run configuration, loop results and provenance.

#ifndef BMP_RESULTS_IO_H_
#define BMP_RESULTS_IO_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "bmp/loop_engine.h"
#include "json.hpp"

namespace bmp {

// "never", "always" or "by-max-iou:<theta>" (plain "by-max-iou" keeps the
// policy's threshold). Throws std::invalid_argument.
void ApplyBboxPromptSpec(std::string_view spec, PromptPolicy& policy);
std::string BboxPromptSpec(const PromptPolicy& policy);

nlohmann::json PromptPolicyToJson(const PromptPolicy& policy);
// Fields absent from `j` keep their value in `base`; unknown fields throw.
PromptPolicy PromptPolicyFromJson(const nlohmann::json& j,
                                  PromptPolicy base);

nlohmann::json BmpConfigToJson(const BmpConfig& config);
BmpConfig BmpConfigFromJson(const nlohmann::json& j, BmpConfig base = {});

// COCO result entries (bbox, compressed RLE segmentation, keypoint
// triplets, score = detector score) for one image. Instances without a
// pose get all-zero triplets for `skeleton`.
nlohmann::json LoopResultToCoco(const LoopResult& result, int64_t image_id,
                                const std::string& skeleton = "coco17",
                                int64_t category_id = 1);

// Per-image provenance: iteration statistics and every instance's event
// log, suppressed ones included. Contains no timestamps, so identical runs
// serialise identically.
nlohmann::json LoopResultProvenance(const LoopResult& result,
                                    int64_t image_id,
                                    const std::string& image_name);

}  // namespace bmp

#endif  // BMP_RESULTS_IO_H_
