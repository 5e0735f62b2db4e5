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

// Model-facing interfaces. The engine only ever talks to these; concrete
// implementations are the in-process synthetic backend and the
// external-process client in process_backend.h.

#ifndef BMP_BACKENDS_H_
#define BMP_BACKENDS_H_

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmp/geometry.h"
#include "bmp/imaging.h"
#include "bmp/prompting.h"

namespace bmp {

inline constexpr int kProtocolVersion = 1;

// Transport-level failure: malformed frame, bad JSON, timeout, dead child.
// Fatal for a run.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The backend answered with a structured error for one request.
class BackendError : public std::runtime_error {
 public:
  BackendError(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct HandshakeInfo {
  int protocol_version = kProtocolVersion;
  std::string name;
  std::vector<std::string> skeletons;
  bool detector_masks = false;
};

struct Detection {
  BBox bbox;
  std::optional<BinaryMask> mask;
};

struct SegmentResult {
  BinaryMask mask;
  double score = 0.0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual HandshakeInfo Handshake() = 0;
  virtual std::vector<Detection> Detect(const Image& composited) = 0;
};

class PoseEstimator {
 public:
  virtual ~PoseEstimator() = default;
  virtual HandshakeInfo Handshake() = 0;
  // Keypoints come back in crop coordinates.
  virtual Pose EstimatePose(const Image& crop, const CropTransform& transform,
                            const std::string& skeleton) = 0;
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual HandshakeInfo Handshake() = 0;
  virtual SegmentResult Segment(const Image& image,
                                const PromptSet& prompts) = 0;
};

struct BackendSet {
  std::shared_ptr<Detector> detector;
  std::shared_ptr<PoseEstimator> pose;
  std::shared_ptr<Segmenter> segmenter;

  // Filled by Handshake().
  bool handshake_done = false;
  bool detector_masks = false;
  std::vector<std::string> pose_skeletons;

  // Exchanges handshakes with all three; throws ProtocolError on a missing
  // backend, a version mismatch or a pose backend lacking `skeleton`.
  void Handshake(const std::string& skeleton);
};

}  // namespace bmp

#endif  // BMP_BACKENDS_H_
