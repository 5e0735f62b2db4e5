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

// Backend wire protocol. Every message is one frame:
//
//   <decimal byte count>\n<UTF-8 JSON payload of exactly that many bytes>
//
// Requests carry {"id", "op", ...}; replies carry {"id", "ok", ...}. See
// docs/protocol.md for the field-by-field layout.

#ifndef BMP_PROTOCOL_H_
#define BMP_PROTOCOL_H_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "bmp/backends.h"
#include "json.hpp"

namespace bmp::protocol {

using nlohmann::json;

inline constexpr size_t kMaxFrameBytes = size_t{256} << 20;

// Throws ProtocolError on write failure.
void WriteFrame(int fd, std::string_view payload);
// nullopt on clean EOF before any byte of a frame. Throws ProtocolError on
// timeout, truncation or a malformed header. A negative timeout waits
// forever.
std::optional<std::string> ReadFrame(
    int fd, std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));

// Field codecs. Decoders throw ProtocolError with the offending field name.
json ImageToJson(const Image& image);
Image ImageFromJson(const json& j);
json MaskToJson(const BinaryMask& mask);
BinaryMask MaskFromJson(const json& j);
json BoxToJson(const BBox& box);
BBox BoxFromJson(const json& j);
json PointsToJson(const std::vector<Point>& points);
std::vector<Point> PointsFromJson(const json& j);

json MakeHandshakeRequest(int64_t id);
json MakeDetectRequest(int64_t id, const Image& image);
json MakePoseRequest(int64_t id, const Image& crop,
                     const CropTransform& transform,
                     const std::string& skeleton);
json MakeSegmentRequest(int64_t id, const Image& image,
                        const PromptSet& prompts);

HandshakeInfo ParseHandshakeReply(const json& reply);
std::vector<Detection> ParseDetectReply(const json& reply);
Pose ParsePoseReply(const json& reply, const std::string& skeleton);
SegmentResult ParseSegmentReply(const json& reply);

json MakeErrorReply(const json& id, std::string_view code,
                    std::string_view message);

// Server side: answers requests with whichever backends are present.
class BackendServer {
 public:
  BackendServer(HandshakeInfo info, Detector* detector, PoseEstimator* pose,
                Segmenter* segmenter)
      : info_(std::move(info)),
        detector_(detector),
        pose_(pose),
        segmenter_(segmenter) {}

  // Never throws; failures become error replies.
  json Handle(const json& request);
  json HandleRaw(std::string_view payload);

  // Request/reply loop until EOF or a "shutdown" op.
  void Serve(int in_fd, int out_fd);

 private:
  HandshakeInfo info_;
  Detector* detector_;
  PoseEstimator* pose_;
  Segmenter* segmenter_;
};

}  // namespace bmp::protocol

#endif  // BMP_PROTOCOL_H_
