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

#include "bmp/backends.h"

#include <algorithm>

namespace bmp {

namespace {

void CheckVersion(const HandshakeInfo& info, const char* role) {
  if (info.protocol_version != kProtocolVersion) {
    throw ProtocolError(std::string(role) + " speaks protocol version " +
                        std::to_string(info.protocol_version) + ", expected " +
                        std::to_string(kProtocolVersion));
  }
}

}  // namespace

void BackendSet::Handshake(const std::string& skeleton) {
  if (!detector || !pose || !segmenter) {
    throw ProtocolError("backend set is missing a detector, pose estimator "
                        "or segmenter");
  }
  const HandshakeInfo det = detector->Handshake();
  CheckVersion(det, "detector");
  const HandshakeInfo pos = pose->Handshake();
  CheckVersion(pos, "pose estimator");
  CheckVersion(segmenter->Handshake(), "segmenter");
  if (!pos.skeletons.empty() &&
      std::find(pos.skeletons.begin(), pos.skeletons.end(), skeleton) ==
          pos.skeletons.end()) {
    throw ProtocolError("pose estimator does not support skeleton '" +
                        skeleton + "'");
  }
  detector_masks = det.detector_masks;
  pose_skeletons = pos.skeletons;
  handshake_done = true;
}

}  // namespace bmp
