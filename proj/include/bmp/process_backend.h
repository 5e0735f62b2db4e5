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

#ifndef BMP_PROCESS_BACKEND_H_
#define BMP_PROCESS_BACKEND_H_

#include <sys/types.h>

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "bmp/backends.h"
#include "bmp/protocol.h"

namespace bmp {

// A child started through /bin/sh -c with its stdin/stdout piped to us.
// stderr is inherited. Destruction closes stdin and reaps the child,
// killing it if it does not exit within a grace period.
class Subprocess {
 public:
  explicit Subprocess(const std::string& command);
  ~Subprocess();
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  int stdin_fd() const { return to_child_; }
  int stdout_fd() const { return from_child_; }
  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

// One request in flight at a time; callers on several threads serialize.
class ProcessEndpoint {
 public:
  explicit ProcessEndpoint(
      const std::string& command,
      std::chrono::milliseconds timeout = std::chrono::seconds(120));
  ~ProcessEndpoint();

  // Sends `request` (its "id" is overwritten) and returns the reply.
  // Throws ProtocolError on transport problems or id mismatch, and
  // BackendError when the reply has ok == false.
  protocol::json Call(protocol::json request);

  HandshakeInfo Handshake();
  const std::string& command() const { return command_; }

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  int64_t next_id_ = 1;
  std::unique_ptr<Subprocess> process_;
};

class ProcessDetector : public Detector {
 public:
  explicit ProcessDetector(std::shared_ptr<ProcessEndpoint> endpoint)
      : endpoint_(std::move(endpoint)) {}
  HandshakeInfo Handshake() override { return endpoint_->Handshake(); }
  std::vector<Detection> Detect(const Image& composited) override;

 private:
  std::shared_ptr<ProcessEndpoint> endpoint_;
};

class ProcessPoseEstimator : public PoseEstimator {
 public:
  explicit ProcessPoseEstimator(std::shared_ptr<ProcessEndpoint> endpoint)
      : endpoint_(std::move(endpoint)) {}
  HandshakeInfo Handshake() override { return endpoint_->Handshake(); }
  Pose EstimatePose(const Image& crop, const CropTransform& transform,
                    const std::string& skeleton) override;

 private:
  std::shared_ptr<ProcessEndpoint> endpoint_;
};

class ProcessSegmenter : public Segmenter {
 public:
  explicit ProcessSegmenter(std::shared_ptr<ProcessEndpoint> endpoint)
      : endpoint_(std::move(endpoint)) {}
  HandshakeInfo Handshake() override { return endpoint_->Handshake(); }
  SegmentResult Segment(const Image& image, const PromptSet& prompts) override;

 private:
  std::shared_ptr<ProcessEndpoint> endpoint_;
};

// Identical command lines share one child process.
BackendSet MakeProcessBackends(
    const std::string& detector_cmd, const std::string& pose_cmd,
    const std::string& segmenter_cmd,
    std::chrono::milliseconds timeout = std::chrono::seconds(120));

}  // namespace bmp

#endif  // BMP_PROCESS_BACKEND_H_
