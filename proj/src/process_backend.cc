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

#include "bmp/process_backend.h"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <thread>

extern char** environ;

namespace bmp {

namespace {

void ClosePair(int fds[2]) {
  if (fds[0] >= 0) ::close(fds[0]);
  if (fds[1] >= 0) ::close(fds[1]);
}

}  // namespace

Subprocess::Subprocess(const std::string& command) {
  // A child that dies must surface as EPIPE, not kill us.
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2] = {-1, -1};
  int out_pipe[2] = {-1, -1};
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ClosePair(in_pipe);
    ClosePair(out_pipe);
    throw ProtocolError(std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr,
                               const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw ProtocolError("spawn '" + command + "': " + std::strerror(rc));
  }
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

Subprocess::~Subprocess() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ <= 0) return;
  int status = 0;
  for (int i = 0; i < 200; ++i) {
    if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, &status, 0);
}

ProcessEndpoint::ProcessEndpoint(const std::string& command,
                                 std::chrono::milliseconds timeout)
    : command_(command),
      timeout_(timeout),
      process_(std::make_unique<Subprocess>(command)) {}

ProcessEndpoint::~ProcessEndpoint() {
  try {
    Call({{"op", "shutdown"}});
  } catch (const std::exception&) {
    // Child already gone; the Subprocess destructor reaps it.
  }
}

protocol::json ProcessEndpoint::Call(protocol::json request) {
  std::lock_guard<std::mutex> lock(mu_);
  const int64_t id = next_id_++;
  request["id"] = id;
  protocol::WriteFrame(process_->stdin_fd(), request.dump());
  std::optional<std::string> frame =
      protocol::ReadFrame(process_->stdout_fd(), timeout_);
  if (!frame) {
    throw ProtocolError("backend '" + command_ + "' closed its output");
  }
  protocol::json reply =
      protocol::json::parse(*frame, nullptr, /*allow_exceptions=*/false);
  if (!reply.is_object()) throw ProtocolError("reply is not a JSON object");
  if (!reply.contains("id") || reply["id"] != id) {
    throw ProtocolError("reply id does not match request id " +
                        std::to_string(id));
  }
  if (!reply.contains("ok") || !reply["ok"].is_boolean()) {
    throw ProtocolError("reply lacks boolean 'ok'");
  }
  if (!reply["ok"].get<bool>()) {
    std::string code = "error";
    std::string message;
    if (reply.contains("error") && reply["error"].is_object()) {
      code = reply["error"].value("code", code);
      message = reply["error"].value("message", "");
    }
    throw BackendError(code, message);
  }
  return reply;
}

HandshakeInfo ProcessEndpoint::Handshake() {
  try {
    return protocol::ParseHandshakeReply(
        Call(protocol::MakeHandshakeRequest(0)));
  } catch (const BackendError& e) {
    throw ProtocolError(std::string("handshake rejected: ") + e.what());
  }
}

std::vector<Detection> ProcessDetector::Detect(const Image& composited) {
  return protocol::ParseDetectReply(
      endpoint_->Call(protocol::MakeDetectRequest(0, composited)));
}

Pose ProcessPoseEstimator::EstimatePose(const Image& crop,
                                        const CropTransform& transform,
                                        const std::string& skeleton) {
  return protocol::ParsePoseReply(
      endpoint_->Call(protocol::MakePoseRequest(0, crop, transform, skeleton)),
      skeleton);
}

SegmentResult ProcessSegmenter::Segment(const Image& image,
                                        const PromptSet& prompts) {
  return protocol::ParseSegmentReply(
      endpoint_->Call(protocol::MakeSegmentRequest(0, image, prompts)));
}

BackendSet MakeProcessBackends(const std::string& detector_cmd,
                               const std::string& pose_cmd,
                               const std::string& segmenter_cmd,
                               std::chrono::milliseconds timeout) {
  std::map<std::string, std::shared_ptr<ProcessEndpoint>> endpoints;
  auto endpoint = [&](const std::string& cmd) {
    auto& slot = endpoints[cmd];
    if (!slot) slot = std::make_shared<ProcessEndpoint>(cmd, timeout);
    return slot;
  };
  BackendSet set;
  set.detector = std::make_shared<ProcessDetector>(endpoint(detector_cmd));
  set.pose = std::make_shared<ProcessPoseEstimator>(endpoint(pose_cmd));
  set.segmenter = std::make_shared<ProcessSegmenter>(endpoint(segmenter_cmd));
  return set;
}

}  // namespace bmp
