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

#include "bmp/protocol.h"

#include <poll.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "bmp/image_io.h"

namespace bmp::protocol {

// ---------------------------------------------------------------------------
// Framing

namespace {

void WriteAll(int fd, const char* data, size_t size) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
    }
    data += n;
    size -= static_cast<size_t>(n);
  }
}

class FrameReader {
 public:
  FrameReader(int fd, std::chrono::milliseconds timeout)
      : fd_(fd),
        timeout_(timeout),
        deadline_(std::chrono::steady_clock::now() + timeout) {}

  // Returns bytes read (0 on EOF).
  size_t Read(char* buf, size_t size) {
    WaitReadable();
    for (;;) {
      const ssize_t n = ::read(fd_, buf, size);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read failed: ") +
                            std::strerror(errno));
      }
      return static_cast<size_t>(n);
    }
  }

 private:
  void WaitReadable() {
    if (timeout_.count() < 0) return;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline_ - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ProtocolError("timed out waiting for reply");
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r > 0) return;
      if (r < 0 && errno != EINTR) {
        throw ProtocolError(std::string("poll failed: ") +
                            std::strerror(errno));
      }
    }
  }

  int fd_;
  std::chrono::milliseconds timeout_;
  std::chrono::steady_clock::time_point deadline_;
};

}  // namespace

void WriteFrame(int fd, std::string_view payload) {
  const std::string header = std::to_string(payload.size()) + "\n";
  WriteAll(fd, header.data(), header.size());
  WriteAll(fd, payload.data(), payload.size());
}

std::optional<std::string> ReadFrame(int fd,
                                     std::chrono::milliseconds timeout) {
  FrameReader reader(fd, timeout);
  std::string header;
  for (;;) {
    char c;
    if (reader.Read(&c, 1) == 0) {
      if (header.empty()) return std::nullopt;
      throw ProtocolError("EOF inside frame header");
    }
    if (c == '\n') break;
    if (c < '0' || c > '9' || header.size() >= 12) {
      throw ProtocolError("malformed frame header");
    }
    header.push_back(c);
  }
  if (header.empty()) throw ProtocolError("empty frame header");
  const size_t size = std::stoull(header);
  if (size > kMaxFrameBytes) throw ProtocolError("frame too large");
  std::string payload(size, '\0');
  size_t got = 0;
  while (got < size) {
    const size_t n = reader.Read(payload.data() + got, size - got);
    if (n == 0) throw ProtocolError("EOF inside frame payload");
    got += n;
  }
  return payload;
}

// ---------------------------------------------------------------------------
// Field codecs

namespace {

const json& Field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw ProtocolError(std::string("missing field '") + name + "'");
  }
  return j.at(name);
}

double Number(const json& j, const char* what) {
  if (!j.is_number()) {
    throw ProtocolError(std::string("field '") + what + "' must be a number");
  }
  return j.get<double>();
}

}  // namespace

json ImageToJson(const Image& image) {
  return {{"encoding", "png"}, {"data", Base64Encode(EncodePng(image))}};
}

Image ImageFromJson(const json& j) {
  const json& enc = Field(j, "encoding");
  const json& data = Field(j, "data");
  if (!data.is_string()) throw ProtocolError("image.data must be a string");
  try {
    const std::vector<uint8_t> bytes =
        Base64Decode(data.get_ref<const std::string&>());
    if (enc == "png") return DecodePng(bytes);
    if (enc == "jpeg") return DecodeJpeg(bytes);
  } catch (const ImageIoError& e) {
    throw ProtocolError(std::string("image: ") + e.what());
  }
  throw ProtocolError("image.encoding must be 'png' or 'jpeg'");
}

json MaskToJson(const BinaryMask& mask) {
  const Rle rle = EncodeRle(mask);
  return {{"size", {rle.height, rle.width}}, {"counts", RleToString(rle)}};
}

BinaryMask MaskFromJson(const json& j) {
  const json& size = Field(j, "size");
  const json& counts = Field(j, "counts");
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() ||
      !size[1].is_number_integer()) {
    throw ProtocolError("mask.size must be [height, width]");
  }
  const int h = size[0].get<int>();
  const int w = size[1].get<int>();
  try {
    Rle rle;
    if (counts.is_string()) {
      rle = RleFromString(counts.get_ref<const std::string&>(), h, w);
    } else if (counts.is_array()) {
      rle.height = h;
      rle.width = w;
      for (const json& c : counts) {
        if (!c.is_number_unsigned() && !c.is_number_integer()) {
          throw ProtocolError("mask.counts entries must be integers");
        }
        rle.counts.push_back(c.get<uint32_t>());
      }
    } else {
      throw ProtocolError("mask.counts must be a string or an array");
    }
    return DecodeRle(rle);
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(std::string("mask: ") + e.what());
  }
}

json BoxToJson(const BBox& box) { return {box.x, box.y, box.w, box.h}; }

BBox BoxFromJson(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw ProtocolError("bbox must be [x, y, w, h]");
  }
  return {Number(j[0], "bbox"), Number(j[1], "bbox"), Number(j[2], "bbox"),
          Number(j[3], "bbox"), 1.0};
}

json PointsToJson(const std::vector<Point>& points) {
  json out = json::array();
  for (const Point& p : points) out.push_back({p.x, p.y});
  return out;
}

std::vector<Point> PointsFromJson(const json& j) {
  if (!j.is_array()) throw ProtocolError("points must be an array");
  std::vector<Point> out;
  for (const json& p : j) {
    if (!p.is_array() || p.size() != 2) {
      throw ProtocolError("point must be [x, y]");
    }
    out.push_back({Number(p[0], "point"), Number(p[1], "point")});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Requests and replies

json MakeHandshakeRequest(int64_t id) {
  return {{"id", id}, {"op", "handshake"}, {"protocol_version", kProtocolVersion}};
}

json MakeDetectRequest(int64_t id, const Image& image) {
  return {{"id", id}, {"op", "detect"}, {"image", ImageToJson(image)}};
}

json MakePoseRequest(int64_t id, const Image& crop,
                     const CropTransform& transform,
                     const std::string& skeleton) {
  return {{"id", id},
          {"op", "pose"},
          {"image", ImageToJson(crop)},
          {"transform",
           {{"offset", {transform.offset_x, transform.offset_y}},
            {"scale", transform.scale}}},
          {"skeleton", skeleton}};
}

json MakeSegmentRequest(int64_t id, const Image& image,
                        const PromptSet& prompts) {
  return {{"id", id},
          {"op", "segment"},
          {"image", ImageToJson(image)},
          {"positives", PointsToJson(prompts.positives)},
          {"negatives", PointsToJson(prompts.negatives)},
          {"bbox", prompts.bbox ? BoxToJson(*prompts.bbox) : json(nullptr)}};
}

HandshakeInfo ParseHandshakeReply(const json& reply) {
  HandshakeInfo info;
  const json& version = Field(reply, "protocol_version");
  if (!version.is_number_integer()) {
    throw ProtocolError("protocol_version must be an integer");
  }
  info.protocol_version = version.get<int>();
  if (reply.contains("name") && reply["name"].is_string()) {
    info.name = reply["name"].get<std::string>();
  }
  if (reply.contains("skeletons")) {
    const json& s = reply["skeletons"];
    if (!s.is_array()) throw ProtocolError("skeletons must be an array");
    for (const json& name : s) {
      if (!name.is_string()) throw ProtocolError("skeleton names are strings");
      info.skeletons.push_back(name.get<std::string>());
    }
  }
  if (reply.contains("detector_masks")) {
    if (!reply["detector_masks"].is_boolean()) {
      throw ProtocolError("detector_masks must be a boolean");
    }
    info.detector_masks = reply["detector_masks"].get<bool>();
  }
  return info;
}

std::vector<Detection> ParseDetectReply(const json& reply) {
  const json& dets = Field(reply, "detections");
  if (!dets.is_array()) throw ProtocolError("detections must be an array");
  std::vector<Detection> out;
  for (const json& d : dets) {
    Detection det;
    det.bbox = BoxFromJson(Field(d, "bbox"));
    det.bbox.score = Number(Field(d, "score"), "score");
    if (d.contains("mask") && !d["mask"].is_null()) {
      det.mask = MaskFromJson(d["mask"]);
    }
    out.push_back(std::move(det));
  }
  return out;
}

Pose ParsePoseReply(const json& reply, const std::string& skeleton) {
  const json& kps = Field(reply, "keypoints");
  if (!kps.is_array()) throw ProtocolError("keypoints must be an array");
  Pose pose;
  pose.skeleton_id = skeleton;
  for (const json& k : kps) {
    if (!k.is_array() || k.size() != 3) {
      throw ProtocolError("keypoint must be [x, y, confidence]");
    }
    pose.keypoints.push_back({Number(k[0], "keypoint"),
                              Number(k[1], "keypoint"),
                              Number(k[2], "keypoint")});
  }
  return pose;
}

SegmentResult ParseSegmentReply(const json& reply) {
  SegmentResult out;
  out.mask = MaskFromJson(Field(reply, "mask"));
  out.score = Number(Field(reply, "score"), "score");
  return out;
}

json MakeErrorReply(const json& id, std::string_view code,
                    std::string_view message) {
  return {{"id", id},
          {"ok", false},
          {"error", {{"code", code}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// Server

json BackendServer::Handle(const json& request) {
  const json id = request.is_object() && request.contains("id")
                      ? request["id"]
                      : json(nullptr);
  if (!id.is_number_integer()) {
    return MakeErrorReply(id, "bad_request", "request needs an integer id");
  }
  if (!request.contains("op") || !request["op"].is_string()) {
    return MakeErrorReply(id, "bad_request", "request needs a string op");
  }
  const std::string op = request["op"].get<std::string>();
  try {
    json reply = {{"id", id}, {"ok", true}};
    if (op == "handshake") {
      if (request.contains("protocol_version") &&
          request["protocol_version"] != kProtocolVersion) {
        return MakeErrorReply(id, "version_mismatch",
                              "server speaks protocol version " +
                                  std::to_string(kProtocolVersion));
      }
      std::vector<std::string> ops = {"handshake", "shutdown"};
      if (detector_) ops.push_back("detect");
      if (pose_) ops.push_back("pose");
      if (segmenter_) ops.push_back("segment");
      reply["protocol_version"] = kProtocolVersion;
      reply["name"] = info_.name;
      reply["skeletons"] = info_.skeletons;
      reply["detector_masks"] = info_.detector_masks;
      reply["ops"] = ops;
    } else if (op == "shutdown") {
      // Acknowledged; Serve() stops after sending this reply.
    } else if (op == "detect") {
      if (!detector_) return MakeErrorReply(id, "unsupported_op", op);
      json dets = json::array();
      for (const Detection& d :
           detector_->Detect(ImageFromJson(Field(request, "image")))) {
        json jd = {{"bbox", BoxToJson(d.bbox)}, {"score", d.bbox.score}};
        if (d.mask) jd["mask"] = MaskToJson(*d.mask);
        dets.push_back(std::move(jd));
      }
      reply["detections"] = std::move(dets);
    } else if (op == "pose") {
      if (!pose_) return MakeErrorReply(id, "unsupported_op", op);
      const json& t = Field(request, "transform");
      const json& offset = Field(t, "offset");
      if (!offset.is_array() || offset.size() != 2) {
        throw ProtocolError("transform.offset must be [x, y]");
      }
      CropTransform transform{Number(offset[0], "offset"),
                              Number(offset[1], "offset"),
                              Number(Field(t, "scale"), "scale")};
      const json& skel = Field(request, "skeleton");
      if (!skel.is_string()) throw ProtocolError("skeleton must be a string");
      const Pose pose =
          pose_->EstimatePose(ImageFromJson(Field(request, "image")),
                              transform, skel.get<std::string>());
      json kps = json::array();
      for (const Keypoint& k : pose.keypoints) {
        kps.push_back({k.x, k.y, k.confidence});
      }
      reply["skeleton"] = skel;
      reply["keypoints"] = std::move(kps);
    } else if (op == "segment") {
      if (!segmenter_) return MakeErrorReply(id, "unsupported_op", op);
      PromptSet prompts;
      prompts.positives = PointsFromJson(Field(request, "positives"));
      if (request.contains("negatives")) {
        prompts.negatives = PointsFromJson(request["negatives"]);
      }
      if (request.contains("bbox") && !request["bbox"].is_null()) {
        prompts.bbox = BoxFromJson(request["bbox"]);
      }
      const SegmentResult r =
          segmenter_->Segment(ImageFromJson(Field(request, "image")), prompts);
      reply["mask"] = MaskToJson(r.mask);
      reply["score"] = r.score;
    } else {
      return MakeErrorReply(id, "unknown_op", "unknown op '" + op + "'");
    }
    return reply;
  } catch (const ProtocolError& e) {
    return MakeErrorReply(id, "bad_request", e.what());
  } catch (const BackendError& e) {
    return MakeErrorReply(id, e.code(), e.what());
  } catch (const std::exception& e) {
    return MakeErrorReply(id, "inference_failed", e.what());
  }
}

json BackendServer::HandleRaw(std::string_view payload) {
  json request = json::parse(payload, nullptr, /*allow_exceptions=*/false);
  if (request.is_discarded()) {
    return MakeErrorReply(nullptr, "bad_request", "payload is not JSON");
  }
  return Handle(request);
}

void BackendServer::Serve(int in_fd, int out_fd) {
  for (;;) {
    std::optional<std::string> frame = ReadFrame(in_fd);
    if (!frame) return;
    const json reply = HandleRaw(*frame);
    WriteFrame(out_fd,
               reply.dump(-1, ' ', false, json::error_handler_t::replace));
    if (reply.value("ok", false)) {
      json request = json::parse(*frame, nullptr, false);
      if (request.is_object() && request.value("op", "") == "shutdown") return;
    }
  }
}

}  // namespace bmp::protocol
