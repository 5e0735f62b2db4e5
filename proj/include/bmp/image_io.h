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

#ifndef BMP_IMAGE_IO_H_
#define BMP_IMAGE_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bmp/imaging.h"

namespace bmp {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<uint8_t> EncodePng(const Image& image);
Image DecodePng(std::span<const uint8_t> bytes);
std::vector<uint8_t> EncodeJpeg(const Image& image, int quality = 95);
Image DecodeJpeg(std::span<const uint8_t> bytes);

// Format picked from the file signature (PNG or JPEG).
Image ReadImage(const std::filesystem::path& path);
// Format picked from the extension (.png, .jpg, .jpeg).
void WriteImage(const std::filesystem::path& path, const Image& image);

std::string Base64Encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> Base64Decode(std::string_view text);

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void WriteFileAtomically(const std::filesystem::path& path,
                         std::string_view contents);

}  // namespace bmp

#endif  // BMP_IMAGE_IO_H_
