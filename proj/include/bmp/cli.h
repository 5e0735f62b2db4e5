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

#ifndef BMP_CLI_H_
#define BMP_CLI_H_

#include <string>
#include <vector>

namespace bmp {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad flags, config or input files
inline constexpr int kExitBackend = 2;  // a backend failed to start or speak

// Entry point of the `bmp` tool: run, eval, synth and backend subcommands.
int RunCli(int argc, const char* const* argv);
int RunCli(const std::vector<std::string>& args);  // args[0] = program

}  // namespace bmp

#endif  // BMP_CLI_H_
