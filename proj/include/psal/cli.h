// Copyright 2026 The PSAL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSAL_CLI_H_
#define PSAL_CLI_H_

#include <iosfwd>

namespace psal {

// Process exit codes of the psal tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitCheckFailed = 3;

// Entry point of the psal tool, split from main() so tests can drive it
// in-process. Subcommands: reconstruct, bench, gradcheck, train-demo.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace psal

#endif  // PSAL_CLI_H_
