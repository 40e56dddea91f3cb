/* Copyright 2026 The blocksparse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef BLOCKSPARSE_CLI_H_
#define BLOCKSPARSE_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace blocksparse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification failed, I/O or runtime error
inline constexpr int kExitUsage = 2;

/// Entry point of the bsrbench tool. args[0] is the program name.
/// Subcommands: bench, prune, verify, tune, stats.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(const std::vector<std::string>& args);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_CLI_H_
