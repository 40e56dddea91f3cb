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

#ifndef BLOCKSPARSE_HARDWARE_H_
#define BLOCKSPARSE_HARDWARE_H_

#include <cstddef>
#include <string>

namespace blocksparse {

/// Logical cores available to this process (at least 1).
std::size_t hardware_cores();

/// "cores=N;L1d=48K;L2=2048K;L3=..." from the sysfs cache description of
/// cpu0. Levels the platform does not expose are omitted; with no cache
/// information at all the tag is "cores=N;unknown".
std::string hardware_tag();

}  // namespace blocksparse

#endif  // BLOCKSPARSE_HARDWARE_H_
