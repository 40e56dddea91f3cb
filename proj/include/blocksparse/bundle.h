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

#ifndef BLOCKSPARSE_BUNDLE_H_
#define BLOCKSPARSE_BUNDLE_H_

#include <filesystem>

#include "blocksparse/model.h"

namespace blocksparse {

// Bundle layout, one directory:
//   manifest.json          layer config, seed, tags and file names
//   layerNN_<name>.bsr     one BSR1 container per matrix; dense-tagged
//                          matrices use a block of 1 x n_cols
//   layerNN_<name>.json    prune metadata for pruned matrices
//   layerNN_<vec>.bsr      biases and layernorm vectors as 1 x n matrices
//
// Round trips are bit-exact.

/// Creates the directory if needed. Throws IoError on write failure.
void save_bundle(const std::filesystem::path& dir, const EncoderWeights& w);
/// Throws IoError on missing or malformed files, DimensionMismatch if the
/// tensors disagree with the stored config.
EncoderWeights load_bundle(const std::filesystem::path& dir);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_BUNDLE_H_
