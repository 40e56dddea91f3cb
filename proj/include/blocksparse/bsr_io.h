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

#ifndef BLOCKSPARSE_BSR_IO_H_
#define BLOCKSPARSE_BSR_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "blocksparse/bsr.h"

namespace blocksparse {

// Binary container:
//   "BSR1"
//   u64 n_rows, n_cols, r, c, n_blocks      (little-endian)
//   u32 indptr[n_rows / r + 1]
//   u32 indices[n_blocks]
//   f32 values[n_blocks * r * c]
std::vector<std::uint8_t> serialize_bsr(const BsrMatrix& m);

/// Throws IoError on truncated/garbled input, StructureInvalid if the decoded
/// arrays violate the BSR invariants.
BsrMatrix deserialize_bsr(std::span<const std::uint8_t> bytes);

void save_bsr(const std::filesystem::path& path, const BsrMatrix& m);
BsrMatrix load_bsr(const std::filesystem::path& path);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_BSR_IO_H_
