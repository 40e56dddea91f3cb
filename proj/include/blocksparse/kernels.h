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

#ifndef BLOCKSPARSE_KERNELS_H_
#define BLOCKSPARSE_KERNELS_H_

#include <cstddef>
#include <cstdint>
#include <string>

#include "blocksparse/bsr.h"

namespace blocksparse {

/// Tunable execution parameters shared by the sparse and dense kernels.
struct Schedule {
  /// Rows of X per task tile. Kernels are instantiated for 1, 4, 8, 16, 32;
  /// other values fall back to the nearest smaller instantiation.
  std::size_t tile_m = 16;
  std::size_t threads = 1;
  /// Use the compile-time-unrolled inner loop where one exists for the block shape.
  bool unroll_c = true;
  bool prefetch = false;

  /// Throws ConfigError unless tile_m >= 1 and threads >= 1.
  void check() const;
  std::string to_string() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

Schedule default_schedule(std::size_t threads = 1);

/// Y = X * W^T with W in BSR form (N x K, output-major), X dense M x K.
///
/// Only stored blocks are loaded or multiplied. For every output element the
/// accumulation runs over the block row's stored blocks in `indices` order,
/// then over columns within the block in ascending order; schedules only
/// change how independent output regions are tiled across workers, so the
/// result is bitwise identical for every schedule.
DenseMatrix sparse_dense(const DenseMatrix& x, const BsrMatrix& w, const Schedule& sched);

/// Y = X * W^T with dense W (N x K). Same packing and tiling scheme as
/// sparse_dense, accumulating over k in ascending order.
DenseMatrix dense_matmul(const DenseMatrix& x, const DenseMatrix& w, const Schedule& sched);

struct FlopCount {
  std::uint64_t dense_flops = 0;
  std::uint64_t sparse_flops = 0;
};

/// dense = 2 * m * N * K, sparse = 2 * m * n_blocks * r * c.
FlopCount flops_saved(const BsrMatrix& w, std::size_t m);

/// True for the block shapes with a hand-specialized sparse inner loop
/// (1x4, 1x8, 1x16, 1x32, 16x16).
bool has_specialized_kernel(BlockShape block);

namespace debug {

/// Block-multiply counter. When enabled, sparse_dense adds one per stored
/// block per row tile it processes.
void set_block_counter_enabled(bool enabled);
void reset_block_counter();
std::uint64_t block_multiplies();

}  // namespace debug

}  // namespace blocksparse

#endif  // BLOCKSPARSE_KERNELS_H_
