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

#ifndef BLOCKSPARSE_PRUNING_H_
#define BLOCKSPARSE_PRUNING_H_

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "blocksparse/bsr.h"

namespace blocksparse {

/// Row-major grid with one entry per block of a blocked matrix.
template <typename T>
struct BlockGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  BlockGrid() = default;
  BlockGrid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const BlockGrid&, const BlockGrid&) = default;
};

/// Keep-mask: 1 = block kept, 0 = block pruned.
using BlockMask = BlockGrid<std::uint8_t>;

enum class NormOrder { kL1 = 1, kL2 = 2 };

enum class PruneMethod { kMagnitudeRank, kProximalStep };

std::string_view to_string(PruneMethod method);
PruneMethod parse_prune_method(std::string_view text);
NormOrder parse_norm_order(int p);

struct PruneConfig {
  BlockShape block;
  NormOrder p = NormOrder::kL2;
  /// Fraction of blocks to zero, in [0, 1].
  double target_sparsity = 0.0;
  /// Penalty weight; the proximal path uses it as the shrinkage threshold.
  double lambda = 0.0;
  PruneMethod method = PruneMethod::kMagnitudeRank;

  /// Throws ConfigError on out-of-range fields.
  void check() const;
};

struct PruneResult {
  DenseMatrix pruned;
  BlockMask mask;
  double achieved_sparsity = 0.0;
  BlockGrid<double> block_norms;

  std::size_t pruned_blocks() const;
};

/// Per-block l1 (abs-sum) or l2 (Euclidean) norm. Accumulates in double.
BlockGrid<double> group_norms(const DenseMatrix& w, BlockShape block, NormOrder p);

/// ceil(target * n_blocks). Products within 1e-9 (relative) of an integer are
/// snapped to it first, so 0.7 * 10 prunes 7 blocks rather than 8.
std::size_t blocks_to_prune(double target_sparsity, std::size_t n_blocks);

/// Mask keeping all but the blocks_to_prune() smallest norms. Ties go to the
/// earlier (block-row, block-col) position, which is pruned first.
BlockMask magnitude_mask(const BlockGrid<double>& norms, double target_sparsity);

/// Zeros every element of `w` whose block is masked out.
PruneResult apply_mask(const DenseMatrix& w, BlockShape block, const BlockMask& mask, NormOrder p);

/// One-shot magnitude pruning to `cfg.target_sparsity` (method must be kMagnitudeRank).
PruneResult prune_to_sparsity(const DenseMatrix& w, const PruneConfig& cfg);

/// Proximal operator of threshold * sum_b ||w_b||_2: each block is scaled by
/// max(0, 1 - threshold / ||b||_2); blocks with norm <= threshold become exact zeros.
DenseMatrix group_soft_threshold(const DenseMatrix& w, BlockShape block, double threshold);

/// Elementwise sign(x) * max(0, |x| - threshold).
DenseMatrix soft_threshold(const DenseMatrix& w, double threshold);

/// Dispatches on cfg.method. kProximalStep applies group_soft_threshold with
/// threshold = cfg.lambda; the mask then marks the blocks that became zero.
PruneResult prune(const DenseMatrix& w, const PruneConfig& cfg);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_PRUNING_H_
