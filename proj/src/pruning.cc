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

#include "blocksparse/pruning.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blocksparse/errors.h"

namespace blocksparse {

std::string_view to_string(PruneMethod method) {
  switch (method) {
    case PruneMethod::kMagnitudeRank:
      return "magnitude";
    case PruneMethod::kProximalStep:
      return "proximal";
  }
  return "unknown";
}

PruneMethod parse_prune_method(std::string_view text) {
  if (text == "magnitude") return PruneMethod::kMagnitudeRank;
  if (text == "proximal") return PruneMethod::kProximalStep;
  throw ConfigError("unknown prune method '" + std::string(text) + "'");
}

NormOrder parse_norm_order(int p) {
  if (p == 1) return NormOrder::kL1;
  if (p == 2) return NormOrder::kL2;
  throw ConfigError("norm order must be 1 or 2, got " + std::to_string(p));
}

void PruneConfig::check() const {
  if (block.r == 0 || block.c == 0) throw ConfigError("block dimensions must be positive");
  if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0)) {
    throw ConfigError("target_sparsity must lie in [0, 1]");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

std::size_t PruneResult::pruned_blocks() const {
  return static_cast<std::size_t>(std::count(mask.data.begin(), mask.data.end(), 0));
}

namespace {

void require_divides(const DenseMatrix& w, BlockShape block) {
  if (!block.divides(w.rows(), w.cols())) {
    throw DimensionMismatch("block " + block.to_string() + " does not divide " +
                            std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
}

}  // namespace

BlockGrid<double> group_norms(const DenseMatrix& w, BlockShape block, NormOrder p) {
  require_divides(w, block);
  BlockGrid<double> norms(w.rows() / block.r, w.cols() / block.c, 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const std::size_t bi = i / block.r;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double v = w(i, j);
      norms(bi, j / block.c) += (p == NormOrder::kL1) ? std::abs(v) : v * v;
    }
  }
  if (p == NormOrder::kL2) {
    for (auto& n : norms.data) n = std::sqrt(n);
  }
  return norms;
}

std::size_t blocks_to_prune(double target_sparsity, std::size_t n_blocks) {
  const double exact = target_sparsity * static_cast<double>(n_blocks);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) {
    return static_cast<std::size_t>(nearest);
  }
  return std::min(n_blocks, static_cast<std::size_t>(std::ceil(exact)));
}

BlockMask magnitude_mask(const BlockGrid<double>& norms, double target_sparsity) {
  const std::size_t n = norms.size();
  const std::size_t k = blocks_to_prune(target_sparsity, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Flat index is (block-row, block-col) order, so the stable sort breaks ties
  // toward the earlier position.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms.data[a] < norms.data[b]; });
  BlockMask mask(norms.rows, norms.cols, 1);
  for (std::size_t i = 0; i < k; ++i) mask.data[order[i]] = 0;
  return mask;
}

PruneResult apply_mask(const DenseMatrix& w, BlockShape block, const BlockMask& mask, NormOrder p) {
  require_divides(w, block);
  if (mask.rows != w.rows() / block.r || mask.cols != w.cols() / block.c) {
    throw DimensionMismatch("mask grid does not match the blocked matrix");
  }
  PruneResult result;
  result.pruned = w;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (!mask(i / block.r, j / block.c)) result.pruned(i, j) = 0.0f;
    }
  }
  result.mask = mask;
  result.block_norms = group_norms(w, block, p);
  result.achieved_sparsity = mask.size() == 0 ? 0.0
                                              : static_cast<double>(result.pruned_blocks()) /
                                                    static_cast<double>(mask.size());
  return result;
}

PruneResult prune_to_sparsity(const DenseMatrix& w, const PruneConfig& cfg) {
  cfg.check();
  if (cfg.method != PruneMethod::kMagnitudeRank) {
    throw ConfigError("prune_to_sparsity requires the magnitude method");
  }
  auto norms = group_norms(w, cfg.block, cfg.p);
  auto mask = magnitude_mask(norms, cfg.target_sparsity);
  return apply_mask(w, cfg.block, mask, cfg.p);
}

DenseMatrix group_soft_threshold(const DenseMatrix& w, BlockShape block, double threshold) {
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
  auto norms = group_norms(w, block, NormOrder::kL2);
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double norm = norms(i / block.r, j / block.c);
      if (norm <= threshold) continue;
      // x / norm first: for a 1x1 block that ratio is exactly +-1, so this
      // path reproduces soft_threshold bit for bit.
      const double x = w(i, j);
      out(i, j) = static_cast<float>(x / norm * (norm - threshold));
    }
  }
  return out;
}

DenseMatrix soft_threshold(const DenseMatrix& w, double threshold) {
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
  DenseMatrix out(w.rows(), w.cols());
  auto src = w.data();
  auto dst = out.data();
  for (std::size_t k = 0; k < src.size(); ++k) {
    const double mag = std::abs(static_cast<double>(src[k]));
    if (mag <= threshold) continue;
    dst[k] = static_cast<float>(std::copysign(mag - threshold, static_cast<double>(src[k])));
  }
  return out;
}

PruneResult prune(const DenseMatrix& w, const PruneConfig& cfg) {
  cfg.check();
  if (cfg.method == PruneMethod::kMagnitudeRank) return prune_to_sparsity(w, cfg);

  auto shrunk = group_soft_threshold(w, cfg.block, cfg.lambda);
  auto after = group_norms(shrunk, cfg.block, NormOrder::kL2);
  BlockMask mask(after.rows, after.cols, 1);
  for (std::size_t k = 0; k < after.size(); ++k) mask.data[k] = after.data[k] > 0.0 ? 1 : 0;
  PruneResult result = apply_mask(shrunk, cfg.block, mask, cfg.p);
  result.block_norms = group_norms(w, cfg.block, cfg.p);
  return result;
}

}  // namespace blocksparse
