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

#include "blocksparse/verify.h"

#include <chrono>
#include <cmath>
#include <random>

#include "blocksparse/bench.h"
#include "blocksparse/errors.h"
#include "blocksparse/pruning.h"

namespace blocksparse {

namespace {

constexpr double kSparsities[] = {0.0, 0.5, 0.8, 0.95};

DenseMatrix naive_product(const DenseMatrix& x, const DenseMatrix& w) {
  DenseMatrix y(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) acc += double(x(i, j)) * double(w(o, j));
      y(i, o) = static_cast<float>(acc);
    }
  }
  return y;
}

}  // namespace

VerifyResult run_verify(const VerifyOptions& opts) {
  if (opts.instances == 0) throw ConfigError("verify needs at least one instance");
  if (!(opts.tolerance > 0.0)) throw ConfigError("verify tolerance must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const auto& shapes = default_sweep_shapes();
  const std::size_t n_sparsities = std::size(kSparsities);
  std::mt19937_64 rng(opts.seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::normal_distribution<float> gauss;

  VerifyResult res;
  res.cases.reserve(opts.instances);
  for (std::size_t i = 0; i < opts.instances; ++i) {
    VerifyCase c;
    c.block = shapes[i % shapes.size()];
    c.sparsity = kSparsities[(i / shapes.size()) % n_sparsities];
    // at most 192 x 768 weights per instance
    const std::size_t max_rows = std::max<std::size_t>(1, 192 / c.block.r);
    const std::size_t max_cols = std::max<std::size_t>(1, 768 / c.block.c);
    c.n = c.block.r * pick(1, std::min<std::size_t>(max_rows, 8));
    c.k = c.block.c * pick(1, std::min<std::size_t>(max_cols, c.block.c == 1 ? 256 : 8));
    c.m = pick(1, 40);
    const std::size_t tiles[] = {1, 4, 8, 16, 32};
    c.sched = Schedule{tiles[pick(0, 4)], pick(1, std::max<std::size_t>(1, opts.max_threads)), pick(0, 1) == 1,
                       pick(0, 1) == 1};

    DenseMatrix x(c.m, c.k);
    for (float& v : x.data()) v = gauss(rng);
    DenseMatrix w(c.n, c.k);
    const float scale = 1.0f / std::sqrt(static_cast<float>(c.k));
    for (float& v : w.data()) v = gauss(rng) * scale;
    PruneConfig pcfg;
    pcfg.block = c.block;
    pcfg.target_sparsity = c.sparsity;
    const DenseMatrix pruned = prune_to_sparsity(w, pcfg).pruned;

    const DenseMatrix got = sparse_dense(x, dense_to_bsr(pruned, c.block), c.sched);
    const DenseMatrix want = naive_product(x, pruned);
    for (std::size_t e = 0; e < got.size(); ++e) {
      c.max_abs_diff = std::max(c.max_abs_diff, std::abs(double(got.data()[e]) - double(want.data()[e])));
    }
    c.pass = got.rows() == want.rows() && got.cols() == want.cols() && c.max_abs_diff <= opts.tolerance;
    res.failures += !c.pass;
    res.cases.push_back(c);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace blocksparse
