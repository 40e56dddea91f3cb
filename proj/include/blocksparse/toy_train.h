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

#ifndef BLOCKSPARSE_TOY_TRAIN_H_
#define BLOCKSPARSE_TOY_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "blocksparse/bsr.h"
#include "blocksparse/pruning.h"

namespace blocksparse {

struct ToyProblemOptions {
  std::size_t n_out = 32;
  std::size_t n_in = 64;
  std::size_t samples = 256;
  /// Fraction of teacher blocks planted as exact zeros.
  double planted_sparsity = 0.8;
  /// Std-dev of Gaussian label noise.
  double noise = 0.0;
};

/// Least-squares regression against a block-sparse teacher:
/// targets = inputs * teacher^T (+ noise).
struct ToyProblem {
  DenseMatrix inputs;   // samples x n_in
  DenseMatrix targets;  // samples x n_out
  DenseMatrix teacher;  // n_out x n_in
  BlockShape block;
  BlockMask planted_mask;
};

ToyProblem make_toy_problem(const ToyProblemOptions& opts, BlockShape block, std::uint64_t seed);

/// Mean squared error over all samples and outputs.
double toy_loss(const ToyProblem& problem, const DenseMatrix& w);

/// Analytic gradient of toy_loss with respect to w.
std::vector<double> toy_gradient(const ToyProblem& problem, const DenseMatrix& w);

/// Lipschitz constant of the toy_loss gradient, from power iteration on the
/// input Gram matrix.
double toy_lipschitz(const ToyProblem& problem, int iterations = 200);

struct ToyTrainResult {
  DenseMatrix weights;
  double initial_loss = 0.0;
  double step_size = 0.0;
  /// Loss and block sparsity after each step.
  std::vector<double> loss_history;
  std::vector<double> sparsity_history;
  ToyProblem problem;
};

/// Proximal gradient descent on the toy problem: each step takes a gradient
/// step of size 1/L and then applies group_soft_threshold with threshold
/// cfg.lambda / L. Deterministic in `seed`. A diverging run shows up as a
/// growing loss_history rather than an exception.
ToyTrainResult toy_train(std::size_t steps, const PruneConfig& cfg, std::uint64_t seed,
                         const ToyProblemOptions& opts = {});

/// Nonzero-block mask of w.
BlockMask nonzero_mask(const DenseMatrix& w, BlockShape block);

/// Fraction of blocks on which two masks agree.
double mask_agreement(const BlockMask& a, const BlockMask& b);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_TOY_TRAIN_H_
