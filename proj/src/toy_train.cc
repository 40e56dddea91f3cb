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

#include "blocksparse/toy_train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "blocksparse/errors.h"

namespace blocksparse {

ToyProblem make_toy_problem(const ToyProblemOptions& opts, BlockShape block, std::uint64_t seed) {
  if (!block.divides(opts.n_out, opts.n_in)) {
    throw DimensionMismatch("toy teacher " + std::to_string(opts.n_out) + "x" +
                            std::to_string(opts.n_in) + " not divisible by block " +
                            block.to_string());
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ToyProblem pb;
  pb.block = block;
  const std::size_t grid_r = opts.n_out / block.r;
  const std::size_t grid_c = opts.n_in / block.c;
  pb.planted_mask = BlockMask(grid_r, grid_c, 1);
  std::vector<std::size_t> order(pb.planted_mask.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t zeroed = blocks_to_prune(opts.planted_sparsity, order.size());
  for (std::size_t k = 0; k < zeroed; ++k) pb.planted_mask.data[order[k]] = 0;

  pb.teacher = DenseMatrix(opts.n_out, opts.n_in);
  for (std::size_t i = 0; i < opts.n_out; ++i) {
    for (std::size_t j = 0; j < opts.n_in; ++j) {
      const double v = gauss(rng);
      if (pb.planted_mask(i / block.r, j / block.c)) pb.teacher(i, j) = static_cast<float>(v);
    }
  }

  pb.inputs = DenseMatrix(opts.samples, opts.n_in);
  for (auto& v : pb.inputs.data()) v = static_cast<float>(gauss(rng));

  pb.targets = DenseMatrix(opts.samples, opts.n_out);
  for (std::size_t s = 0; s < opts.samples; ++s) {
    for (std::size_t o = 0; o < opts.n_out; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < opts.n_in; ++j) {
        acc += static_cast<double>(pb.inputs(s, j)) * pb.teacher(o, j);
      }
      if (opts.noise > 0.0) acc += opts.noise * gauss(rng);
      pb.targets(s, o) = static_cast<float>(acc);
    }
  }
  return pb;
}

namespace {

// residual(s, o) = sum_j x(s, j) w(o, j) - y(s, o)
std::vector<double> residuals(const ToyProblem& pb, const DenseMatrix& w) {
  const std::size_t S = pb.inputs.rows();
  const std::size_t O = pb.targets.cols();
  const std::size_t I = pb.inputs.cols();
  if (w.rows() != O || w.cols() != I) throw DimensionMismatch("toy weights have the wrong shape");
  std::vector<double> r(S * O);
  for (std::size_t s = 0; s < S; ++s) {
    auto x = pb.inputs.row(s);
    for (std::size_t o = 0; o < O; ++o) {
      auto wr = w.row(o);
      double acc = 0.0;
      for (std::size_t j = 0; j < I; ++j) acc += static_cast<double>(x[j]) * wr[j];
      r[s * O + o] = acc - pb.targets(s, o);
    }
  }
  return r;
}

}  // namespace

double toy_loss(const ToyProblem& pb, const DenseMatrix& w) {
  auto r = residuals(pb, w);
  double sum = 0.0;
  for (double v : r) sum += v * v;
  return sum / static_cast<double>(r.size());
}

std::vector<double> toy_gradient(const ToyProblem& pb, const DenseMatrix& w) {
  const std::size_t S = pb.inputs.rows();
  const std::size_t O = pb.targets.cols();
  const std::size_t I = pb.inputs.cols();
  auto r = residuals(pb, w);
  const double scale = 2.0 / static_cast<double>(S * O);
  std::vector<double> g(O * I, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    auto x = pb.inputs.row(s);
    for (std::size_t o = 0; o < O; ++o) {
      const double ro = r[s * O + o] * scale;
      double* go = g.data() + o * I;
      for (std::size_t j = 0; j < I; ++j) go[j] += ro * x[j];
    }
  }
  return g;
}

double toy_lipschitz(const ToyProblem& pb, int iterations) {
  const std::size_t S = pb.inputs.rows();
  const std::size_t I = pb.inputs.cols();
  const std::size_t O = pb.targets.cols();
  // Largest eigenvalue of X^T X, applied as X^T (X v) without forming the Gram.
  std::vector<double> v(I, 1.0 / std::sqrt(static_cast<double>(I)));
  std::vector<double> xv(S);
  std::vector<double> next(I);
  double eig = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t s = 0; s < S; ++s) {
      auto x = pb.inputs.row(s);
      double acc = 0.0;
      for (std::size_t j = 0; j < I; ++j) acc += x[j] * v[j];
      xv[s] = acc;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      auto x = pb.inputs.row(s);
      for (std::size_t j = 0; j < I; ++j) next[j] += x[j] * xv[s];
    }
    double norm = 0.0;
    for (double t : next) norm += t * t;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    eig = norm;
    for (std::size_t j = 0; j < I; ++j) v[j] = next[j] / norm;
  }
  return 2.0 * eig / static_cast<double>(S * O);
}

BlockMask nonzero_mask(const DenseMatrix& w, BlockShape block) {
  auto norms = group_norms(w, block, NormOrder::kL1);
  BlockMask mask(norms.rows, norms.cols, 0);
  for (std::size_t k = 0; k < norms.size(); ++k) mask.data[k] = norms.data[k] > 0.0 ? 1 : 0;
  return mask;
}

double mask_agreement(const BlockMask& a, const BlockMask& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DimensionMismatch("mask grids differ in shape");
  if (a.size() == 0) return 1.0;
  std::size_t same = 0;
  for (std::size_t k = 0; k < a.size(); ++k) same += (a.data[k] != 0) == (b.data[k] != 0);
  return static_cast<double>(same) / static_cast<double>(a.size());
}

ToyTrainResult toy_train(std::size_t steps, const PruneConfig& cfg, std::uint64_t seed,
                         const ToyProblemOptions& opts) {
  if (steps < 1) throw ConfigError("toy_train needs at least one step");
  cfg.check();

  ToyTrainResult out;
  out.problem = make_toy_problem(opts, cfg.block, seed);
  const ToyProblem& pb = out.problem;

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 0.01);
  DenseMatrix w(opts.n_out, opts.n_in);
  for (auto& v : w.data()) v = static_cast<float>(gauss(rng));

  const double lipschitz = toy_lipschitz(pb);
  out.step_size = 1.0 / lipschitz;
  const double threshold = cfg.lambda * out.step_size;
  out.initial_loss = toy_loss(pb, w);

  out.loss_history.reserve(steps);
  out.sparsity_history.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    auto g = toy_gradient(pb, w);
    auto data = w.data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      data[k] = static_cast<float>(data[k] - out.step_size * g[k]);
    }
    w = group_soft_threshold(w, cfg.block, threshold);

    out.loss_history.push_back(toy_loss(pb, w));
    auto mask = nonzero_mask(w, cfg.block);
    const auto zeros = std::count(mask.data.begin(), mask.data.end(), 0);
    out.sparsity_history.push_back(static_cast<double>(zeros) / static_cast<double>(mask.size()));
  }
  out.weights = std::move(w);
  return out;
}

}  // namespace blocksparse
