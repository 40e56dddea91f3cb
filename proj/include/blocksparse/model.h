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

#ifndef BLOCKSPARSE_MODEL_H_
#define BLOCKSPARSE_MODEL_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "blocksparse/bsr.h"
#include "blocksparse/kernels.h"
#include "blocksparse/pruning.h"
#include "blocksparse/scheduler.h"

namespace blocksparse {

/// Encoder stack dimensions: hidden size h, a heads, FFN width, l layers and
/// the sequence length attention runs over.
struct LayerConfig {
  std::size_t h = 128;
  std::size_t a = 4;
  std::size_t ffn = 512;
  std::size_t l = 2;
  std::size_t seq = 32;

  /// Throws ConfigError unless every field is positive and a divides h.
  void check() const;
  std::size_t head_dim() const { return h / a; }

  static LayerConfig desk();       // 128 / 4 / 512 / 2 / seq 32
  static LayerConfig bert_base();  // 768 / 12 / 3072 / 12 / seq 128

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

/// A projection matrix executed either densely or through the BSR kernel.
using Weight = std::variant<DenseMatrix, BsrMatrix>;

bool is_bsr(const Weight& w);
std::size_t weight_rows(const Weight& w);
std::size_t weight_cols(const Weight& w);
/// Same orientation as the stored matrix (out x in).
DenseMatrix to_dense(const Weight& w);

enum class MatrixId : std::size_t { kQ, kK, kV, kO, kW1, kW2 };
inline constexpr std::array<MatrixId, 6> kAllMatrices = {MatrixId::kQ, MatrixId::kK,  MatrixId::kV,
                                                         MatrixId::kO, MatrixId::kW1, MatrixId::kW2};
/// "wq", "wk", "wv", "wo", "w1", "w2".
std::string_view matrix_name(MatrixId id);
bool is_attention(MatrixId id);

struct LayerWeights {
  // h x h, stored out x in so y = x * W^T
  Weight wq, wk, wv, wo;
  Weight w1;  // ffn x h
  Weight w2;  // h x ffn
  std::vector<float> bq, bk, bv, bo, b1, b2;
  std::vector<float> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  Weight& matrix(MatrixId id);
  const Weight& matrix(MatrixId id) const;
};

/// What sparsify_weights did to one matrix.
struct PruneLogEntry {
  std::size_t layer = 0;
  MatrixId matrix = MatrixId::kQ;
  BlockShape block;
  NormOrder p = NormOrder::kL2;
  double target_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  std::uint64_t seed = 0;
};

struct EncoderWeights {
  LayerConfig cfg;
  std::uint64_t seed = 0;
  std::vector<LayerWeights> layers;
  std::vector<PruneLogEntry> prune_log;

  /// Projection weights, biases and layernorm parameters of every layer.
  std::size_t parameter_count() const;
  /// Throws DimensionMismatch if any tensor disagrees with cfg.
  void check() const;
};

/// Projection weights ~ N(0, 1/h), biases ~ N(0, 0.02^2), layernorm gamma 1
/// and beta 0. Deterministic in `seed`.
EncoderWeights init_weights(const LayerConfig& cfg, std::uint64_t seed);

struct SparsifyOptions {
  /// Prune only wq, wk, wv, wo; the FFN pair stays dense.
  bool attention_only = false;
  /// One mask per matrix shape for the whole stack, ranked on the summed
  /// block norms of every matrix of that shape. Needs the magnitude method.
  bool shared_masks = false;
};

/// Prunes the targeted matrices with cfg and stores them as BSR. Biases and
/// layernorm parameters are untouched; untargeted matrices keep their tag.
/// Throws DimensionMismatch if cfg.block does not divide a targeted matrix.
EncoderWeights sparsify_weights(const EncoderWeights& w, const PruneConfig& cfg,
                                const SparsifyOptions& opts = {});

/// Every matrix converted back to a dense tag.
EncoderWeights densify_weights(const EncoderWeights& w);

struct ExecStats {
  std::size_t projections = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  /// Cost-model time of every matmul issued, in ms.
  double modeled_ms = 0.0;
};

/// Where forward() gets its schedules. Projections go through
/// tuner.lookup_or_tune; attention score products use default_schedule with
/// the tuner's thread bound.
struct ExecContext {
  Tuner& tuner;
  TuneCache& cache;
  std::size_t budget = 1;
  ExecStats stats;
};

/// In-place numerically stable softmax of each row.
void softmax_rows(DenseMatrix& x);
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
float gelu(float x);
/// Normalizes each row to zero mean and unit variance (eps 1e-12), then
/// scales by gamma and shifts by beta.
void layer_norm_rows(DenseMatrix& x, const std::vector<float>& gamma, const std::vector<float>& beta);

/// Post-LN encoder stack over x, whose rows are consecutive sequences of
/// cfg.seq tokens; attention never crosses a sequence boundary. Throws
/// DimensionMismatch unless x has h columns and a multiple of seq rows.
DenseMatrix forward(const DenseMatrix& x, const EncoderWeights& w, ExecContext& ctx);

/// The projection tasks forward() issues for x with m rows, in issue order.
std::vector<TaskKey> projection_tasks(const EncoderWeights& w, std::size_t m);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_MODEL_H_
