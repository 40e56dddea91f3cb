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

#include "blocksparse/model.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "blocksparse/errors.h"

namespace blocksparse {

void LayerConfig::check() const {
  if (h == 0 || a == 0 || ffn == 0 || l == 0 || seq == 0) {
    throw ConfigError("layer config fields must be positive");
  }
  if (h % a != 0) {
    throw ConfigError(std::to_string(a) + " heads do not divide hidden size " + std::to_string(h));
  }
}

LayerConfig LayerConfig::desk() { return LayerConfig{128, 4, 512, 2, 32}; }
LayerConfig LayerConfig::bert_base() { return LayerConfig{768, 12, 3072, 12, 128}; }

bool is_bsr(const Weight& w) { return std::holds_alternative<BsrMatrix>(w); }

std::size_t weight_rows(const Weight& w) {
  return is_bsr(w) ? std::get<BsrMatrix>(w).n_rows() : std::get<DenseMatrix>(w).rows();
}

std::size_t weight_cols(const Weight& w) {
  return is_bsr(w) ? std::get<BsrMatrix>(w).n_cols() : std::get<DenseMatrix>(w).cols();
}

DenseMatrix to_dense(const Weight& w) {
  return is_bsr(w) ? bsr_to_dense(std::get<BsrMatrix>(w)) : std::get<DenseMatrix>(w);
}

std::string_view matrix_name(MatrixId id) {
  static constexpr std::array<std::string_view, 6> kNames = {"wq", "wk", "wv", "wo", "w1", "w2"};
  return kNames[static_cast<std::size_t>(id)];
}

bool is_attention(MatrixId id) { return id != MatrixId::kW1 && id != MatrixId::kW2; }

Weight& LayerWeights::matrix(MatrixId id) {
  return const_cast<Weight&>(static_cast<const LayerWeights&>(*this).matrix(id));
}

const Weight& LayerWeights::matrix(MatrixId id) const {
  switch (id) {
    case MatrixId::kQ: return wq;
    case MatrixId::kK: return wk;
    case MatrixId::kV: return wv;
    case MatrixId::kO: return wo;
    case MatrixId::kW1: return w1;
    case MatrixId::kW2: return w2;
  }
  return wq;
}

namespace {

struct Shape {
  std::size_t rows, cols;
};

Shape expected_shape(const LayerConfig& cfg, MatrixId id) {
  if (id == MatrixId::kW1) return {cfg.ffn, cfg.h};
  if (id == MatrixId::kW2) return {cfg.h, cfg.ffn};
  return {cfg.h, cfg.h};
}

void require_size(const std::vector<float>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw DimensionMismatch(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                            std::to_string(n));
  }
}

}  // namespace

std::size_t EncoderWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (MatrixId id : kAllMatrices) n += weight_rows(layer.matrix(id)) * weight_cols(layer.matrix(id));
    for (const auto* v : {&layer.bq, &layer.bk, &layer.bv, &layer.bo, &layer.b1, &layer.b2, &layer.ln1_gamma,
                          &layer.ln1_beta, &layer.ln2_gamma, &layer.ln2_beta}) {
      n += v->size();
    }
  }
  return n;
}

void EncoderWeights::check() const {
  cfg.check();
  if (layers.size() != cfg.l) throw DimensionMismatch("layer count does not match config");
  for (const auto& layer : layers) {
    for (MatrixId id : kAllMatrices) {
      const auto want = expected_shape(cfg, id);
      const Weight& m = layer.matrix(id);
      if (weight_rows(m) != want.rows || weight_cols(m) != want.cols) {
        throw DimensionMismatch(std::string(matrix_name(id)) + " is " + std::to_string(weight_rows(m)) + "x" +
                                std::to_string(weight_cols(m)) + ", expected " + std::to_string(want.rows) + "x" +
                                std::to_string(want.cols));
      }
    }
    require_size(layer.bq, cfg.h, "bq");
    require_size(layer.bk, cfg.h, "bk");
    require_size(layer.bv, cfg.h, "bv");
    require_size(layer.bo, cfg.h, "bo");
    require_size(layer.b1, cfg.ffn, "b1");
    require_size(layer.b2, cfg.h, "b2");
    require_size(layer.ln1_gamma, cfg.h, "ln1_gamma");
    require_size(layer.ln1_beta, cfg.h, "ln1_beta");
    require_size(layer.ln2_gamma, cfg.h, "ln2_gamma");
    require_size(layer.ln2_beta, cfg.h, "ln2_beta");
  }
}

EncoderWeights init_weights(const LayerConfig& cfg, std::uint64_t seed) {
  cfg.check();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> wdist(0.0f, 1.0f / std::sqrt(static_cast<float>(cfg.h)));
  std::normal_distribution<float> bdist(0.0f, 0.02f);

  auto matrix = [&](std::size_t rows, std::size_t cols) {
    DenseMatrix m(rows, cols);
    for (float& v : m.data()) v = wdist(rng);
    return m;
  };
  auto bias = [&](std::size_t n) {
    std::vector<float> b(n);
    for (float& v : b) v = bdist(rng);
    return b;
  };

  EncoderWeights w;
  w.cfg = cfg;
  w.seed = seed;
  w.layers.reserve(cfg.l);
  for (std::size_t i = 0; i < cfg.l; ++i) {
    LayerWeights layer;
    for (MatrixId id : kAllMatrices) {
      const auto s = expected_shape(cfg, id);
      layer.matrix(id) = matrix(s.rows, s.cols);
    }
    layer.bq = bias(cfg.h);
    layer.bk = bias(cfg.h);
    layer.bv = bias(cfg.h);
    layer.bo = bias(cfg.h);
    layer.b1 = bias(cfg.ffn);
    layer.b2 = bias(cfg.h);
    layer.ln1_gamma.assign(cfg.h, 1.0f);
    layer.ln1_beta.assign(cfg.h, 0.0f);
    layer.ln2_gamma.assign(cfg.h, 1.0f);
    layer.ln2_beta.assign(cfg.h, 0.0f);
    w.layers.push_back(std::move(layer));
  }
  return w;
}

EncoderWeights sparsify_weights(const EncoderWeights& w, const PruneConfig& cfg, const SparsifyOptions& opts) {
  cfg.check();
  w.check();
  if (opts.shared_masks && cfg.method != PruneMethod::kMagnitudeRank) {
    throw ConfigError("shared masks need the magnitude pruning method");
  }
  auto targeted = [&](MatrixId id) { return !opts.attention_only || is_attention(id); };
  for (MatrixId id : kAllMatrices) {
    const auto s = expected_shape(w.cfg, id);
    if (targeted(id) && !cfg.block.divides(s.rows, s.cols)) {
      throw DimensionMismatch("block " + cfg.block.to_string() + " does not divide " + std::string(matrix_name(id)) +
                              " (" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")");
    }
  }

  // Joint ranking: summed block norms per matrix shape across the stack.
  std::map<std::pair<std::size_t, std::size_t>, BlockMask> shared;
  if (opts.shared_masks) {
    std::map<std::pair<std::size_t, std::size_t>, BlockGrid<double>> sums;
    for (const auto& layer : w.layers) {
      for (MatrixId id : kAllMatrices) {
        if (!targeted(id)) continue;
        const auto norms = group_norms(to_dense(layer.matrix(id)), cfg.block, cfg.p);
        const auto s = expected_shape(w.cfg, id);
        auto [it, fresh] = sums.try_emplace({s.rows, s.cols}, norms);
        if (!fresh) {
          for (std::size_t k = 0; k < norms.size(); ++k) it->second.data[k] += norms.data[k];
        }
      }
    }
    for (const auto& [shape, norms] : sums) shared[shape] = magnitude_mask(norms, cfg.target_sparsity);
  }

  EncoderWeights out = w;
  out.prune_log.clear();
  for (std::size_t li = 0; li < out.layers.size(); ++li) {
    for (MatrixId id : kAllMatrices) {
      if (!targeted(id)) continue;
      Weight& m = out.layers[li].matrix(id);
      const DenseMatrix dense = to_dense(m);
      const PruneResult res = opts.shared_masks
                                  ? apply_mask(dense, cfg.block, shared.at({dense.rows(), dense.cols()}), cfg.p)
                                  : prune(dense, cfg);
      m = dense_to_bsr(res.pruned, cfg.block);
      out.prune_log.push_back(
          PruneLogEntry{li, id, cfg.block, cfg.p, cfg.target_sparsity, res.achieved_sparsity, w.seed});
    }
  }
  return out;
}

EncoderWeights densify_weights(const EncoderWeights& w) {
  EncoderWeights out = w;
  for (auto& layer : out.layers) {
    for (MatrixId id : kAllMatrices) layer.matrix(id) = to_dense(layer.matrix(id));
  }
  return out;
}

// --- numerics ------------------------------------------------------------------

void softmax_rows(DenseMatrix& x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    if (row.empty()) continue;
    const float mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& v : row) v *= inv;
  }
}

float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  constexpr float kCubic = 0.044715f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + kCubic * x * x * x)));
}

void layer_norm_rows(DenseMatrix& x, const std::vector<float>& gamma, const std::vector<float>& beta) {
  require_size(gamma, x.cols(), "layernorm gamma");
  require_size(beta, x.cols(), "layernorm beta");
  constexpr double kEps = 1e-12;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (float v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (float v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + kEps);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = static_cast<float>((row[j] - mean) * inv) * gamma[j] + beta[j];
    }
  }
}

namespace {

TaskKey key_for(const Weight& w, std::size_t m) {
  return is_bsr(w) ? make_task_key(std::get<BsrMatrix>(w), m) : make_task_key(std::get<DenseMatrix>(w), m);
}

WeightRef ref_for(const Weight& w) {
  if (is_bsr(w)) return std::cref(std::get<BsrMatrix>(w));
  return std::cref(std::get<DenseMatrix>(w));
}

// y = x * W^T + b
DenseMatrix project(const DenseMatrix& x, const Weight& w, const std::vector<float>& b, ExecContext& ctx) {
  const WeightRef ref = ref_for(w);
  auto [rec, hit] = ctx.tuner.lookup_or_tune(ctx.cache, key_for(w, x.rows()), ref, ctx.budget);
  ++ctx.stats.projections;
  ++(hit ? ctx.stats.cache_hits : ctx.stats.cache_misses);
  ctx.stats.modeled_ms += cost_model_ms(ref, x.rows(), rec.sched);

  DenseMatrix y = is_bsr(w) ? sparse_dense(x, std::get<BsrMatrix>(w), rec.sched)
                            : dense_matmul(x, std::get<DenseMatrix>(w), rec.sched);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  return y;
}

DenseMatrix slice(const DenseMatrix& x, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols) {
  DenseMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto src = x.row(row0 + i).subspan(col0, cols);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

DenseMatrix transpose(const DenseMatrix& x) {
  DenseMatrix t(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) t(j, i) = x(i, j);
  return t;
}

DenseMatrix attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v, const LayerConfig& cfg,
                      ExecContext& ctx) {
  const std::size_t dh = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Schedule sched = default_schedule(ctx.tuner.options().max_threads);
  DenseMatrix out(q.rows(), q.cols());
  for (std::size_t s0 = 0; s0 < q.rows(); s0 += cfg.seq) {
    for (std::size_t hd = 0; hd < cfg.a; ++hd) {
      const DenseMatrix qh = slice(q, s0, cfg.seq, hd * dh, dh);
      const DenseMatrix kh = slice(k, s0, cfg.seq, hd * dh, dh);
      const DenseMatrix vt = transpose(slice(v, s0, cfg.seq, hd * dh, dh));
      DenseMatrix scores = dense_matmul(qh, kh, sched);
      for (float& x : scores.data()) x *= scale;
      softmax_rows(scores);
      const DenseMatrix ctx_h = dense_matmul(scores, vt, sched);
      ctx.stats.modeled_ms += cost_model_ms(std::cref(kh), cfg.seq, sched) + cost_model_ms(std::cref(vt), cfg.seq, sched);
      for (std::size_t i = 0; i < cfg.seq; ++i) {
        auto src = ctx_h.row(i);
        std::copy(src.begin(), src.end(), out.row(s0 + i).begin() + static_cast<std::ptrdiff_t>(hd * dh));
      }
    }
  }
  return out;
}

void add_into(DenseMatrix& x, const DenseMatrix& y) {
  auto a = x.data();
  auto b = y.data();
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

}  // namespace

DenseMatrix forward(const DenseMatrix& x, const EncoderWeights& w, ExecContext& ctx) {
  w.check();
  const auto& cfg = w.cfg;
  if (x.cols() != cfg.h || x.rows() == 0 || x.rows() % cfg.seq != 0) {
    throw DimensionMismatch("input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                            " is not a stack of " + std::to_string(cfg.seq) + "x" + std::to_string(cfg.h) +
                            " sequences");
  }
  if (ctx.budget == 0) throw ConfigError("tuning budget must be >= 1");

  DenseMatrix h = x;
  for (const auto& layer : w.layers) {
    const DenseMatrix q = project(h, layer.wq, layer.bq, ctx);
    const DenseMatrix k = project(h, layer.wk, layer.bk, ctx);
    const DenseMatrix v = project(h, layer.wv, layer.bv, ctx);
    const DenseMatrix attn = project(attention(q, k, v, cfg, ctx), layer.wo, layer.bo, ctx);
    add_into(h, attn);
    layer_norm_rows(h, layer.ln1_gamma, layer.ln1_beta);

    DenseMatrix f = project(h, layer.w1, layer.b1, ctx);
    for (float& e : f.data()) e = gelu(e);
    add_into(h, project(f, layer.w2, layer.b2, ctx));
    layer_norm_rows(h, layer.ln2_gamma, layer.ln2_beta);
  }
  return h;
}

std::vector<TaskKey> projection_tasks(const EncoderWeights& w, std::size_t m) {
  std::vector<TaskKey> keys;
  keys.reserve(w.layers.size() * kAllMatrices.size());
  for (const auto& layer : w.layers) {
    for (MatrixId id : kAllMatrices) keys.push_back(key_for(layer.matrix(id), m));
  }
  return keys;
}

}  // namespace blocksparse
