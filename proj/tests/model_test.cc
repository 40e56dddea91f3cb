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

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>

#include "blocksparse/errors.h"
#include "doctest.h"
#include "json.hpp"
#include "test_util.h"

#ifndef BLOCKSPARSE_TEST_DATA_DIR
#error "BLOCKSPARSE_TEST_DATA_DIR must point at tests/data"
#endif

namespace blocksparse {
namespace {

using testing::max_abs_diff;
using testing::random_dense;

// Straight-line double-precision encoder used as the reference.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const DenseMatrix& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

Mat linear(const Mat& x, const DenseMatrix& w, const std::vector<float>& b) {
  Mat y(x.size(), std::vector<double>(w.rows()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = b[o];
      for (std::size_t j = 0; j < w.cols(); ++j) acc += x[i][j] * w(o, j);
      y[i][o] = acc;
    }
  }
  return y;
}

void norm(Mat& x, const std::vector<float>& g, const std::vector<float>& b) {
  for (auto& row : x) {
    double mean = 0, var = 0;
    for (double v : row) mean += v;
    mean /= row.size();
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) / std::sqrt(var + 1e-12) * g[j] + b[j];
  }
}

DenseMatrix reference_forward(const DenseMatrix& x, const EncoderWeights& w) {
  const auto& cfg = w.cfg;
  const std::size_t dh = cfg.h / cfg.a;
  Mat h = to_mat(x);
  for (const auto& layer : w.layers) {
    const Mat q = linear(h, to_dense(layer.wq), layer.bq);
    const Mat k = linear(h, to_dense(layer.wk), layer.bk);
    const Mat v = linear(h, to_dense(layer.wv), layer.bv);
    Mat ctx(h.size(), std::vector<double>(cfg.h, 0.0));
    for (std::size_t s0 = 0; s0 < h.size(); s0 += cfg.seq) {
      for (std::size_t hd = 0; hd < cfg.a; ++hd) {
        for (std::size_t i = s0; i < s0 + cfg.seq; ++i) {
          std::vector<double> p(cfg.seq);
          double mx = -1e300;
          for (std::size_t j = 0; j < cfg.seq; ++j) {
            double dot = 0;
            for (std::size_t d = 0; d < dh; ++d) dot += q[i][hd * dh + d] * k[s0 + j][hd * dh + d];
            p[j] = dot / std::sqrt(double(dh));
            mx = std::max(mx, p[j]);
          }
          double sum = 0;
          for (double& e : p) sum += (e = std::exp(e - mx));
          for (std::size_t j = 0; j < cfg.seq; ++j)
            for (std::size_t d = 0; d < dh; ++d) ctx[i][hd * dh + d] += p[j] / sum * v[s0 + j][hd * dh + d];
        }
      }
    }
    const Mat attn = linear(ctx, to_dense(layer.wo), layer.bo);
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < cfg.h; ++j) h[i][j] += attn[i][j];
    norm(h, layer.ln1_gamma, layer.ln1_beta);
    Mat f = linear(h, to_dense(layer.w1), layer.b1);
    for (auto& row : f)
      for (double& e : row) e = 0.5 * e * (1 + std::tanh(std::sqrt(2 / M_PI) * (e + 0.044715 * e * e * e)));
    const Mat f2 = linear(f, to_dense(layer.w2), layer.b2);
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < cfg.h; ++j) h[i][j] += f2[i][j];
    norm(h, layer.ln2_gamma, layer.ln2_beta);
  }
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = static_cast<float>(h[i][j]);
  return out;
}

struct Runner {
  Tuner tuner;
  TuneCache cache;
  ExecContext ctx;

  explicit Runner(std::size_t budget = 1, std::uint64_t seed = 0, std::size_t max_threads = 1)
      : tuner(make_opts(seed, max_threads), "test-mode"), cache("test-mode"), ctx{tuner, cache, budget, {}} {}

  static TuneOptions make_opts(std::uint64_t seed, std::size_t max_threads) {
    TuneOptions o;
    o.seed = seed;
    o.max_threads = max_threads;
    o.test_mode = true;
    return o;
  }
};

DenseMatrix desk_input(std::uint64_t seed, std::size_t rows = 32) {
  std::mt19937_64 rng(seed);
  return random_dense(rows, 128, rng);
}

PruneConfig magnitude(BlockShape b, double target) {
  PruneConfig cfg;
  cfg.block = b;
  cfg.target_sparsity = target;
  return cfg;
}

TEST_CASE("layer configs") {
  CHECK(LayerConfig::desk() == LayerConfig{128, 4, 512, 2, 32});
  CHECK(LayerConfig::bert_base() == LayerConfig{768, 12, 3072, 12, 128});
  CHECK_THROWS_AS((LayerConfig{128, 3, 512, 2, 32}).check(), ConfigError);
  CHECK_THROWS_AS((LayerConfig{128, 4, 0, 2, 32}).check(), ConfigError);
  CHECK(matrix_name(MatrixId::kW2) == "w2");
}

TEST_CASE("init_weights is deterministic and shaped by the config") {
  auto a = init_weights(LayerConfig::desk(), 5);
  auto b = init_weights(LayerConfig::desk(), 5);
  auto c = init_weights(LayerConfig::desk(), 6);
  CHECK(std::get<DenseMatrix>(a.layers[1].w2) == std::get<DenseMatrix>(b.layers[1].w2));
  CHECK(a.layers[0].b1 == b.layers[0].b1);
  CHECK_FALSE(std::get<DenseMatrix>(a.layers[0].wq) == std::get<DenseMatrix>(c.layers[0].wq));
  CHECK(a.layers.size() == 2);
  CHECK(weight_rows(a.layers[0].w1) == 512);
  CHECK(weight_cols(a.layers[0].w1) == 128);
  a.check();

  // per layer: 4 h^2 + 2 h ffn weights, 5 h + ffn biases, 4 h layernorm
  CHECK(a.parameter_count() == 2 * (4 * 128 * 128 + 2 * 128 * 512 + 5 * 128 + 512 + 4 * 128));

  // sample standard deviation lands near 1/sqrt(h)
  const auto& wq = std::get<DenseMatrix>(a.layers[0].wq);
  double ss = 0;
  for (float v : wq.data()) ss += double(v) * v;
  CHECK(std::sqrt(ss / wq.size()) == doctest::Approx(1.0 / std::sqrt(128.0)).epsilon(0.02));
}

TEST_CASE("bert-base transformer blocks hold 85,054,464 parameters") {
  LayerConfig cfg = LayerConfig::bert_base();
  cfg.l = 1;
  const std::size_t one = init_weights(cfg, 1).parameter_count();
  CHECK(one * 12 == 85054464u);
}

TEST_CASE("sparsify at target 0 round-trips every matrix") {
  auto w = init_weights(LayerConfig::desk(), 2);
  auto s = sparsify_weights(w, magnitude({1, 32}, 0.0));
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    for (MatrixId id : kAllMatrices) {
      REQUIRE(is_bsr(s.layers[li].matrix(id)));
      CHECK(to_dense(s.layers[li].matrix(id)) == std::get<DenseMatrix>(w.layers[li].matrix(id)));
    }
  }
  CHECK(s.prune_log.size() == 12);
  CHECK(s.layers[0].b1 == w.layers[0].b1);
}

TEST_CASE("sparsify reports achieved sparsity per matrix") {
  auto w = init_weights(LayerConfig::desk(), 3);
  auto s = sparsify_weights(w, magnitude({1, 32}, 0.8));
  for (const auto& e : s.prune_log) {
    CAPTURE(matrix_name(e.matrix));
    // h x h: 512 blocks, ceil(409.6) = 410 pruned; FFN: 2048 blocks, ceil(1638.4) = 1639
    const double want = is_attention(e.matrix) ? 410.0 / 512 : 1639.0 / 2048;
    CHECK(e.achieved_sparsity == doctest::Approx(want).epsilon(1e-12));
    CHECK(e.block == BlockShape{1, 32});
    CHECK(e.seed == 3);
  }
}

TEST_CASE("1x384 blocks are valid on bert-base width weights") {
  LayerConfig cfg = LayerConfig::bert_base();
  cfg.l = 1;
  auto s = sparsify_weights(init_weights(cfg, 1), magnitude({1, 384}, 0.8));
  const auto& wq = std::get<BsrMatrix>(s.layers[0].wq);
  CHECK(wq.block_cols() == 2);
  // 1536 blocks, ceil(1228.8) = 1229 pruned
  CHECK(s.prune_log[0].achieved_sparsity == doctest::Approx(1229.0 / 1536).epsilon(1e-12));
  CHECK_THROWS_AS(sparsify_weights(init_weights(LayerConfig::desk(), 1), magnitude({1, 384}, 0.8)),
                  DimensionMismatch);
}

TEST_CASE("1x32 at 80% on bert-base width prunes ceil(0.8 * 18432) blocks") {
  LayerConfig cfg = LayerConfig::bert_base();
  cfg.l = 1;
  SparsifyOptions opts;
  opts.attention_only = true;
  auto s = sparsify_weights(init_weights(cfg, 1), magnitude({1, 32}, 0.8), opts);
  const auto& wq = std::get<BsrMatrix>(s.layers[0].wq);
  CHECK(wq.total_blocks() == 18432);
  CHECK(wq.n_blocks() == 18432 - 14746);
  CHECK(s.prune_log[0].achieved_sparsity == doctest::Approx(14746.0 / 18432).epsilon(1e-12));
}

TEST_CASE("attention-only pruning leaves the FFN dense") {
  auto w = init_weights(LayerConfig::desk(), 3);
  SparsifyOptions opts;
  opts.attention_only = true;
  auto s = sparsify_weights(w, magnitude({1, 32}, 0.5), opts);
  for (const auto& layer : s.layers) {
    CHECK(is_bsr(layer.wq));
    CHECK(is_bsr(layer.wo));
    CHECK_FALSE(is_bsr(layer.w1));
    CHECK_FALSE(is_bsr(layer.w2));
  }
  CHECK(s.prune_log.size() == 8);
}

TEST_CASE("shared masks give one structure per matrix shape") {
  auto w = init_weights(LayerConfig::desk(), 4);
  SparsifyOptions opts;
  opts.shared_masks = true;
  auto s = sparsify_weights(w, magnitude({1, 16}, 0.7), opts);
  std::set<std::uint64_t> digests;
  for (const auto& layer : s.layers)
    for (MatrixId id : kAllMatrices) digests.insert(structure_hash(std::get<BsrMatrix>(layer.matrix(id))));
  CHECK(digests.size() == 3);

  PruneConfig prox = magnitude({1, 16}, 0.0);
  prox.method = PruneMethod::kProximalStep;
  prox.lambda = 0.1;
  CHECK_THROWS_AS(sparsify_weights(w, prox, opts), ConfigError);
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(1);
  DenseMatrix x = random_dense(40, 33, rng, 10.0f);
  x(0, 0) = 1e4f;
  softmax_rows(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0;
    for (float v : x.row(i)) {
      CHECK(v >= 0.0f);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
}

TEST_CASE("gelu matches the tanh form") {
  CHECK(gelu(0.0f) == 0.0f);
  CHECK(gelu(1.0f) == doctest::Approx(0.841192).epsilon(1e-5));
  CHECK(gelu(-1.0f) == doctest::Approx(-0.158808).epsilon(1e-5));
  CHECK(gelu(10.0f) == doctest::Approx(10.0f));
}

TEST_CASE("forward matches the double-precision reference") {
  auto w = init_weights(LayerConfig::desk(), 7);
  const auto x = desk_input(8, 64);
  Runner r;
  const auto y = forward(x, w, r.ctx);
  CHECK(max_abs_diff(y, reference_forward(x, w)) <= 1e-4);
  CHECK(r.ctx.stats.projections == 12);
  CHECK(r.ctx.stats.modeled_ms > 0.0);

  auto s = sparsify_weights(w, magnitude({4, 4}, 0.6));
  CHECK(max_abs_diff(forward(x, s, r.ctx), reference_forward(x, s)) <= 1e-4);
}

TEST_CASE("dense and BSR tags of the same weights agree") {
  auto base = init_weights(LayerConfig::desk(), 11);
  const auto x = desk_input(12);
  for (const BlockShape b : testing::sweep_shapes()) {
    if (!b.divides(128, 128)) continue;
    CAPTURE(b.to_string());
    auto sparse = sparsify_weights(base, magnitude(b, 0.8));
    auto dense = densify_weights(sparse);
    Runner r1, r2;
    CHECK(max_abs_diff(forward(x, sparse, r1.ctx), forward(x, dense, r2.ctx)) <= 1e-4);
  }
}

TEST_CASE("zero input with zero biases gives finite deterministic output") {
  auto w = init_weights(LayerConfig::desk(), 13);
  for (auto& layer : w.layers) {
    for (auto* b : {&layer.bq, &layer.bk, &layer.bv, &layer.bo, &layer.b1, &layer.b2})
      std::fill(b->begin(), b->end(), 0.0f);
  }
  const DenseMatrix x(32, 128);
  Runner r;
  const auto y1 = forward(x, w, r.ctx);
  const auto y2 = forward(x, w, r.ctx);
  CHECK(y1 == y2);
  for (float v : y1.data()) CHECK(std::isfinite(v));

  // Zero queries and keys make every score 0, so attention weights are 1/seq.
  DenseMatrix scores(4, 32);
  softmax_rows(scores);
  for (float v : scores.data()) CHECK(v == doctest::Approx(1.0 / 32));
}

TEST_CASE("output does not depend on the schedules chosen") {
  auto w = sparsify_weights(init_weights(LayerConfig::desk(), 14), magnitude({1, 8}, 0.7));
  const auto x = desk_input(15);
  Runner base;
  const auto ref = forward(x, w, base.ctx);

  const auto keys = projection_tasks(w, x.rows());
  for (const Schedule& s : candidate_schedules(4, 1)) {
    CAPTURE(s.to_string());
    Runner r(1, 0, 4);
    for (const auto& k : keys) r.cache.insert(TuneRecord{k, s, 1.0, 5, "test-mode"});
    CHECK(max_abs_diff(forward(x, w, r.ctx), ref) <= 1e-5);
    CHECK(r.ctx.stats.cache_misses == 0);
  }
}

TEST_CASE("projection tuning reuses shared structures") {
  const auto x = desk_input(16);
  auto base = init_weights(LayerConfig::desk(), 16);

  SparsifyOptions shared;
  shared.shared_masks = true;
  auto s = sparsify_weights(base, magnitude({1, 32}, 0.8), shared);
  Runner r(4);
  forward(x, s, r.ctx);
  CHECK(r.tuner.tune_runs() <= 3);
  CHECK(r.tuner.tune_runs() == r.ctx.stats.cache_misses);
  CHECK(r.ctx.stats.cache_hits == 12 - r.tuner.tune_runs());

  auto own = sparsify_weights(base, magnitude({1, 32}, 0.8));
  Runner r2(4);
  forward(x, own, r2.ctx);
  CHECK(r2.tuner.tune_runs() == 6 * 2);

  // second pass is all hits
  const auto before = r2.tuner.measurements();
  forward(x, own, r2.ctx);
  CHECK(r2.tuner.measurements() == before);
}

TEST_CASE("forward rejects malformed inputs") {
  auto w = init_weights(LayerConfig::desk(), 1);
  Runner r;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(forward(random_dense(31, 128, rng), w, r.ctx), DimensionMismatch);
  CHECK_THROWS_AS(forward(random_dense(32, 64, rng), w, r.ctx), DimensionMismatch);
}

TEST_CASE("golden desk forward") {
  // Desk config, weights seed 2024, input seed 2025, 1x32 blocks at 80%.
  auto w = sparsify_weights(init_weights(LayerConfig::desk(), 2024), magnitude({1, 32}, 0.8));
  const auto x = desk_input(2025);
  const std::string path = std::string(BLOCKSPARSE_TEST_DATA_DIR) + "/forward_golden.json";

  std::vector<DenseMatrix> outs;
  for (std::size_t threads : {1, 2, 4}) {
    Runner r(8, 3, threads);
    outs.push_back(forward(x, w, r.ctx));
  }

  if (std::getenv("BLOCKSPARSE_UPDATE_GOLDEN") != nullptr) {
    const auto ref = reference_forward(x, w);
    REQUIRE(max_abs_diff(outs[0], ref) <= 1e-4);
    nlohmann::json j;
    j["weights_seed"] = 2024;
    j["input_seed"] = 2025;
    j["block"] = "1x32";
    j["target_sparsity"] = 0.8;
    j["rows"] = outs[0].rows();
    j["cols"] = outs[0].cols();
    j["output"] = std::vector<float>(outs[0].data().begin(), outs[0].data().end());
    std::ofstream(path) << j.dump() << "\n";
    MESSAGE("wrote " << path);
  }

  std::ifstream in(path);
  REQUIRE(in.good());
  const auto j = nlohmann::json::parse(in);
  const auto values = j.at("output").get<std::vector<float>>();
  REQUIRE(values.size() == 32 * 128);
  const DenseMatrix golden(32, 128, values);
  for (const auto& y : outs) CHECK(max_abs_diff(y, golden) <= 1e-5);
}

}  // namespace
}  // namespace blocksparse
