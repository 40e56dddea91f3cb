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

#include "blocksparse/bench.h"

#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include "blocksparse/errors.h"
#include "blocksparse/hardware.h"

namespace blocksparse {

const std::vector<BlockShape>& default_sweep_shapes() {
  static const std::vector<BlockShape> shapes = {{1, 1},   {1, 4},   {1, 8},  {1, 16}, {1, 32},
                                                 {1, 64},  {1, 128}, {1, 256}, {1, 384}, {4, 4},
                                                 {8, 8},   {16, 16}, {32, 32}, {64, 64}};
  return shapes;
}

void BenchConfig::check() const {
  layer.check();
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (repeats < 3) throw ConfigError("repeats must be >= 3");
  if (warmup < 1) throw ConfigError("warmup must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (tuning_budget < 1) throw ConfigError("tuning budget must be >= 1");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw ConfigError("sparsity must lie in [0, 1]");
  for (const auto& b : block_shapes) {
    if (b.r == 0 || b.c == 0) throw ConfigError("block dimensions must be positive");
  }
}

std::pair<double, double> mean_and_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::string bench_hardware_tag(const BenchConfig& cfg) {
  return cfg.test_mode ? std::string("test-mode") : hardware_tag();
}

namespace {

std::string utc_timestamp(bool test_mode) {
  if (test_mode) return "1970-01-01T00:00:00Z";
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Wall-clock or modeled time of one forward pass.
double timed_forward(const DenseMatrix& x, const EncoderWeights& w, ExecContext& ctx, bool test_mode) {
  // Count this pass from zero so equal passes give bit-equal modeled times.
  const double modeled_before = ctx.stats.modeled_ms;
  ctx.stats.modeled_ms = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  const DenseMatrix y = forward(x, w, ctx);
  const auto t1 = std::chrono::steady_clock::now();
  const double modeled = ctx.stats.modeled_ms;
  ctx.stats.modeled_ms += modeled_before;
  if (y.rows() != x.rows()) throw Error("forward returned the wrong shape");
  if (test_mode) return modeled;
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

struct FlopTotals {
  double executed = 0.0;
  double dense = 0.0;
};

FlopTotals projection_flops(const EncoderWeights& w, std::size_t m) {
  FlopTotals t;
  for (const auto& layer : w.layers) {
    for (MatrixId id : kAllMatrices) {
      const Weight& mat = layer.matrix(id);
      const double dense = 2.0 * static_cast<double>(m) * weight_rows(mat) * weight_cols(mat);
      t.dense += dense;
      t.executed += is_bsr(mat) ? static_cast<double>(flops_saved(std::get<BsrMatrix>(mat), m).sparse_flops) : dense;
    }
  }
  return t;
}

struct StructureSummary {
  std::size_t distinct = 0;
  double reuse = 0.0;
  double sparsity = 0.0;
};

StructureSummary summarize(const EncoderWeights& w) {
  StructureSummary s;
  std::size_t rows = 0;
  std::size_t blocks = 0;
  std::size_t kept = 0;
  for (const auto& layer : w.layers) {
    for (MatrixId id : kAllMatrices) {
      if (!is_bsr(layer.matrix(id))) continue;
      const auto& m = std::get<BsrMatrix>(layer.matrix(id));
      const auto st = pattern_stats(m);
      s.distinct += st.distinct_patterns;
      rows += st.block_rows;
      blocks += m.total_blocks();
      kept += m.n_blocks();
    }
  }
  if (rows > 0) s.reuse = 1.0 - static_cast<double>(s.distinct) / static_cast<double>(rows);
  if (blocks > 0) s.sparsity = 1.0 - static_cast<double>(kept) / static_cast<double>(blocks);
  return s;
}

bool shape_fits(const BenchConfig& cfg, BlockShape b) {
  const auto& l = cfg.layer;
  if (!b.divides(l.h, l.h)) return false;
  if (cfg.attention_only) return true;
  return b.divides(l.ffn, l.h) && b.divides(l.h, l.ffn);
}

}  // namespace

BenchReport run_sweep(const BenchConfig& cfg) {
  TuneCache cache(bench_hardware_tag(cfg));
  return run_sweep(cfg, cache);
}

BenchReport run_sweep(const BenchConfig& cfg, TuneCache& cache) {
  cfg.check();
  BenchReport report;
  report.config = cfg;
  report.hardware_tag = bench_hardware_tag(cfg);
  report.timestamp = utc_timestamp(cfg.test_mode);
  if (cache.hardware_tag() != report.hardware_tag) {
    throw ConfigError("tuning cache tag '" + cache.hardware_tag() + "' does not match '" + report.hardware_tag + "'");
  }

  TuneOptions topts;
  topts.seed = cfg.seed;
  topts.max_threads = cfg.threads;
  topts.test_mode = cfg.test_mode;
  Tuner tuner(topts, report.hardware_tag);
  ExecContext ctx{tuner, cache, cfg.tuning_budget, {}};

  const EncoderWeights base = init_weights(cfg.layer, cfg.seed);
  const std::size_t m = cfg.batch * cfg.layer.seq;
  DenseMatrix x(m, cfg.layer.h);
  {
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ull);
    std::normal_distribution<float> g;
    for (float& v : x.data()) v = g(rng);
  }
  auto time_once = [&](const EncoderWeights& w) { return timed_forward(x, w, ctx, cfg.test_mode); };

  std::vector<BlockShape> shapes;
  if (!cfg.baseline_only) {
    for (const auto& b : cfg.block_shapes) {
      if (shape_fits(cfg, b)) {
        shapes.push_back(b);
      } else {
        report.skipped.push_back({b, "indivisible"});
      }
    }
  }

  // Dense timings are pooled over the whole sweep: each shape interleaves its
  // repeats with dense and control repeats so slow drift hits all three alike.
  std::vector<double> dense_times;
  const std::size_t tunes_before_dense = tuner.tune_runs();
  for (std::size_t i = 0; i < cfg.warmup; ++i) time_once(base);
  const std::size_t dense_tunes = tuner.tune_runs() - tunes_before_dense;
  if (shapes.empty()) {
    for (std::size_t i = 0; i < cfg.repeats; ++i) dense_times.push_back(time_once(base));
  }

  struct Raw {
    BlockShape block;
    std::vector<double> sparse, control;
    FlopTotals flops;
    StructureSummary structure;
    std::size_t tunes = 0;
  };
  std::vector<Raw> raws;
  for (const BlockShape b : shapes) {
    PruneConfig pcfg;
    pcfg.block = b;
    pcfg.target_sparsity = cfg.sparsity;
    SparsifyOptions sopts;
    sopts.attention_only = cfg.attention_only;
    sopts.shared_masks = cfg.shared_masks;
    const EncoderWeights sparse = sparsify_weights(base, pcfg, sopts);
    const EncoderWeights control = densify_weights(sparse);

    Raw raw;
    raw.block = b;
    raw.flops = projection_flops(sparse, m);
    raw.structure = summarize(sparse);
    const std::size_t tunes_before = tuner.tune_runs();
    for (std::size_t i = 0; i < cfg.warmup; ++i) {
      time_once(sparse);
      time_once(control);
    }
    raw.tunes = tuner.tune_runs() - tunes_before;
    for (std::size_t i = 0; i < cfg.repeats; ++i) {
      dense_times.push_back(time_once(base));
      raw.sparse.push_back(time_once(sparse));
      raw.control.push_back(time_once(control));
    }
    raws.push_back(std::move(raw));
  }

  const auto [dense_mean, dense_std] = mean_and_std(dense_times);
  if (!(dense_mean > 0.0)) throw Error("dense baseline measured no time");
  BenchRow dense;
  dense.label = "Dense";
  dense.mean_ms = dense_mean;
  dense.std_ms = dense_std;
  dense.ratio_to_dense = 1.0;
  dense.ratio_std = dense_std / dense_mean;
  dense.no_bsr_mean_ms = dense_mean;
  dense.no_bsr_std_ms = dense_std;
  dense.no_bsr_ratio = 1.0;
  dense.flops_ratio = 1.0;
  dense.tune_runs = dense_tunes;
  report.rows.push_back(dense);

  for (const auto& raw : raws) {
    BenchRow row;
    row.label = raw.block.to_string();
    row.block = raw.block;
    std::tie(row.mean_ms, row.std_ms) = mean_and_std(raw.sparse);
    std::tie(row.no_bsr_mean_ms, row.no_bsr_std_ms) = mean_and_std(raw.control);
    row.ratio_to_dense = row.mean_ms / dense_mean;
    row.ratio_std = row.std_ms / dense_mean;
    row.no_bsr_ratio = row.no_bsr_mean_ms / dense_mean;
    row.flops_ratio = raw.flops.executed / raw.flops.dense;
    row.distinct_patterns = raw.structure.distinct;
    row.reuse_ratio = raw.structure.reuse;
    row.achieved_sparsity = raw.structure.sparsity;
    row.tune_runs = raw.tunes;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace blocksparse
