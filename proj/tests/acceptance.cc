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

// Acceptance checks AC1-AC9. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.
//
//   acceptance           AC1-AC6, AC8, AC9
//   acceptance --bench   AC7 (wall-clock speedup landscape, slow)

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "blocksparse/bench.h"
#include "blocksparse/bsr_io.h"
#include "blocksparse/cli.h"
#include "blocksparse/hardware.h"
#include "blocksparse/model.h"
#include "blocksparse/pruning.h"
#include "blocksparse/scheduler.h"
#include "blocksparse/toy_train.h"
#include "blocksparse/verify.h"
#include "test_util.h"

namespace bs = blocksparse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Sparsities as exact fractions so the pruned count is an integer ceiling.
struct Fraction {
  double value;
  std::size_t num, den;
};
constexpr Fraction kTaus[] = {{0.0, 0, 1}, {0.5, 1, 2}, {0.8, 4, 5}, {0.95, 19, 20}};

Outcome ac1_verify() {
  bs::VerifyOptions o;
  o.seed = 7;
  const auto res = bs::run_verify(o);
  double worst = 0.0;
  std::vector<std::pair<std::string, double>> combos;
  for (const auto& c : res.cases) {
    worst = std::max(worst, c.max_abs_diff);
    combos.emplace_back(c.block.to_string(), c.sparsity);
  }
  std::sort(combos.begin(), combos.end());
  combos.erase(std::unique(combos.begin(), combos.end()), combos.end());
  const bool pass = res.ok() && res.cases.size() == 200 && combos.size() == 56 && worst <= 1e-5 && res.seconds < 60;
  return {pass, std::to_string(res.cases.size()) + " instances over " + std::to_string(combos.size()) +
                    " shape/sparsity pairs, worst diff " + fmt("%.3g", worst) + ", " + fmt("%.2f", res.seconds) +
                    " s"};
}

Outcome ac2_pruning() {
  std::mt19937_64 rng(2);
  const bs::DenseMatrix w = bs::testing::random_dense(192, 768, rng);
  std::size_t checked = 0;
  std::size_t bad = 0;
  for (const auto& b : bs::default_sweep_shapes()) {
    const std::size_t gr = 192 / b.r, gc = 768 / b.c, n = gr * gc;
    // oracle norms and ranking
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < 192; ++i)
      for (std::size_t j = 0; j < 768; ++j) norms[(i / b.r) * gc + j / b.c] += double(w(i, j)) * w(i, j);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] < norms[y]; });
    for (const auto& tau : kTaus) {
      const std::size_t want = (tau.num * n + tau.den - 1) / tau.den;
      std::vector<std::uint8_t> keep(n, 1);
      for (std::size_t k = 0; k < want; ++k) keep[order[k]] = 0;
      bs::PruneConfig cfg;
      cfg.block = b;
      cfg.target_sparsity = tau.value;
      const auto res = bs::prune_to_sparsity(w, cfg);
      ++checked;
      if (res.pruned_blocks() != want || res.mask.data != keep) ++bad;
    }
  }
  return {bad == 0, std::to_string(checked) + " shape/sparsity pairs, " + std::to_string(bad) + " mismatches"};
}

Outcome ac3_proximal() {
  std::mt19937_64 rng(3);
  const bs::DenseMatrix w = bs::testing::random_dense(192, 768, rng, 0.1f);
  double worst = 0.0;
  for (const auto& b : bs::default_sweep_shapes()) {
    const auto before = bs::group_norms(w, b, bs::NormOrder::kL2);
    // threshold near the median norm so both branches occur
    std::vector<double> sorted = before.data;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double t = sorted[sorted.size() / 2];
    const auto after = bs::group_norms(bs::group_soft_threshold(w, b, t), b, bs::NormOrder::kL2);
    for (std::size_t k = 0; k < before.size(); ++k) {
      worst = std::max(worst, std::abs(after.data[k] - std::max(0.0, before.data[k] - t)));
    }
  }
  bool exact = true;
  for (double t : {0.0, 0.01, 0.05, 0.2}) {
    const auto a = bs::group_soft_threshold(w, {1, 1}, t);
    const auto e = bs::soft_threshold(w, t);
    for (std::size_t k = 0; k < a.size(); ++k) {
      exact = exact && std::bit_cast<std::uint32_t>(a.data()[k]) == std::bit_cast<std::uint32_t>(e.data()[k]);
    }
  }
  return {worst <= 1e-6 && exact,
          "worst block-norm error " + fmt("%.3g", worst) + ", 1x1 path " + (exact ? "bit-exact" : "differs")};
}

Outcome ac4_toy() {
  bs::PruneConfig cfg;
  cfg.block = {1, 4};
  cfg.lambda = 0.02;
  cfg.method = bs::PruneMethod::kProximalStep;
  double worst_agree = 1.0, worst_loss = 0.0;
  for (std::uint64_t seed : {1u, 7u, 2024u}) {
    const auto res = bs::toy_train(500, cfg, seed);
    worst_agree = std::min(
        worst_agree, bs::mask_agreement(bs::nonzero_mask(res.weights, {1, 4}), res.problem.planted_mask));
    worst_loss = std::max(worst_loss, res.loss_history.back() / res.initial_loss);
  }

  bs::ToyProblemOptions opts;
  opts.n_out = 8;
  opts.n_in = 8;
  opts.samples = 32;
  opts.noise = 0.1;
  const auto pb = bs::make_toy_problem(opts, {2, 2}, 5);
  bs::DenseMatrix w(8, 8);
  for (std::size_t k = 0; k < w.size(); ++k) w.data()[k] = 0.1f * static_cast<float>(k % 7) - 0.3f;
  const auto g = bs::toy_gradient(pb, w);
  double worst_rel = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    bs::DenseMatrix plus = w, minus = w;
    plus.data()[k] += 1e-2f;
    minus.data()[k] -= 1e-2f;
    const double fd = (bs::toy_loss(pb, plus) - bs::toy_loss(pb, minus)) /
                      (double(plus.data()[k]) - double(minus.data()[k]));
    worst_rel = std::max(worst_rel, std::abs(fd - g[k]) / std::max(1e-3, std::abs(g[k])));
  }
  const bool pass = worst_agree >= 0.9 && worst_loss < 0.1 && worst_rel <= 1e-3;
  return {pass, "mask overlap >= " + fmt("%.3f", worst_agree) + ", final/initial MSE <= " + fmt("%.4f", worst_loss) +
                    ", gradient rel err " + fmt("%.2g", worst_rel)};
}

struct TestRunner {
  bs::Tuner tuner;
  bs::TuneCache cache;
  bs::ExecContext ctx;
  TestRunner() : tuner(opts(), "test-mode"), cache("test-mode"), ctx{tuner, cache, 1, {}} {}
  static bs::TuneOptions opts() {
    bs::TuneOptions o;
    o.test_mode = true;
    return o;
  }
};

double tag_gap(const bs::LayerConfig& cfg, bs::BlockShape b, std::uint64_t seed) {
  bs::PruneConfig p;
  p.block = b;
  p.target_sparsity = 0.8;
  const auto sparse = bs::sparsify_weights(bs::init_weights(cfg, seed), p);
  const auto dense = bs::densify_weights(sparse);
  std::mt19937_64 rng(seed + 1);
  const auto x = bs::testing::random_dense(cfg.seq, cfg.h, rng);
  TestRunner a, c;
  return bs::testing::max_abs_diff(bs::forward(x, sparse, a.ctx), bs::forward(x, dense, c.ctx));
}

Outcome ac5_equivalence() {
  double desk = 0.0;
  std::size_t shapes = 0;
  for (const auto& b : bs::default_sweep_shapes()) {
    if (!b.divides(128, 128)) continue;
    desk = std::max(desk, tag_gap(bs::LayerConfig::desk(), b, 11));
    ++shapes;
  }
  const double bert = tag_gap(bs::LayerConfig::bert_base(), {1, 32}, 12);
  return {desk <= 1e-4 && bert <= 1e-4, "desk worst " + fmt("%.3g", desk) + " over " + std::to_string(shapes) +
                                            " shapes, bert-base 1x32 " + fmt("%.3g", bert)};
}

Outcome ac6_negative_control() {
  bs::BenchConfig c;
  c.layer = bs::LayerConfig::bert_base();
  c.layer.l = 2;
  c.block_shapes = {{1, 32}, {16, 16}};
  c.warmup = 2;
  c.repeats = 10;
  const auto r = bs::run_sweep(c);
  bool pass = true;
  std::string detail = "dense " + fmt("%.2f", r.rows[0].mean_ms) + " ms";
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    pass = pass && std::abs(r.rows[i].no_bsr_ratio - 1.0) <= 0.10;
    detail += ", " + r.rows[i].label + " control/dense " + fmt("%.3f", r.rows[i].no_bsr_ratio);
  }
  return {pass, detail + " (bert-base widths, 2 layers)"};
}

Outcome ac7_landscape() {
  const std::size_t cores = bs::hardware_cores();
  bs::BenchConfig c;
  c.layer = bs::LayerConfig::bert_base();
  c.block_shapes = {{1, 1}, {1, 16}, {1, 32}, {1, 384}};
  c.threads = cores;
  c.warmup = 1;
  c.repeats = 5;
  c.tuning_budget = 4;
  const auto r = bs::run_sweep(c);
  auto ratio = [&](bs::BlockShape b) {
    for (const auto& row : r.rows)
      if (row.block == b) return row.ratio_to_dense;
    return std::nan("");
  };
  const double r1 = ratio({1, 1}), r16 = ratio({1, 16}), r32 = ratio({1, 32}), r384 = ratio({1, 384});
  const bool a = r32 < 0.75, b = r1 > r16, cc = r384 > r32;
  std::string detail = "ratio 1x1 " + fmt("%.3f", r1) + ", 1x16 " + fmt("%.3f", r16) + ", 1x32 " + fmt("%.3f", r32) +
                       ", 1x384 " + fmt("%.3f", r384) + "; (a) " + (a ? "holds" : "fails") + ", (b) " +
                       (b ? "holds" : "fails") + ", (c) " + (cc ? "holds" : "fails");
  if (cores < 4) {
    return {false, "precondition unmet: " + std::to_string(cores) + " core(s), needs >= 4; measured anyway: " + detail};
  }
  return {a && b && cc, detail};
}

Outcome ac8_reuse() {
  bs::PruneConfig p;
  p.block = {1, 32};
  p.target_sparsity = 0.8;
  bs::SparsifyOptions shared;
  shared.shared_masks = true;
  const auto w = bs::sparsify_weights(bs::init_weights(bs::LayerConfig::bert_base(), 8), p, shared);
  std::mt19937_64 rng(9);
  const auto x = bs::testing::random_dense(128, 768, rng);
  TestRunner run;
  run.ctx.budget = 4;
  bs::forward(x, w, run.ctx);
  const auto tunes = run.tuner.tune_runs();
  const auto projections = run.ctx.stats.projections;
  return {tunes <= 3 && projections == 72,
          std::to_string(tunes) + " tuning runs for " + std::to_string(projections) + " projection matmuls"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome ac9_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "blocksparse_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ostringstream sink;
  bool same = true;
  for (const char* format : {"csv", "markdown", "json"}) {
    std::string out[2];
    for (int i = 0; i < 2; ++i) {
      const auto path = dir / ("run" + std::to_string(i) + "." + format);
      const int code = bs::cli_main({"bsrbench", "bench", "--sparsity", "0.8", "--test-mode", "--format", format,
                                     "--out", path.string()},
                                    sink, sink);
      out[i] = code == 0 ? slurp(path) + slurp(path.string() + ".plot.tsv") : "";
    }
    same = same && !out[0].empty() && out[0] == out[1];
  }
  std::filesystem::remove_all(dir);

  std::mt19937_64 rng(10);
  bool bits = true;
  for (const auto& b : bs::default_sweep_shapes()) {
    const auto d = bs::testing::random_block_sparse(192, 768, b, (192 / b.r) * (768 / b.c) / 2, rng);
    const auto m = bs::dense_to_bsr(d, b);
    const auto bytes = bs::serialize_bsr(m);
    const auto back = bs::deserialize_bsr(bytes);
    bits = bits && back == m && bs::serialize_bsr(back) == bytes;
  }
  return {same && bits, std::string("test-mode reports ") + (same ? "byte-identical" : "differ") +
                            " (csv, markdown, json, plot), BSR round trip " + (bits ? "bit-exact" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const bool bench = argc > 1 && std::string(argv[1]) == "--bench";
  std::vector<std::pair<const char*, std::function<Outcome()>>> criteria;
  if (bench) {
    criteria = {{"AC7", ac7_landscape}};
  } else {
    criteria = {{"AC1", ac1_verify},      {"AC2", ac2_pruning}, {"AC3", ac3_proximal},
                {"AC4", ac4_toy},         {"AC5", ac5_equivalence}, {"AC6", ac6_negative_control},
                {"AC8", ac8_reuse},       {"AC9", ac9_determinism}};
  }
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  %s [%.1f s]\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
