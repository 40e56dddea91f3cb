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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "blocksparse/errors.h"
#include "doctest.h"

namespace blocksparse {
namespace {

BenchConfig quick(bool test_mode = true) {
  BenchConfig c;
  c.warmup = 1;
  c.repeats = 3;
  c.test_mode = test_mode;
  return c;
}

// bert-base widths, one layer, short sequences: every sweep shape divides.
BenchConfig wide() {
  BenchConfig c = quick();
  c.layer = LayerConfig{768, 12, 3072, 1, 8};
  return c;
}

const BenchRow& row_for(const BenchReport& r, BlockShape b) {
  for (const auto& row : r.rows) {
    if (row.block == b) return row;
  }
  FAIL("no row for " << b.to_string());
  return r.rows.front();
}

TEST_CASE("default sweep lists the fourteen shapes") {
  const auto& s = default_sweep_shapes();
  REQUIRE(s.size() == 14);
  CHECK(s.front() == BlockShape{1, 1});
  CHECK(s[8] == BlockShape{1, 384});
  CHECK(s.back() == BlockShape{64, 64});
}

TEST_CASE("bench config validation") {
  BenchConfig c = quick();
  c.repeats = 2;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c = quick();
  c.warmup = 0;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c = quick();
  c.sparsity = 1.5;
  CHECK_THROWS_AS(c.check(), ConfigError);
  CHECK(BenchConfig{}.repeats == 20);
  CHECK(BenchConfig{}.warmup == 3);
}

TEST_CASE("mean and sample standard deviation") {
  auto [m, s] = mean_and_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("baseline-only sweep is a single dense row") {
  BenchConfig c = quick();
  c.baseline_only = true;
  const auto r = run_sweep(c);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].label == "Dense");
  CHECK_FALSE(r.rows[0].block.has_value());
  CHECK(r.rows[0].ratio_to_dense == 1.0);
  CHECK(r.rows[0].mean_ms > 0.0);
  CHECK(r.hardware_tag == "test-mode");
  CHECK(r.timestamp == "1970-01-01T00:00:00Z");
}

TEST_CASE("full sweep at bert-base width has fifteen rows") {
  const auto r = run_sweep(wide());
  REQUIRE(r.rows.size() == 15);
  CHECK(r.skipped.empty());
  CHECK(r.rows[0].ratio_to_dense == 1.0);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].block == default_sweep_shapes()[i - 1]);
    CHECK(r.rows[i].ratio_to_dense > 0.0);
    CHECK(r.rows[i].distinct_patterns > 0);
  }
}

TEST_CASE("indivisible shapes are skipped and the sweep goes on") {
  BenchConfig c = quick();
  c.block_shapes = {{1, 32}, {1, 384}, {16, 16}};
  const auto r = run_sweep(c);
  CHECK(r.rows.size() == 3);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].block == BlockShape{1, 384});
  CHECK(r.skipped[0].reason == "indivisible");
  CHECK(report_markdown(r).find("skipped: indivisible") != std::string::npos);
  CHECK(report_csv(r).find("384") == std::string::npos);
}

TEST_CASE("flops ratio equals the kept block fraction") {
  BenchConfig c = quick();
  c.block_shapes = {{1, 8}, {4, 4}, {1, 128}};
  for (double tau : {0.0, 0.5, 0.8}) {
    CAPTURE(tau);
    c.sparsity = tau;
    const auto r = run_sweep(c);
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
      CHECK(r.rows[i].flops_ratio == doctest::Approx(1.0 - r.rows[i].achieved_sparsity).epsilon(1e-12));
      CHECK(r.rows[i].achieved_sparsity >= tau);
      CHECK(r.rows[i].achieved_sparsity < tau + 0.01);
    }
  }
}

TEST_CASE("sparsity 0 keeps every ratio near 1") {
  BenchConfig c = quick();
  c.sparsity = 0.0;
  c.block_shapes = {{1, 1}, {1, 32}, {16, 16}};
  const auto r = run_sweep(c);
  for (const auto& row : r.rows) {
    CAPTURE(row.label);
    CHECK(row.ratio_to_dense == doctest::Approx(1.0).epsilon(0.15));
    CHECK(row.no_bsr_ratio == doctest::Approx(1.0).epsilon(0.15));
  }
}

TEST_CASE("test-mode reports are byte identical across runs") {
  BenchConfig c = quick();
  c.block_shapes = {{1, 32}, {8, 8}};
  const auto a = run_sweep(c);
  const auto b = run_sweep(c);
  CHECK(report_json(a) == report_json(b));
  CHECK(report_csv(a) == report_csv(b));
  CHECK(report_markdown(a) == report_markdown(b));
  CHECK(report_plot_data(a) == report_plot_data(b));
}

TEST_CASE("json and csv round trips keep numbers exactly") {
  BenchConfig c = wide();
  c.test_mode = false;
  c.block_shapes = {{1, 32}, {16, 16}};
  const auto r = run_sweep(c);
  const auto back = report_from_json(report_json(r));
  CHECK(back.rows == r.rows);
  CHECK(back.skipped == r.skipped);
  CHECK(report_json(back) == report_json(r));

  const auto csv_rows = rows_from_csv(report_csv(back));
  REQUIRE(csv_rows.size() == r.rows.size());
  for (std::size_t i = 0; i < csv_rows.size(); ++i) {
    CHECK(csv_rows[i].label == r.rows[i].label);
    CHECK(csv_rows[i].block == r.rows[i].block);
    CHECK(csv_rows[i].mean_ms == r.rows[i].mean_ms);
    CHECK(csv_rows[i].std_ms == r.rows[i].std_ms);
    CHECK(csv_rows[i].ratio_to_dense == r.rows[i].ratio_to_dense);
    CHECK(csv_rows[i].no_bsr_ratio == r.rows[i].no_bsr_ratio);
    CHECK(csv_rows[i].flops_ratio == r.rows[i].flops_ratio);
    CHECK(csv_rows[i].distinct_patterns == r.rows[i].distinct_patterns);
  }
  CHECK_THROWS_AS(report_from_json("{}"), IoError);
  CHECK_THROWS_AS(rows_from_csv("wrong,header\n"), IoError);
}

TEST_CASE("csv layout") {
  BenchConfig c = quick();
  c.block_shapes = {{1, 32}};
  const auto csv = report_csv(run_sweep(c));
  std::istringstream in(csv);
  std::string header, dense, sparse;
  std::getline(in, header);
  std::getline(in, dense);
  std::getline(in, sparse);
  CHECK(header == "label,block_r,block_c,mean_ms,std_ms,ratio_to_dense,no_bsr_ratio,flops_ratio,distinct_patterns");
  CHECK(dense.rfind("Dense,,,", 0) == 0);
  CHECK(sparse.rfind("1x32,1,32,", 0) == 0);
}

TEST_CASE("emit_report writes the report and the plot data") {
  const auto dir = std::filesystem::temp_directory_path() / "blocksparse_bench_test";
  std::filesystem::create_directories(dir);
  BenchConfig c = quick();
  c.block_shapes = {{1, 16}};
  const auto r = run_sweep(c);
  emit_report(r, ReportFormat::kMarkdown, dir / "report.md");
  CHECK(std::filesystem::exists(dir / "report.md"));
  std::ifstream plot(dir / "report.md.plot.tsv");
  std::string head, first;
  std::getline(plot, head);
  std::getline(plot, first);
  CHECK(head.rfind("index\tlabel\tratio_to_dense", 0) == 0);
  CHECK(first.rfind("0\tDense\t1\t", 0) == 0);
  CHECK_THROWS_AS(emit_report(r, ReportFormat::kCsv, dir / "missing" / "x.csv"), IoError);
  std::filesystem::remove_all(dir);

  CHECK(parse_report_format("md") == ReportFormat::kMarkdown);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}

TEST_CASE("a cache with another hardware tag is rejected") {
  TuneCache cache("elsewhere");
  CHECK_THROWS_AS(run_sweep(quick(), cache), ConfigError);
}

TEST_CASE("a shared cache carries tuned schedules into the next sweep") {
  BenchConfig c = quick();
  c.block_shapes = {{1, 32}};
  TuneCache cache("test-mode");
  const auto first = run_sweep(c, cache);
  CHECK(first.rows[1].tune_runs > 0);
  const auto second = run_sweep(c, cache);
  CHECK(second.rows[0].tune_runs == 0);
  CHECK(second.rows[1].tune_runs == 0);
}

TEST_CASE("wall-clock sweep: 1x32 beats 1x1 at 80% on the desk config") {
  BenchConfig c = quick(false);
  c.repeats = 5;
  c.block_shapes = {{1, 1}, {1, 32}};
  const auto r = run_sweep(c);
  CHECK(row_for(r, {1, 32}).ratio_to_dense < row_for(r, {1, 1}).ratio_to_dense);
}

}  // namespace
}  // namespace blocksparse
