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

#ifndef BLOCKSPARSE_BENCH_H_
#define BLOCKSPARSE_BENCH_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blocksparse/bsr.h"
#include "blocksparse/model.h"
#include "blocksparse/scheduler.h"

namespace blocksparse {

/// The fourteen block shapes of the standard sweep, 1x1 through 64x64.
const std::vector<BlockShape>& default_sweep_shapes();

struct BenchConfig {
  LayerConfig layer = LayerConfig::desk();
  /// Sequences per forward; x has batch * layer.seq rows.
  std::size_t batch = 1;
  double sparsity = 0.8;
  std::vector<BlockShape> block_shapes = default_sweep_shapes();
  std::size_t warmup = 3;
  std::size_t repeats = 20;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::size_t tuning_budget = 8;
  /// Only the dense row.
  bool baseline_only = false;
  bool attention_only = false;
  bool shared_masks = false;
  /// Cost-model timings, fixed timestamp and hardware tag: byte-stable output.
  bool test_mode = false;

  /// Throws ConfigError: repeats >= 3, warmup >= 1, threads >= 1, budget >= 1,
  /// sparsity in [0, 1], valid layer config.
  void check() const;
};

struct BenchRow {
  std::string label;
  /// Empty for the dense row.
  std::optional<BlockShape> block;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double ratio_to_dense = 1.0;
  /// std_ms over the dense mean.
  double ratio_std = 0.0;
  /// Same pruned weights run through the dense kernel.
  double no_bsr_mean_ms = 0.0;
  double no_bsr_std_ms = 0.0;
  double no_bsr_ratio = 1.0;
  /// Projection flops executed over dense projection flops.
  double flops_ratio = 1.0;
  /// Summed over the BSR matrices of the stack.
  std::size_t distinct_patterns = 0;
  double reuse_ratio = 0.0;
  double achieved_sparsity = 0.0;
  std::size_t tune_runs = 0;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct SkippedShape {
  BlockShape block;
  std::string reason;

  friend bool operator==(const SkippedShape&, const SkippedShape&) = default;
};

struct BenchReport {
  BenchConfig config;
  std::string hardware_tag;
  std::string timestamp;
  /// Dense row first, then the valid shapes in request order.
  std::vector<BenchRow> rows;
  std::vector<SkippedShape> skipped;
};

/// Mean and sample standard deviation (n - 1).
std::pair<double, double> mean_and_std(const std::vector<double>& xs);

/// Runs the sweep. Shapes that do not divide every targeted matrix are listed
/// under `skipped` and the sweep continues. Tuned schedules go through
/// `cache`, whose hardware tag must match the run.
BenchReport run_sweep(const BenchConfig& cfg, TuneCache& cache);
/// Same, with a cache private to the run.
BenchReport run_sweep(const BenchConfig& cfg);

/// "test-mode" in test mode, else hardware_tag().
std::string bench_hardware_tag(const BenchConfig& cfg);

enum class ReportFormat { kCsv, kMarkdown, kJson };
/// "csv", "markdown" (or "md"), "json"; ConfigError otherwise.
ReportFormat parse_report_format(std::string_view s);

std::string report_csv(const BenchReport& r);
std::string report_markdown(const BenchReport& r);
std::string report_json(const BenchReport& r);
/// Block index (1-based request order) against ratio, tab separated.
std::string report_plot_data(const BenchReport& r);

BenchReport report_from_json(std::string_view text);
/// Parses rows written by report_csv. Fields absent from the CSV stay at
/// their defaults.
std::vector<BenchRow> rows_from_csv(std::string_view text);

/// Writes the report in `format` to `path` and the plot data next to it as
/// `<path>.plot.tsv`. Throws IoError on write failure.
void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_BENCH_H_
