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

#ifndef BLOCKSPARSE_SCHEDULER_H_
#define BLOCKSPARSE_SCHEDULER_H_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "blocksparse/bsr.h"
#include "blocksparse/kernels.h"

namespace blocksparse {

enum class KernelKind { kSparseDense, kDenseMatmul };

std::string to_string(KernelKind kind);
/// Accepts "SparseDense" and "DenseMatmul"; throws ConfigError otherwise.
KernelKind parse_kernel_kind(std::string_view s);

/// Identity of one matmul task. `block` duplicates information already in
/// the digest; it is carried so tasks can be grouped by shape without
/// re-deriving it. Dense tasks use block 1x1.
struct TaskKey {
  std::uint64_t structure = 0;
  std::size_t m = 0;
  KernelKind kind = KernelKind::kSparseDense;
  BlockShape block;

  friend bool operator==(const TaskKey&, const TaskKey&) = default;
  friend auto operator<=>(const TaskKey&, const TaskKey&) = default;
};

struct TaskKeyHash {
  std::size_t operator()(const TaskKey& k) const noexcept;
};

/// Key for Y = X * W^T with m rows of X. The dense digest covers only the
/// kernel kind and the weight shape.
TaskKey make_task_key(const BsrMatrix& w, std::size_t m);
TaskKey make_task_key(const DenseMatrix& w, std::size_t m);

struct TuneRecord {
  TaskKey key;
  Schedule sched;
  double measured_ms = 0.0;
  std::size_t trials = 0;
  std::string hardware_tag;

  friend bool operator==(const TuneRecord&, const TuneRecord&) = default;
};

/// One JSON object per record, no trailing newline. The digest is written as
/// a 16-digit hex string; JSON numbers cannot carry 64 bits exactly.
std::string to_json_line(const TuneRecord& r);
/// Throws IoError on malformed input.
TuneRecord tune_record_from_json(std::string_view line);

/// A non-owning reference to the weight operand of a task.
using WeightRef = std::variant<std::reference_wrapper<const BsrMatrix>,
                               std::reference_wrapper<const DenseMatrix>>;

/// Modeled runtime in ms: flops / (1e6 * threads * eff(tile_m) * unroll
/// bonus * prefetch bonus), plus a fixed 1e-3 ms per call. eff is
/// {1: 0.25, 4: 0.5, 8: 0.75, 16: 1.0, 32: 0.9}; tiles between entries use
/// the largest entry not above them. unroll_c scales by 1.1, prefetch by 1.05.
double cost_model_ms(WeightRef w, std::size_t m, const Schedule& sched);

struct TuneOptions {
  std::uint64_t seed = 0;
  /// Upper bound of the threads axis of the search space.
  std::size_t max_threads = 1;
  std::size_t warmup = 2;
  std::size_t trials = 5;
  /// Replace wall-clock timing with cost_model_ms.
  bool test_mode = false;
};

/// Every schedule in the search space, default_schedule(max_threads) first
/// and the rest in a seeded shuffle.
std::vector<Schedule> candidate_schedules(std::size_t max_threads, std::uint64_t seed);

class TuneCache;

/// Measures candidate schedules. Measurements run sequentially.
class Tuner {
 public:
  explicit Tuner(TuneOptions opts, std::string hardware_tag);

  /// Measures the first `budget` candidates (at least one) and returns the
  /// fastest; ties keep the earlier candidate. Throws ConfigError if
  /// budget == 0.
  TuneRecord tune(const TaskKey& key, WeightRef w, std::size_t budget);

  /// Stored record on an exact key match (no measurement), else tune and
  /// insert. The flag is true on a hit.
  std::pair<TuneRecord, bool> lookup_or_tune(TuneCache& cache, const TaskKey& key, WeightRef w,
                                             std::size_t budget);

  /// Median time of one schedule, in ms, under this tuner's timer.
  double measure(WeightRef w, std::size_t m, const Schedule& sched) const;

  const TuneOptions& options() const { return opts_; }
  const std::string& hardware_tag() const { return tag_; }

  /// Calls to tune(), including those made on lookup misses.
  std::size_t tune_runs() const { return tune_runs_; }
  /// Candidate measurements taken so far.
  std::size_t measurements() const { return measurements_; }

 private:
  TuneOptions opts_;
  std::string tag_;
  std::size_t tune_runs_ = 0;
  std::size_t measurements_ = 0;
};

/// Tuned records keyed by TaskKey for one hardware tag. Lookups take a shared
/// lock; inserts are exclusive.
class TuneCache {
 public:
  explicit TuneCache(std::string hardware_tag);

  const std::string& hardware_tag() const { return tag_; }

  std::optional<TuneRecord> find(const TaskKey& key) const;
  /// Keeps an existing record for the same key and returns it; otherwise
  /// stores r. Records carrying another hardware tag are ignored.
  TuneRecord insert(const TuneRecord& r);
  std::size_t size() const;
  /// In insertion order.
  std::vector<TuneRecord> records() const;

  /// Reads a JSON-lines log, skipping blank lines and records whose hardware
  /// tag differs. A missing file is not an error. Returns the count loaded.
  std::size_t load(const std::filesystem::path& path);
  /// Rewrites the log with every record in insertion order.
  void save(const std::filesystem::path& path) const;

 private:
  std::string tag_;
  mutable std::shared_mutex mu_;
  std::unordered_map<TaskKey, std::size_t, TaskKeyHash> index_;
  std::vector<TuneRecord> records_;
};

/// Groups keys by (kind, block shape) and, inside a group, by digest. Groups
/// and digests appear in order of first occurrence; equal keys keep their
/// input order.
std::vector<TaskKey> order_tasks(const std::vector<TaskKey>& keys);

struct PatternStats {
  std::size_t block_rows = 0;
  std::size_t distinct_patterns = 0;
  /// 1 - distinct / block_rows; 0 for a matrix with no block rows.
  double reuse_ratio = 0.0;
  /// Rows per distinct pattern, in order of first occurrence.
  std::vector<std::size_t> counts;
};

/// Distinct `indices` slices across block rows.
PatternStats pattern_stats(const BsrMatrix& w);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_SCHEDULER_H_
