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

#include "blocksparse/scheduler.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <random>

#include "blocksparse/errors.h"
#include "hash.h"
#include "json.hpp"

namespace blocksparse {

using nlohmann::json;

std::string to_string(KernelKind kind) {
  return kind == KernelKind::kSparseDense ? "SparseDense" : "DenseMatmul";
}

KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "SparseDense") return KernelKind::kSparseDense;
  if (s == "DenseMatmul") return KernelKind::kDenseMatmul;
  throw ConfigError("unknown kernel kind '" + std::string(s) + "'");
}

std::size_t TaskKeyHash::operator()(const TaskKey& k) const noexcept {
  internal::Fnv1a h;
  h.add_u64(k.structure);
  h.add_u64(k.m);
  h.add_byte(static_cast<std::uint8_t>(k.kind));
  h.add_u64(k.block.r);
  h.add_u64(k.block.c);
  return static_cast<std::size_t>(h.digest());
}

TaskKey make_task_key(const BsrMatrix& w, std::size_t m) {
  return TaskKey{structure_hash(w), m, KernelKind::kSparseDense, w.block()};
}

TaskKey make_task_key(const DenseMatrix& w, std::size_t m) {
  internal::Fnv1a h;
  h.add_string("dense");
  h.add_u64(w.rows());
  h.add_u64(w.cols());
  return TaskKey{h.digest(), m, KernelKind::kDenseMatmul, BlockShape{1, 1}};
}

// --- serialization -----------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw IoError("bad structure digest '" + s + "'");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = s[i];
    int d;
    if (ch >= '0' && ch <= '9') {
      d = ch - '0';
    } else if (ch >= 'a' && ch <= 'f') {
      d = ch - 'a' + 10;
    } else {
      throw IoError("bad structure digest '" + s + "'");
    }
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

}  // namespace

std::string to_json_line(const TuneRecord& r) {
  json j = {
      {"key",
       {{"structure", hex64(r.key.structure)},
        {"m", r.key.m},
        {"kernel_kind", to_string(r.key.kind)},
        {"block", r.key.block.to_string()}}},
      {"sched",
       {{"tile_m", r.sched.tile_m},
        {"threads", r.sched.threads},
        {"unroll_c", r.sched.unroll_c},
        {"prefetch", r.sched.prefetch}}},
      {"measured_ms", r.measured_ms},
      {"trials", r.trials},
      {"hardware_tag", r.hardware_tag},
  };
  return j.dump();
}

TuneRecord tune_record_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    TuneRecord r;
    const json& k = j.at("key");
    r.key.structure = parse_hex64(k.at("structure").get<std::string>());
    r.key.m = k.at("m").get<std::size_t>();
    r.key.kind = parse_kernel_kind(k.at("kernel_kind").get<std::string>());
    r.key.block = BlockShape::parse(k.at("block").get<std::string>());
    const json& s = j.at("sched");
    r.sched.tile_m = s.at("tile_m").get<std::size_t>();
    r.sched.threads = s.at("threads").get<std::size_t>();
    r.sched.unroll_c = s.at("unroll_c").get<bool>();
    r.sched.prefetch = s.at("prefetch").get<bool>();
    r.measured_ms = j.at("measured_ms").get<double>();
    r.trials = j.at("trials").get<std::size_t>();
    r.hardware_tag = j.at("hardware_tag").get<std::string>();
    r.sched.check();
    if (!(r.measured_ms > 0.0) || r.trials < 1) throw IoError("tuning record out of range");
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed tuning record: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed tuning record: ") + e.what());
  }
}

// --- cost model and timing ------------------------------------------------------

namespace {

double tile_efficiency(std::size_t tile_m) {
  static const std::map<std::size_t, double> kEff = {{1, 0.25}, {4, 0.5}, {8, 0.75}, {16, 1.0}, {32, 0.9}};
  auto it = kEff.upper_bound(tile_m);
  return std::prev(it)->second;
}

std::uint64_t task_flops(WeightRef w, std::size_t m) {
  return std::visit(
      [m](const auto& ref) -> std::uint64_t {
        const auto& mat = ref.get();
        if constexpr (std::is_same_v<std::decay_t<decltype(mat)>, BsrMatrix>) {
          return flops_saved(mat, m).sparse_flops;
        } else {
          return 2ull * m * mat.rows() * mat.cols();
        }
      },
      w);
}

std::size_t operand_cols(WeightRef w) {
  return std::visit(
      [](const auto& ref) -> std::size_t {
        const auto& mat = ref.get();
        if constexpr (std::is_same_v<std::decay_t<decltype(mat)>, BsrMatrix>) {
          return mat.n_cols();
        } else {
          return mat.cols();
        }
      },
      w);
}

void run_once(WeightRef w, const DenseMatrix& x, const Schedule& sched) {
  std::visit(
      [&](const auto& ref) {
        const auto& mat = ref.get();
        if constexpr (std::is_same_v<std::decay_t<decltype(mat)>, BsrMatrix>) {
          (void)sparse_dense(x, mat, sched);
        } else {
          (void)dense_matmul(x, mat, sched);
        }
      },
      w);
}

}  // namespace

double cost_model_ms(WeightRef w, std::size_t m, const Schedule& sched) {
  sched.check();
  const double rate = 1e6 * static_cast<double>(sched.threads) * tile_efficiency(sched.tile_m) *
                      (sched.unroll_c ? 1.1 : 1.0) * (sched.prefetch ? 1.05 : 1.0);
  return 1e-3 + static_cast<double>(task_flops(w, m)) / rate;
}

std::vector<Schedule> candidate_schedules(std::size_t max_threads, std::uint64_t seed) {
  max_threads = std::max<std::size_t>(1, max_threads);
  const Schedule first = default_schedule(max_threads);
  std::vector<Schedule> rest;
  for (std::size_t tile : {1, 4, 8, 16, 32}) {
    for (std::size_t t = 1; t <= max_threads; ++t) {
      for (bool unroll : {true, false}) {
        for (bool pf : {false, true}) {
          Schedule s{tile, t, unroll, pf};
          if (!(s == first)) rest.push_back(s);
        }
      }
    }
  }
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = rest.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(rest[i - 1], rest[j]);
  }
  std::vector<Schedule> out;
  out.reserve(rest.size() + 1);
  out.push_back(first);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

Tuner::Tuner(TuneOptions opts, std::string hardware_tag) : opts_(opts), tag_(std::move(hardware_tag)) {
  if (opts_.trials < 1) throw ConfigError("tuner needs at least one trial");
  opts_.max_threads = std::max<std::size_t>(1, opts_.max_threads);
}

double Tuner::measure(WeightRef w, std::size_t m, const Schedule& sched) const {
  if (opts_.test_mode) return cost_model_ms(w, m, sched);
  const std::size_t k = operand_cols(w);
  std::mt19937_64 rng(opts_.seed ^ (0x9e3779b97f4a7c15ull * (m + 1)));
  std::normal_distribution<float> dist;
  DenseMatrix x(m, k);
  for (float& v : x.data()) v = dist(rng);

  for (std::size_t i = 0; i < opts_.warmup; ++i) run_once(w, x, sched);
  std::vector<double> times;
  times.reserve(opts_.trials);
  for (std::size_t i = 0; i < opts_.trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once(w, x, sched);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  return std::max(median, 1e-6);
}

TuneRecord Tuner::tune(const TaskKey& key, WeightRef w, std::size_t budget) {
  if (budget == 0) throw ConfigError("tuning budget must be >= 1");
  ++tune_runs_;
  const auto candidates = candidate_schedules(opts_.max_threads, opts_.seed);
  const std::size_t n = std::min(budget, candidates.size());
  TuneRecord best{key, candidates[0], 0.0, opts_.trials, tag_};
  for (std::size_t i = 0; i < n; ++i) {
    const double ms = measure(w, key.m, candidates[i]);
    ++measurements_;
    if (i == 0 || ms < best.measured_ms) {
      best.sched = candidates[i];
      best.measured_ms = ms;
    }
  }
  return best;
}

std::pair<TuneRecord, bool> Tuner::lookup_or_tune(TuneCache& cache, const TaskKey& key, WeightRef w,
                                                  std::size_t budget) {
  if (auto hit = cache.find(key)) return {*hit, true};
  auto rec = tune(key, w, budget);
  rec.hardware_tag = cache.hardware_tag();
  return {cache.insert(rec), false};
}

// --- cache -----------------------------------------------------------------------

TuneCache::TuneCache(std::string hardware_tag) : tag_(std::move(hardware_tag)) {}

std::optional<TuneRecord> TuneCache::find(const TaskKey& key) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

TuneRecord TuneCache::insert(const TuneRecord& r) {
  std::unique_lock lock(mu_);
  if (r.hardware_tag != tag_) return r;
  auto [it, fresh] = index_.try_emplace(r.key, records_.size());
  if (fresh) records_.push_back(r);
  return records_[it->second];
}

std::size_t TuneCache::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::vector<TuneRecord> TuneCache::records() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::size_t TuneCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return 0;
    throw IoError("cannot read tuning log " + path.string());
  }
  std::size_t loaded = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const TuneRecord r = tune_record_from_json(line);
    if (r.hardware_tag != tag_) continue;
    std::unique_lock lock(mu_);
    if (index_.try_emplace(r.key, records_.size()).second) {
      records_.push_back(r);
      ++loaded;
    }
  }
  return loaded;
}

void TuneCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write tuning log " + path.string());
  for (const auto& r : records()) out << to_json_line(r) << '\n';
  if (!out) throw IoError("write failed for tuning log " + path.string());
}

// --- ordering and pattern statistics ----------------------------------------------

std::vector<TaskKey> order_tasks(const std::vector<TaskKey>& keys) {
  using Group = std::pair<KernelKind, BlockShape>;
  std::map<Group, std::size_t> group_rank;
  std::unordered_map<std::uint64_t, std::size_t> digest_rank;
  std::vector<std::pair<std::size_t, std::size_t>> rank(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto g = group_rank.try_emplace({keys[i].kind, keys[i].block}, group_rank.size()).first->second;
    const auto d = digest_rank.try_emplace(keys[i].structure, digest_rank.size()).first->second;
    rank[i] = {g, d};
  }
  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  std::vector<TaskKey> out;
  out.reserve(keys.size());
  for (std::size_t i : order) out.push_back(keys[i]);
  return out;
}

PatternStats pattern_stats(const BsrMatrix& w) {
  PatternStats st;
  st.block_rows = w.block_rows();
  std::map<std::vector<std::uint32_t>, std::size_t> seen;
  for (std::size_t i = 0; i < st.block_rows; ++i) {
    auto row = w.row_indices(i);
    std::vector<std::uint32_t> pattern(row.begin(), row.end());
    auto [it, fresh] = seen.try_emplace(std::move(pattern), st.counts.size());
    if (fresh) st.counts.push_back(0);
    ++st.counts[it->second];
  }
  st.distinct_patterns = st.counts.size();
  if (st.block_rows > 0) {
    st.reuse_ratio = 1.0 - static_cast<double>(st.distinct_patterns) / static_cast<double>(st.block_rows);
  }
  return st;
}

}  // namespace blocksparse
