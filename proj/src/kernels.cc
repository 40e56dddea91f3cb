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

#include "blocksparse/kernels.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstring>
#include <new>
#include <vector>

#include "blocksparse/errors.h"

namespace blocksparse {

void Schedule::check() const {
  if (tile_m < 1) throw ConfigError("schedule tile_m must be >= 1");
  if (threads < 1) throw ConfigError("schedule threads must be >= 1");
}

std::string Schedule::to_string() const {
  return "tile_m=" + std::to_string(tile_m) + " threads=" + std::to_string(threads) +
         " unroll_c=" + (unroll_c ? "1" : "0") + " prefetch=" + (prefetch ? "1" : "0");
}

Schedule default_schedule(std::size_t threads) {
  return Schedule{16, std::max<std::size_t>(threads, 1), true, false};
}

FlopCount flops_saved(const BsrMatrix& w, std::size_t m) {
  FlopCount f;
  f.dense_flops = 2ull * m * w.n_rows() * w.n_cols();
  f.sparse_flops = 2ull * m * w.n_blocks() * w.block().area();
  return f;
}

bool has_specialized_kernel(BlockShape block) {
  if (block.r == 1) return block.c == 4 || block.c == 8 || block.c == 16 || block.c == 32;
  return block.r == 16 && block.c == 16;
}

namespace debug {
namespace {
std::atomic<bool> g_counter_enabled{false};
std::atomic<std::uint64_t> g_block_multiplies{0};
}  // namespace

void set_block_counter_enabled(bool enabled) { g_counter_enabled.store(enabled); }
void reset_block_counter() { g_block_multiplies.store(0); }
std::uint64_t block_multiplies() { return g_block_multiplies.load(); }
}  // namespace debug

namespace {

// Rows of output handled by one task.
constexpr std::size_t kRowGroup = 8;
constexpr int kDenseRows = 8;

struct SparseView {
  const std::uint32_t* indptr;
  const std::uint32_t* indices;
  const float* values;
  std::size_t r;
  std::size_t c;
};

struct DenseView {
  const float* w;
  std::size_t k;
};

// One row tile of X, packed K-major: panel[k * T + mm] = X(m0 + mm, k).
struct TileCtx {
  const float* panel;
  float* y;
  std::size_t ldy;
  std::size_t m0;
  std::size_t m_valid;
};

inline void prefetch(const void* p) { __builtin_prefetch(p, 0, 3); }

// Panels are read with full-width vector loads; keep them on cache-line boundaries.
template <typename V>
struct CacheAligned {
  using value_type = V;
  CacheAligned() = default;
  template <typename U>
  CacheAligned(const CacheAligned<U>&) {}
  V* allocate(std::size_t n) {
    return static_cast<V*>(::operator new(n * sizeof(V), std::align_val_t{64}));
  }
  void deallocate(V* p, std::size_t) { ::operator delete(p, std::align_val_t{64}); }
  friend bool operator==(const CacheAligned&, const CacheAligned&) = default;
};

using PanelBuffer = std::vector<float, CacheAligned<float>>;

template <int T>
void pack_panels(const DenseMatrix& x, PanelBuffer& out) {
  const std::size_t M = x.rows();
  const std::size_t K = x.cols();
  const std::size_t tiles = (M + T - 1) / T;
  out.assign(tiles * K * T, 0.0f);
  for (std::size_t t = 0; t < tiles; ++t) {
    float* panel = out.data() + t * K * T;
    const std::size_t rows = std::min<std::size_t>(T, M - t * T);
    for (std::size_t mm = 0; mm < rows; ++mm) {
      auto src = x.row(t * T + mm);
      for (std::size_t k = 0; k < K; ++k) panel[k * T + mm] = src[k];
    }
  }
}

using SparseGroupFn = void (*)(const SparseView&, const TileCtx&, std::size_t, std::size_t);
using DenseGroupFn = void (*)(const DenseView&, const TileCtx&, std::size_t, std::size_t);

struct SparseKernel {
  SparseGroupFn fn;
  std::size_t rows;  // block rows per task
};

// T output rows of one column, held as T / W vectors of W floats.
template <int W>
struct VecOf {
  // The attribute is dropped on a plain alias template, so it lives in a class.
  typedef float type __attribute__((vector_size(W * sizeof(float))));
};

template <>
struct VecOf<1> {
  using type = float;
};

template <int T>
struct Lane {
  static constexpr int kWidth = T >= 16 ? 16 : T;
  static constexpr int kCount = T / kWidth;
  using Vec = typename VecOf<kWidth>::type;
  Vec v[kCount];

  // this += w * x[0..T)
  void fma(float w, const float* x) {
    if constexpr (kWidth == 1) {
      // A scalar loop may be vectorized as an in-order reduction, which
      // splits the multiply from the add. Fuse explicitly when the vector
      // paths fuse too.
#ifdef __FMA__
      v[0] = std::fma(w, *x, v[0]);
#else
      v[0] += w * *x;
#endif
      return;
    }
    for (int i = 0; i < kCount; ++i) {
      Vec xv;
      std::memcpy(&xv, x + i * kWidth, sizeof(xv));
      v[i] += w * xv;
    }
  }
};

template <int T, std::size_t N>
inline void store_lanes(const TileCtx& ctx, std::size_t n0, std::size_t count, const Lane<T> (&acc)[N]) {
  static_assert(sizeof(Lane<T>) == T * sizeof(float));
  // Vector types share the alias set of their element type.
  const float* src = reinterpret_cast<const float*>(acc);
  for (std::size_t mm = 0; mm < ctx.m_valid; ++mm) {
    float* dst = ctx.y + (ctx.m0 + mm) * ctx.ldy + n0;
    for (std::size_t g = 0; g < count; ++g) dst[g] = src[g * T + mm];
  }
}

// --- sparse: 1xC blocks -------------------------------------------------------

// Blocks p.. of one row whose block column is below j1. C == 0 reads the
// width from the view. Returns the first position not consumed.
template <int T, int C>
std::uint32_t row_chunk_1xc(Lane<T>& acc, const SparseView& w, const float* panel, std::uint32_t p,
                            std::uint32_t end, std::uint32_t j1) {
  const std::size_t c = C != 0 ? C : w.c;
  Lane<T> a = acc;
  for (; p < end && w.indices[p] < j1; ++p) {
    const float* wv = w.values + static_cast<std::size_t>(p) * c;
    const float* xp = panel + static_cast<std::size_t>(w.indices[p]) * c * T;
    if constexpr (C != 0) {
#pragma GCC unroll 32
      for (int b = 0; b < C; ++b) a.fma(wv[b], xp + b * T);
    } else {
#pragma GCC unroll 4
      for (std::size_t b = 0; b < c; ++b) a.fma(wv[b], xp + b * T);
    }
  }
  acc = a;
  return p;
}

// A wide row group is walked one K chunk at a time so the panel slice stays
// in L1 while every row of the group reads it.
constexpr std::size_t kChunkRows = 64;
constexpr std::size_t kChunkCols = 256;

template <int T, int C, bool Prefetch>
void sparse_chunked_1xc(const SparseView& w, const TileCtx& ctx, std::size_t row0, std::size_t count) {
  Lane<T> acc[kChunkRows] = {};
  std::uint32_t cur[kChunkRows];
  std::uint32_t end[kChunkRows];
  std::size_t nb = 0;
  for (std::size_t g = 0; g < count; ++g) {
    cur[g] = w.indptr[row0 + g];
    end[g] = w.indptr[row0 + g + 1];
    if (end[g] > cur[g]) nb = std::max<std::size_t>(nb, w.indices[end[g] - 1] + 1);
  }
  const std::size_t c = C != 0 ? C : w.c;
  const std::size_t step = std::max<std::size_t>(1, kChunkCols / c);
  for (std::size_t j0 = 0; j0 < nb; j0 += step) {
    const auto j1 = static_cast<std::uint32_t>(j0 + step);
    if constexpr (Prefetch) {
      if (j1 < nb) prefetch(ctx.panel + j1 * c * T);
    }
    for (std::size_t g = 0; g < count; ++g) {
      if (cur[g] < end[g] && w.indices[cur[g]] < j1)
        cur[g] = row_chunk_1xc<T, C>(acc[g], w, ctx.panel, cur[g], end[g], j1);
    }
  }
  store_lanes<T>(ctx, row0, count, acc);
}

// --- sparse: RxC blocks, R > 1 ----------------------------------------------
//
// Each block row is processed in strips of S output rows whose accumulators
// stay in registers across all of the row's blocks. Per output the sum runs
// over blocks in indices order, then columns in ascending order.
template <int T, int S, int C, bool Prefetch>
void sparse_strips(const SparseView& w, const TileCtx& ctx, std::size_t row0, std::size_t count) {
  const std::size_t r = w.r;
  const std::size_t c = C != 0 ? C : w.c;
  for (std::size_t g = 0; g < count; ++g) {
    const std::size_t i = row0 + g;
    const std::uint32_t begin = w.indptr[i];
    const std::uint32_t end = w.indptr[i + 1];
    for (std::size_t a0 = 0; a0 < r; a0 += S) {
      Lane<T> acc[S] = {};
      for (std::uint32_t p = begin; p < end; ++p) {
        const float* wv = w.values + static_cast<std::size_t>(p) * r * c + a0 * c;
        const float* xp = ctx.panel + static_cast<std::size_t>(w.indices[p]) * c * T;
        if constexpr (Prefetch) {
          if (p + 1 < end) prefetch(ctx.panel + static_cast<std::size_t>(w.indices[p + 1]) * c * T);
        }
        auto column = [&](std::size_t b) {
#pragma GCC unroll 8
          for (int s = 0; s < S; ++s) acc[s].fma(wv[s * c + b], xp + b * T);
        };
        if constexpr (C != 0) {
#pragma GCC unroll 16
          for (int b = 0; b < C; ++b) column(b);
        } else {
          for (std::size_t b = 0; b < c; ++b) column(b);
        }
      }
      store_lanes<T>(ctx, i * r + a0, S, acc);
    }
  }
}

template <int T, bool Prefetch>
SparseKernel select_sparse(BlockShape block, bool unroll) {
  if (block.r == 1) {
    if (unroll) {
      switch (block.c) {
        case 4: return {&sparse_chunked_1xc<T, 4, Prefetch>, kChunkRows};
        case 8: return {&sparse_chunked_1xc<T, 8, Prefetch>, kChunkRows};
        case 16: return {&sparse_chunked_1xc<T, 16, Prefetch>, kChunkRows};
        case 32: return {&sparse_chunked_1xc<T, 32, Prefetch>, kChunkRows};
        default: break;
      }
    }
    return {&sparse_chunked_1xc<T, 0, Prefetch>, kChunkRows};
  }
  if (unroll && block.r == 16 && block.c == 16) return {&sparse_strips<T, 8, 16, Prefetch>, kRowGroup};
  if (block.r % 8 == 0) return {&sparse_strips<T, 8, 0, Prefetch>, kRowGroup};
  if (block.r % 4 == 0) return {&sparse_strips<T, 4, 0, Prefetch>, kRowGroup};
  if (block.r % 2 == 0) return {&sparse_strips<T, 2, 0, Prefetch>, kRowGroup};
  return {&sparse_strips<T, 1, 0, Prefetch>, kRowGroup};
}

// --- dense ------------------------------------------------------------------
template <int T, int G, bool Unroll, bool Prefetch>
void dense_rows(const DenseView& w, const TileCtx& ctx, std::size_t row0) {
  const std::size_t K = w.k;
  Lane<T> acc[G] = {};
  const float* wr[G];
  for (int g = 0; g < G; ++g) wr[g] = w.w + (row0 + g) * K;
  auto step = [&](std::size_t k) {
    const float* xp = ctx.panel + k * T;
    if constexpr (Prefetch) {
      if (k + 16 < K) prefetch(xp + 16 * T);
    }
#pragma GCC unroll 8
    for (int g = 0; g < G; ++g) acc[g].fma(wr[g][k], xp);
  };
  if constexpr (Unroll) {
#pragma GCC unroll 4
    for (std::size_t k = 0; k < K; ++k) step(k);
  } else {
#pragma GCC unroll 1
    for (std::size_t k = 0; k < K; ++k) step(k);
  }
  store_lanes<T>(ctx, row0, G, acc);
}

template <int T, bool Unroll, bool Prefetch>
void dense_group(const DenseView& w, const TileCtx& ctx, std::size_t row0, std::size_t count) {
  if (count == kDenseRows) {
    dense_rows<T, kDenseRows, Unroll, Prefetch>(w, ctx, row0);
    return;
  }
  for (std::size_t g = 0; g < count; ++g) dense_rows<T, 1, Unroll, Prefetch>(w, ctx, row0 + g);
}

template <int T, bool Prefetch>
DenseGroupFn select_dense(bool unroll) {
  return unroll ? &dense_group<T, true, Prefetch> : &dense_group<T, false, Prefetch>;
}

// Runs fn over every (row tile, row group) pair on sched.threads workers.
template <typename Fn>
void for_each_task(std::size_t tiles, std::size_t groups, std::size_t threads, Fn&& fn) {
  const std::ptrdiff_t tasks = static_cast<std::ptrdiff_t>(tiles * groups);
  if (threads <= 1 || tasks <= 1) {
    for (std::ptrdiff_t t = 0; t < tasks; ++t) fn(t / groups, t % groups);
    return;
  }
#pragma omp parallel for num_threads(static_cast<int>(threads)) schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < tasks; ++t) fn(t / groups, t % groups);
}

template <int T>
DenseMatrix sparse_dense_tiled(const DenseMatrix& x, const BsrMatrix& w, const Schedule& sched) {
  const std::size_t M = x.rows();
  const std::size_t K = x.cols();
  const std::size_t N = w.n_rows();
  DenseMatrix y(M, N);
  if (M == 0 || N == 0) return y;

  thread_local PanelBuffer panels;
  pack_panels<T>(x, panels);
  const std::size_t tiles = (M + T - 1) / T;
  const std::size_t block_rows = w.block_rows();

  const SparseView view{w.indptr().data(), w.indices().data(), w.values().data(), w.block().r,
                        w.block().c};
  const SparseKernel kernel = sched.prefetch ? select_sparse<T, true>(w.block(), sched.unroll_c)
                                             : select_sparse<T, false>(w.block(), sched.unroll_c);
  const std::size_t groups = (block_rows + kernel.rows - 1) / kernel.rows;
  const bool counting = debug::g_counter_enabled.load(std::memory_order_relaxed);
  float* out = y.data().data();
  const float* panel_base = panels.data();

  for_each_task(tiles, groups, sched.threads, [&](std::size_t tile, std::size_t group) {
    const std::size_t row0 = group * kernel.rows;
    const std::size_t count = std::min(kernel.rows, block_rows - row0);
    const TileCtx ctx{panel_base + tile * K * T, out, N, tile * T,
                      std::min<std::size_t>(T, M - tile * T)};
    kernel.fn(view, ctx, row0, count);
    if (counting) {
      debug::g_block_multiplies.fetch_add(view.indptr[row0 + count] - view.indptr[row0],
                                          std::memory_order_relaxed);
    }
  });
  return y;
}

template <int T>
DenseMatrix dense_tiled(const DenseMatrix& x, const DenseMatrix& w, const Schedule& sched) {
  const std::size_t M = x.rows();
  const std::size_t K = x.cols();
  const std::size_t N = w.rows();
  DenseMatrix y(M, N);
  if (M == 0 || N == 0) return y;

  thread_local PanelBuffer panels;
  pack_panels<T>(x, panels);
  const std::size_t tiles = (M + T - 1) / T;
  const std::size_t groups = (N + kDenseRows - 1) / kDenseRows;
  const DenseView view{w.data().data(), K};
  const DenseGroupFn fn = sched.prefetch ? select_dense<T, true>(sched.unroll_c)
                                         : select_dense<T, false>(sched.unroll_c);
  float* out = y.data().data();
  const float* panel_base = panels.data();

  for_each_task(tiles, groups, sched.threads, [&](std::size_t tile, std::size_t group) {
    const std::size_t row0 = group * kDenseRows;
    const TileCtx ctx{panel_base + tile * K * T, out, N, tile * T,
                      std::min<std::size_t>(T, M - tile * T)};
    fn(view, ctx, row0, std::min<std::size_t>(kDenseRows, N - row0));
  });
  return y;
}

template <template <int> class Impl, typename... Args>
DenseMatrix dispatch_tile(std::size_t tile_m, Args&&... args) {
  if (tile_m >= 32) return Impl<32>::run(std::forward<Args>(args)...);
  if (tile_m >= 16) return Impl<16>::run(std::forward<Args>(args)...);
  if (tile_m >= 8) return Impl<8>::run(std::forward<Args>(args)...);
  if (tile_m >= 4) return Impl<4>::run(std::forward<Args>(args)...);
  return Impl<1>::run(std::forward<Args>(args)...);
}

template <int T>
struct SparseImpl {
  static DenseMatrix run(const DenseMatrix& x, const BsrMatrix& w, const Schedule& s) {
    return sparse_dense_tiled<T>(x, w, s);
  }
};

template <int T>
struct DenseImpl {
  static DenseMatrix run(const DenseMatrix& x, const DenseMatrix& w, const Schedule& s) {
    return dense_tiled<T>(x, w, s);
  }
};

}  // namespace

DenseMatrix sparse_dense(const DenseMatrix& x, const BsrMatrix& w, const Schedule& sched) {
  sched.check();
  if (x.cols() != w.n_cols()) {
    throw DimensionMismatch("sparse_dense: X has " + std::to_string(x.cols()) +
                            " columns but W has " + std::to_string(w.n_cols()));
  }
  return dispatch_tile<SparseImpl>(sched.tile_m, x, w, sched);
}

DenseMatrix dense_matmul(const DenseMatrix& x, const DenseMatrix& w, const Schedule& sched) {
  sched.check();
  if (x.cols() != w.cols()) {
    throw DimensionMismatch("dense_matmul: X has " + std::to_string(x.cols()) +
                            " columns but W has " + std::to_string(w.cols()));
  }
  return dispatch_tile<DenseImpl>(sched.tile_m, x, w, sched);
}

}  // namespace blocksparse
