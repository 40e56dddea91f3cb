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

#ifndef BLOCKSPARSE_VERIFY_H_
#define BLOCKSPARSE_VERIFY_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "blocksparse/bsr.h"
#include "blocksparse/kernels.h"

namespace blocksparse {

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 200;
  double tolerance = 1e-5;
  /// Upper bound of the thread counts drawn for schedules.
  std::size_t max_threads = 2;
};

struct VerifyCase {
  BlockShape block;
  double sparsity = 0.0;
  std::size_t m = 0, n = 0, k = 0;
  Schedule sched;
  double max_abs_diff = 0.0;
  bool pass = false;
};

struct VerifyResult {
  std::vector<VerifyCase> cases;
  std::size_t failures = 0;
  double seconds = 0.0;
  bool ok() const { return failures == 0 && !cases.empty(); }
};

/// sparse_dense against a double-accumulated naive product of the densified
/// weights. Instance i uses block shape i mod 14 of the standard sweep and
/// sparsity (i / 14) mod 4 of {0, 0.5, 0.8, 0.95}; sizes, values and the
/// schedule are drawn from `seed`. Weights are N(0, 1/k), inputs N(0, 1).
VerifyResult run_verify(const VerifyOptions& opts);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_VERIFY_H_
