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

#include "blocksparse/verify.h"

#include <set>

#include "blocksparse/errors.h"
#include "doctest.h"

namespace blocksparse {
namespace {

TEST_CASE("verify suite covers every shape and sparsity and passes") {
  VerifyOptions opts;
  opts.seed = 7;
  const auto res = run_verify(opts);
  CHECK(res.cases.size() == 200);
  CHECK(res.ok());
  CHECK(res.seconds < 60.0);
  std::set<std::pair<std::string, double>> combos;
  double worst = 0.0;
  for (const auto& c : res.cases) {
    combos.insert({c.block.to_string(), c.sparsity});
    worst = std::max(worst, c.max_abs_diff);
  }
  CHECK(combos.size() == 14 * 4);
  MESSAGE("worst max-abs-diff " << worst << " in " << res.seconds << " s");
}

TEST_CASE("verify is deterministic in the seed") {
  VerifyOptions opts;
  opts.instances = 20;
  opts.seed = 3;
  const auto a = run_verify(opts);
  const auto b = run_verify(opts);
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    CHECK(a.cases[i].n == b.cases[i].n);
    CHECK(a.cases[i].max_abs_diff == b.cases[i].max_abs_diff);
  }
}

TEST_CASE("verify rejects empty runs") {
  VerifyOptions opts;
  opts.instances = 0;
  CHECK_THROWS_AS(run_verify(opts), ConfigError);
}

}  // namespace
}  // namespace blocksparse
