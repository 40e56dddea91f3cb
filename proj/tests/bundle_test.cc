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

#include "blocksparse/bundle.h"

#include <bit>
#include <filesystem>
#include <fstream>

#include "blocksparse/errors.h"
#include "doctest.h"
#include "json.hpp"

namespace blocksparse {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool bits_equal(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::bit_cast<std::uint32_t>(a[k]) != std::bit_cast<std::uint32_t>(b[k])) return false;
  }
  return true;
}

void check_same(const EncoderWeights& a, const EncoderWeights& b) {
  REQUIRE(a.layers.size() == b.layers.size());
  CHECK(a.cfg == b.cfg);
  CHECK(a.seed == b.seed);
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    for (MatrixId id : kAllMatrices) {
      const Weight& x = a.layers[li].matrix(id);
      const Weight& y = b.layers[li].matrix(id);
      REQUIRE(is_bsr(x) == is_bsr(y));
      if (is_bsr(x)) {
        CHECK(std::get<BsrMatrix>(x) == std::get<BsrMatrix>(y));
        CHECK(bits_equal(std::get<BsrMatrix>(x).values(), std::get<BsrMatrix>(y).values()));
      } else {
        CHECK(bits_equal(std::get<DenseMatrix>(x).data(), std::get<DenseMatrix>(y).data()));
      }
    }
    CHECK(bits_equal(a.layers[li].b1, b.layers[li].b1));
    CHECK(a.layers[li].ln2_gamma == b.layers[li].ln2_gamma);
  }
  REQUIRE(a.prune_log.size() == b.prune_log.size());
  for (std::size_t k = 0; k < a.prune_log.size(); ++k) {
    CHECK(a.prune_log[k].layer == b.prune_log[k].layer);
    CHECK(a.prune_log[k].matrix == b.prune_log[k].matrix);
    CHECK(a.prune_log[k].block == b.prune_log[k].block);
    CHECK(a.prune_log[k].achieved_sparsity == b.prune_log[k].achieved_sparsity);
    CHECK(a.prune_log[k].target_sparsity == b.prune_log[k].target_sparsity);
  }
}

TEST_CASE("dense bundle round trips bit for bit, signed zeros included") {
  TempDir dir("blocksparse_bundle_dense");
  auto w = init_weights(LayerConfig::desk(), 3);
  auto& wq = std::get<DenseMatrix>(w.layers[0].wq);
  for (std::size_t j = 0; j < wq.cols(); ++j) wq(5, j) = -0.0f;
  w.layers[1].b2[0] = -0.0f;
  save_bundle(dir.path, w);
  check_same(w, load_bundle(dir.path));
  CHECK(std::signbit(std::get<DenseMatrix>(load_bundle(dir.path).layers[0].wq)(5, 3)));
}

TEST_CASE("pruned bundle keeps tags and writes sidecar metadata") {
  TempDir dir("blocksparse_bundle_sparse");
  PruneConfig cfg;
  cfg.block = {1, 32};
  cfg.target_sparsity = 0.8;
  SparsifyOptions opts;
  opts.attention_only = true;
  auto w = sparsify_weights(init_weights(LayerConfig::desk(), 4), cfg, opts);
  save_bundle(dir.path, w);
  check_same(w, load_bundle(dir.path));

  std::ifstream in(dir.path / "layer01_wk.json");
  REQUIRE(in.good());
  const auto meta = nlohmann::json::parse(in);
  CHECK(meta.at("block") == "1x32");
  CHECK(meta.at("p") == 2);
  CHECK(meta.at("target_sparsity") == 0.8);
  CHECK(meta.at("achieved_sparsity") == doctest::Approx(410.0 / 512));
  CHECK(meta.at("seed") == 4);
  CHECK_FALSE(fs::exists(dir.path / "layer01_w1.json"));
  CHECK(fs::exists(dir.path / "layer01_w1.bsr"));
}

TEST_CASE("broken bundles raise IoError") {
  TempDir dir("blocksparse_bundle_broken");
  CHECK_THROWS_AS(load_bundle(dir.path), IoError);

  save_bundle(dir.path, init_weights(LayerConfig::desk(), 5));
  fs::remove(dir.path / "layer00_wv.bsr");
  CHECK_THROWS_AS(load_bundle(dir.path), IoError);

  std::ofstream(dir.path / "manifest.json") << "{ not json";
  CHECK_THROWS_AS(load_bundle(dir.path), IoError);
}

}  // namespace
}  // namespace blocksparse
