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

#include <cstdio>
#include <fstream>
#include <numeric>

#include "blocksparse/bsr_io.h"
#include "blocksparse/errors.h"
#include "json.hpp"

namespace blocksparse {

using nlohmann::json;

namespace {

constexpr int kBundleVersion = 1;

// Every row kept as one full-width block, so stored zeros (and their signs)
// survive the trip.
BsrMatrix full_rows(std::size_t rows, std::size_t cols, std::span<const float> values) {
  BsrParts p;
  p.n_rows = rows;
  p.n_cols = cols;
  p.block = {1, cols};
  p.indptr.resize(rows + 1);
  std::iota(p.indptr.begin(), p.indptr.end(), 0u);
  p.indices.assign(rows, 0u);
  p.values.assign(values.begin(), values.end());
  return BsrMatrix(std::move(p));
}

std::string file_stem(std::size_t layer, std::string_view name) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "layer%02zu_", layer);
  return buf + std::string(name);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

DenseMatrix dense_from_full_rows(const BsrMatrix& m, const std::filesystem::path& path) {
  if (m.block() != BlockShape{1, m.n_cols()} || m.n_blocks() != m.n_rows()) {
    throw IoError(path.string() + " does not hold a dense matrix");
  }
  return DenseMatrix(m.n_rows(), m.n_cols(), std::vector<float>(m.values().begin(), m.values().end()));
}

struct VectorSlot {
  const char* name;
  std::vector<float> LayerWeights::*member;
};

constexpr VectorSlot kVectors[] = {
    {"bq", &LayerWeights::bq},
    {"bk", &LayerWeights::bk},
    {"bv", &LayerWeights::bv},
    {"bo", &LayerWeights::bo},
    {"b1", &LayerWeights::b1},
    {"b2", &LayerWeights::b2},
    {"ln1_gamma", &LayerWeights::ln1_gamma},
    {"ln1_beta", &LayerWeights::ln1_beta},
    {"ln2_gamma", &LayerWeights::ln2_gamma},
    {"ln2_beta", &LayerWeights::ln2_beta},
};

MatrixId parse_matrix_id(const std::string& name) {
  for (MatrixId id : kAllMatrices) {
    if (matrix_name(id) == name) return id;
  }
  throw IoError("unknown matrix name '" + name + "'");
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const EncoderWeights& w) {
  w.check();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["version"] = kBundleVersion;
  manifest["config"] = {{"h", w.cfg.h}, {"a", w.cfg.a}, {"ffn", w.cfg.ffn}, {"l", w.cfg.l}, {"seq", w.cfg.seq}};
  manifest["seed"] = w.seed;
  json layers = json::array();

  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const auto& layer = w.layers[li];
    json entry;
    for (MatrixId id : kAllMatrices) {
      const Weight& m = layer.matrix(id);
      const std::string stem = file_stem(li, matrix_name(id));
      if (is_bsr(m)) {
        save_bsr(dir / (stem + ".bsr"), std::get<BsrMatrix>(m));
      } else {
        const auto& d = std::get<DenseMatrix>(m);
        save_bsr(dir / (stem + ".bsr"), full_rows(d.rows(), d.cols(), d.data()));
      }
      entry["matrices"][std::string(matrix_name(id))] = {{"file", stem + ".bsr"}, {"tag", is_bsr(m) ? "bsr" : "dense"}};
    }
    for (const auto& slot : kVectors) {
      const auto& v = layer.*slot.member;
      const std::string file = file_stem(li, slot.name) + ".bsr";
      save_bsr(dir / file, full_rows(1, v.size(), v));
      entry["vectors"][slot.name] = file;
    }
    layers.push_back(std::move(entry));
  }
  manifest["layers"] = std::move(layers);

  json log = json::array();
  for (const auto& e : w.prune_log) {
    const std::string stem = file_stem(e.layer, matrix_name(e.matrix));
    const json meta = {{"block", e.block.to_string()},
                       {"p", static_cast<int>(e.p)},
                       {"target_sparsity", e.target_sparsity},
                       {"achieved_sparsity", e.achieved_sparsity},
                       {"seed", e.seed}};
    write_json(dir / (stem + ".json"), meta);
    json row = meta;
    row["layer"] = e.layer;
    row["matrix"] = std::string(matrix_name(e.matrix));
    log.push_back(std::move(row));
  }
  manifest["prune_log"] = std::move(log);
  write_json(dir / "manifest.json", manifest);
}

EncoderWeights load_bundle(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  EncoderWeights w;
  try {
    if (manifest.at("version").get<int>() != kBundleVersion) throw IoError("unsupported bundle version");
    const json& c = manifest.at("config");
    w.cfg = LayerConfig{c.at("h").get<std::size_t>(), c.at("a").get<std::size_t>(), c.at("ffn").get<std::size_t>(),
                        c.at("l").get<std::size_t>(), c.at("seq").get<std::size_t>()};
    w.seed = manifest.at("seed").get<std::uint64_t>();
    for (const json& entry : manifest.at("layers")) {
      LayerWeights layer;
      for (MatrixId id : kAllMatrices) {
        const json& m = entry.at("matrices").at(std::string(matrix_name(id)));
        const auto path = dir / m.at("file").get<std::string>();
        BsrMatrix stored = load_bsr(path);
        const auto tag = m.at("tag").get<std::string>();
        if (tag == "bsr") {
          layer.matrix(id) = std::move(stored);
        } else if (tag == "dense") {
          layer.matrix(id) = dense_from_full_rows(stored, path);
        } else {
          throw IoError("unknown tag '" + tag + "' in manifest");
        }
      }
      for (const auto& slot : kVectors) {
        const auto path = dir / entry.at("vectors").at(slot.name).get<std::string>();
        const DenseMatrix v = dense_from_full_rows(load_bsr(path), path);
        if (v.rows() != 1) throw IoError(path.string() + " is not a vector");
        layer.*slot.member = std::vector<float>(v.data().begin(), v.data().end());
      }
      w.layers.push_back(std::move(layer));
    }
    for (const json& row : manifest.at("prune_log")) {
      PruneLogEntry e;
      e.layer = row.at("layer").get<std::size_t>();
      e.matrix = parse_matrix_id(row.at("matrix").get<std::string>());
      e.block = BlockShape::parse(row.at("block").get<std::string>());
      e.p = parse_norm_order(row.at("p").get<int>());
      e.target_sparsity = row.at("target_sparsity").get<double>();
      e.achieved_sparsity = row.at("achieved_sparsity").get<double>();
      e.seed = row.at("seed").get<std::uint64_t>();
      w.prune_log.push_back(e);
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  w.check();
  return w;
}

}  // namespace blocksparse
