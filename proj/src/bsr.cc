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

#include "blocksparse/bsr.h"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <sstream>

#include "blocksparse/errors.h"
#include "hash.h"

namespace blocksparse {

std::string BlockShape::to_string() const {
  return std::to_string(r) + "x" + std::to_string(c);
}

BlockShape BlockShape::parse(std::string_view text) {
  auto sep = text.find_first_of("xX");
  if (sep == std::string_view::npos) {
    throw ConfigError("block shape '" + std::string(text) + "' is not of the form RxC");
  }
  auto parse_dim = [&](std::string_view part) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc() || ptr != part.data() + part.size() || value == 0) {
      throw ConfigError("block shape '" + std::string(text) + "' has an invalid dimension");
    }
    return value;
  };
  return BlockShape{parse_dim(text.substr(0, sep)), parse_dim(text.substr(sep + 1))};
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionMismatch("dense matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " given " + std::to_string(data_.size()) + " values");
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

std::string_view to_string(StructureErrorKind kind) {
  switch (kind) {
    case StructureErrorKind::kBadIndptr:
      return "BadIndptr";
    case StructureErrorKind::kUnsortedIndices:
      return "UnsortedIndices";
    case StructureErrorKind::kIndexOutOfRange:
      return "IndexOutOfRange";
    case StructureErrorKind::kLengthMismatch:
      return "LengthMismatch";
    case StructureErrorKind::kBadDivisibility:
      return "BadDivisibility";
  }
  return "Unknown";
}

namespace {

StructureError make_error(StructureErrorKind kind, std::size_t block_row, const std::string& msg) {
  return StructureError{kind, block_row, std::string(to_string(kind)) + ": " + msg};
}

}  // namespace

std::optional<StructureError> validate(const BsrParts& p) {
  using K = StructureErrorKind;
  if (!p.block.divides(p.n_rows, p.n_cols)) {
    return make_error(K::kBadDivisibility, 0,
                      "block " + p.block.to_string() + " does not divide " +
                          std::to_string(p.n_rows) + "x" + std::to_string(p.n_cols));
  }
  const std::size_t block_rows = p.n_rows / p.block.r;
  const std::size_t block_cols = p.n_cols / p.block.c;
  if (p.indptr.size() != block_rows + 1) {
    return make_error(K::kBadIndptr, 0,
                      "indptr has length " + std::to_string(p.indptr.size()) + ", expected " +
                          std::to_string(block_rows + 1));
  }
  if (p.indptr[0] != 0) {
    return make_error(K::kBadIndptr, 0, "indptr[0] must be 0");
  }
  for (std::size_t i = 0; i < block_rows; ++i) {
    if (p.indptr[i + 1] < p.indptr[i]) {
      return make_error(K::kBadIndptr, i, "indptr decreases at block row " + std::to_string(i));
    }
  }
  if (p.indptr.back() != p.indices.size()) {
    return make_error(K::kLengthMismatch, block_rows,
                      "indptr ends at " + std::to_string(p.indptr.back()) + " but " +
                          std::to_string(p.indices.size()) + " indices are stored");
  }
  for (std::size_t i = 0; i < block_rows; ++i) {
    for (std::uint32_t k = p.indptr[i]; k < p.indptr[i + 1]; ++k) {
      if (p.indices[k] >= block_cols) {
        return make_error(K::kIndexOutOfRange, i,
                          "block column " + std::to_string(p.indices[k]) + " >= " +
                              std::to_string(block_cols) + " in block row " + std::to_string(i));
      }
      if (k > p.indptr[i] && p.indices[k] <= p.indices[k - 1]) {
        return make_error(K::kUnsortedIndices, i,
                          "indices not strictly increasing in block row " + std::to_string(i));
      }
    }
  }
  if (p.values.size() != p.indices.size() * p.block.area()) {
    return make_error(K::kLengthMismatch, 0,
                      "values has length " + std::to_string(p.values.size()) + ", expected " +
                          std::to_string(p.indices.size() * p.block.area()));
  }
  return std::nullopt;
}

BsrMatrix::BsrMatrix(BsrParts parts) : parts_(std::move(parts)) {
  if (auto err = blocksparse::validate(parts_)) throw StructureInvalid(err->message);
}

BsrMatrix BsrMatrix::empty(std::size_t n_rows, std::size_t n_cols, BlockShape block) {
  if (!block.divides(n_rows, n_cols)) {
    throw DimensionMismatch("block " + block.to_string() + " does not divide " +
                            std::to_string(n_rows) + "x" + std::to_string(n_cols));
  }
  BsrParts p;
  p.n_rows = n_rows;
  p.n_cols = n_cols;
  p.block = block;
  p.indptr.assign(n_rows / block.r + 1, 0);
  return BsrMatrix(std::move(p));
}

bool operator==(const BsrMatrix& a, const BsrMatrix& b) {
  const BsrParts& x = a.parts_;
  const BsrParts& y = b.parts_;
  return x.n_rows == y.n_rows && x.n_cols == y.n_cols && x.block == y.block &&
         x.indptr == y.indptr && x.indices == y.indices && x.values == y.values;
}

BsrMatrix dense_to_bsr(const DenseMatrix& d, BlockShape block) {
  if (!block.divides(d.rows(), d.cols())) {
    throw DimensionMismatch("block " + block.to_string() + " does not divide " +
                            std::to_string(d.rows()) + "x" + std::to_string(d.cols()));
  }
  BsrParts p;
  p.n_rows = d.rows();
  p.n_cols = d.cols();
  p.block = block;
  const std::size_t block_rows = d.rows() / block.r;
  const std::size_t block_cols = d.cols() / block.c;
  p.indptr.reserve(block_rows + 1);
  p.indptr.push_back(0);

  for (std::size_t bi = 0; bi < block_rows; ++bi) {
    for (std::size_t bj = 0; bj < block_cols; ++bj) {
      bool nonzero = false;
      for (std::size_t a = 0; a < block.r && !nonzero; ++a) {
        auto row = d.row(bi * block.r + a).subspan(bj * block.c, block.c);
        nonzero = std::any_of(row.begin(), row.end(), [](float v) { return v != 0.0f; });
      }
      if (!nonzero) continue;
      p.indices.push_back(static_cast<std::uint32_t>(bj));
      for (std::size_t a = 0; a < block.r; ++a) {
        auto row = d.row(bi * block.r + a).subspan(bj * block.c, block.c);
        p.values.insert(p.values.end(), row.begin(), row.end());
      }
    }
    p.indptr.push_back(static_cast<std::uint32_t>(p.indices.size()));
  }
  return BsrMatrix(std::move(p));
}

DenseMatrix bsr_to_dense(const BsrParts& p) {
  if (auto err = validate(p)) throw StructureInvalid(err->message);
  DenseMatrix d(p.n_rows, p.n_cols);
  const BlockShape b = p.block;
  const std::size_t block_rows = p.n_rows / b.r;
  for (std::size_t bi = 0; bi < block_rows; ++bi) {
    for (std::uint32_t k = p.indptr[bi]; k < p.indptr[bi + 1]; ++k) {
      const float* src = p.values.data() + k * b.area();
      for (std::size_t a = 0; a < b.r; ++a) {
        float* dst = &d(bi * b.r + a, p.indices[k] * b.c);
        std::memcpy(dst, src + a * b.c, b.c * sizeof(float));
      }
    }
  }
  return d;
}

DenseMatrix bsr_to_dense(const BsrMatrix& m) { return bsr_to_dense(m.parts()); }

std::uint64_t structure_hash(const BsrMatrix& m) {
  internal::Fnv1a h;
  h.add_u64(m.n_rows());
  h.add_u64(m.n_cols());
  h.add_u64(m.block().r);
  h.add_u64(m.block().c);
  for (auto v : m.indptr()) h.add_u32(v);
  for (auto v : m.indices()) h.add_u32(v);
  return h.digest();
}

}  // namespace blocksparse
