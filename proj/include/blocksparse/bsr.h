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

#ifndef BLOCKSPARSE_BSR_H_
#define BLOCKSPARSE_BSR_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blocksparse {

/// Dimensions of one storage/pruning block over a weight's
/// (output x input) axes. "1x32" is one output row by 32 input columns.
struct BlockShape {
  std::size_t r = 1;
  std::size_t c = 1;

  std::size_t area() const { return r * c; }
  bool divides(std::size_t rows, std::size_t cols) const {
    return r > 0 && c > 0 && rows % r == 0 && cols % c == 0;
  }
  std::string to_string() const;

  /// Parses "RxC" (also accepts 'X'). Throws ConfigError on malformed input.
  static BlockShape parse(std::string_view text);

  friend bool operator==(const BlockShape&, const BlockShape&) = default;
  friend auto operator<=>(const BlockShape&, const BlockShape&) = default;
};

/// Row-major dense f32 matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  /// Throws DimensionMismatch unless data.size() == rows * cols.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * cols_, cols_);
  }
  std::span<float> row(std::size_t i) {
    return std::span<float>(data_).subspan(i * cols_, cols_);
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Raw, unchecked BSR arrays. BsrMatrix is the validated form.
///
/// Layout follows SciPy's bsr_matrix: block row i owns
/// indices[indptr[i] .. indptr[i+1]) and the matching blocks in values,
/// each block stored row-major and contiguous.
struct BsrParts {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  BlockShape block;
  std::vector<std::uint32_t> indptr;
  std::vector<std::uint32_t> indices;
  std::vector<float> values;
};

enum class StructureErrorKind {
  kBadIndptr,
  kUnsortedIndices,
  kIndexOutOfRange,
  kLengthMismatch,
  kBadDivisibility,
};

std::string_view to_string(StructureErrorKind kind);

struct StructureError {
  StructureErrorKind kind;
  std::size_t block_row = 0;
  std::string message;
};

/// Checks every BSR invariant, returning the first violation found.
std::optional<StructureError> validate(const BsrParts& parts);

/// Immutable, validated block-sparse-row matrix.
class BsrMatrix {
 public:
  /// Throws StructureInvalid if `parts` fails validate().
  explicit BsrMatrix(BsrParts parts);

  /// A matrix with no stored blocks.
  static BsrMatrix empty(std::size_t n_rows, std::size_t n_cols, BlockShape block);

  std::size_t n_rows() const { return parts_.n_rows; }
  std::size_t n_cols() const { return parts_.n_cols; }
  const BlockShape& block() const { return parts_.block; }
  std::size_t block_rows() const { return parts_.n_rows / parts_.block.r; }
  std::size_t block_cols() const { return parts_.n_cols / parts_.block.c; }
  std::size_t n_blocks() const { return parts_.indices.size(); }
  std::size_t total_blocks() const { return block_rows() * block_cols(); }

  std::span<const std::uint32_t> indptr() const { return parts_.indptr; }
  std::span<const std::uint32_t> indices() const { return parts_.indices; }
  std::span<const float> values() const { return parts_.values; }

  /// Block-column indices stored for block row `i`.
  std::span<const std::uint32_t> row_indices(std::size_t i) const {
    return indices().subspan(parts_.indptr[i], parts_.indptr[i + 1] - parts_.indptr[i]);
  }
  /// Values of stored block `p` (r * c floats, row-major).
  std::span<const float> block_values(std::size_t p) const {
    return values().subspan(p * parts_.block.area(), parts_.block.area());
  }

  const BsrParts& parts() const { return parts_; }

  friend bool operator==(const BsrMatrix& a, const BsrMatrix& b);

 private:
  BsrParts parts_;
};

/// Stores every block of `d` holding at least one element != 0.0f.
/// Throws DimensionMismatch if `block` does not divide d's shape.
BsrMatrix dense_to_bsr(const DenseMatrix& d, BlockShape block);

DenseMatrix bsr_to_dense(const BsrMatrix& m);
/// Throws StructureInvalid if `parts` is malformed.
DenseMatrix bsr_to_dense(const BsrParts& parts);

/// 64-bit FNV-1a digest of (n_rows, n_cols, r, c, indptr, indices), every
/// field fed as little-endian bytes (u64 for dimensions, u32 for arrays).
/// Values are not hashed, so equal sparsity structure gives equal digests.
std::uint64_t structure_hash(const BsrMatrix& m);

}  // namespace blocksparse

#endif  // BLOCKSPARSE_BSR_H_
