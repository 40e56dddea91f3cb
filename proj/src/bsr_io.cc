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

#include "blocksparse/bsr_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "blocksparse/errors.h"

namespace blocksparse {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'R', '1'};

class Writer {
 public:
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float f) { put_u32(std::bit_cast<std::uint32_t>(f)); }
  void put_raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("BSR container truncated");
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_bsr(const BsrMatrix& m) {
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put_u64(m.n_rows());
  w.put_u64(m.n_cols());
  w.put_u64(m.block().r);
  w.put_u64(m.block().c);
  w.put_u64(m.n_blocks());
  for (auto v : m.indptr()) w.put_u32(v);
  for (auto v : m.indices()) w.put_u32(v);
  for (auto v : m.values()) w.put_f32(v);
  return w.take();
}

BsrMatrix deserialize_bsr(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a BSR1 container (bad magic)");
  }
  BsrParts p;
  p.n_rows = in.get_u64();
  p.n_cols = in.get_u64();
  p.block.r = in.get_u64();
  p.block.c = in.get_u64();
  const std::uint64_t n_blocks = in.get_u64();
  if (p.block.r == 0 || p.block.c == 0 || p.n_rows % p.block.r != 0) {
    throw StructureInvalid("BadDivisibility: container header has invalid block shape " +
                           p.block.to_string());
  }
  // Bound every array by the bytes actually present before allocating.
  const std::uint64_t indptr_len = p.n_rows / p.block.r + 1;
  const std::uint64_t area = p.block.r * p.block.c;
  if (indptr_len > in.remaining() / 4 || n_blocks > in.remaining() / 4 ||
      (n_blocks != 0 && area > std::numeric_limits<std::uint64_t>::max() / n_blocks)) {
    throw IoError("BSR container truncated");
  }
  const std::uint64_t expected = 4 * (indptr_len + n_blocks + n_blocks * area);
  if (expected != in.remaining()) {
    throw IoError("BSR container size mismatch: " + std::to_string(in.remaining()) +
                  " payload bytes, header implies " + std::to_string(expected));
  }
  p.indptr.resize(indptr_len);
  for (auto& v : p.indptr) v = in.get_u32();
  p.indices.resize(n_blocks);
  for (auto& v : p.indices) v = in.get_u32();
  p.values.resize(n_blocks * area);
  for (auto& v : p.values) v = in.get_f32();
  return BsrMatrix(std::move(p));
}

void save_bsr(const std::filesystem::path& path, const BsrMatrix& m) {
  auto bytes = serialize_bsr(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

BsrMatrix load_bsr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bsr(bytes);
}

}  // namespace blocksparse
