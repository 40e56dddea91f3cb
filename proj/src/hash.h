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

#ifndef BLOCKSPARSE_SRC_HASH_H_
#define BLOCKSPARSE_SRC_HASH_H_

#include <cstdint>
#include <string_view>

namespace blocksparse::internal {

// 64-bit FNV-1a. Multi-byte integers are fed least-significant byte first
// so digests do not depend on host endianness.
class Fnv1a {
 public:
  void add_byte(std::uint8_t b) {
    state_ ^= b;
    state_ *= kPrime;
  }
  void add_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) add_byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) add_byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void add_string(std::string_view s) {
    for (char ch : s) add_byte(static_cast<std::uint8_t>(ch));
  }
  std::uint64_t digest() const { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ull;
  static constexpr std::uint64_t kPrime = 0x100000001b3ull;
  std::uint64_t state_ = kOffset;
};

}  // namespace blocksparse::internal

#endif  // BLOCKSPARSE_SRC_HASH_H_
