// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace quantlaw {

// Incremental 64-bit FNV-1a. Used for checkpoint payload digests, plan
// digests, and seed derivation; not a cryptographic hash.
class Fnv1a64 {
 public:
  static constexpr uint64_t kOffsetBasis = 14695981039346656037ULL;
  static constexpr uint64_t kPrime = 1099511628211ULL;

  void update(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= kPrime;
    }
  }

  void update_u64(uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    update(buf, 8);
  }

  void update_string(std::string_view s) { update(s.data(), s.size()); }

  uint64_t value() const { return state_; }

 private:
  uint64_t state_ = kOffsetBasis;
};

inline uint64_t fnv1a64(const void* data, size_t size) {
  Fnv1a64 h;
  h.update(data, size);
  return h.value();
}

std::string to_hex16(uint64_t v);

// Per-trial seed stream: mixes a base seed with a trial index so trials are
// independent of each other and of scheduling order.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  Fnv1a64 h;
  h.update_u64(base);
  h.update_u64(index);
  return h.value();
}

}  // namespace quantlaw
