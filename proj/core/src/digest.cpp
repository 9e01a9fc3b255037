// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/digest.hpp"

namespace quantlaw {

std::string to_hex16(uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace quantlaw
