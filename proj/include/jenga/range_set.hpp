// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace jenga {

// Set of prefix lengths as sorted disjoint inclusive ranges. Sliding-window
// hit sets are unions of a few runs, so ranges beat explicit enumeration.
class PrefixRangeSet {
 public:
  PrefixRangeSet() = default;

  // Values must be appended in strictly increasing order.
  void append(uint64_t value);
  void append_range(uint64_t lo, uint64_t hi);

  bool contains(uint64_t value) const;
  bool empty() const { return ranges_.empty(); }
  uint64_t max_value() const;  // 0 when empty
  uint64_t count() const;

  static PrefixRangeSet intersect(const PrefixRangeSet& a,
                                  const PrefixRangeSet& b);

  std::vector<uint64_t> to_values() const;
  std::string to_string() const;

  const std::vector<std::pair<uint64_t, uint64_t>>& ranges() const {
    return ranges_;
  }

 private:
  std::vector<std::pair<uint64_t, uint64_t>> ranges_;
};

}  // namespace jenga
