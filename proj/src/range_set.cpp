// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/range_set.hpp"

#include <algorithm>
#include <sstream>

#include "jenga/util.hpp"

namespace jenga {

void PrefixRangeSet::append(uint64_t value) { append_range(value, value); }

void PrefixRangeSet::append_range(uint64_t lo, uint64_t hi) {
  JENGA_CHECK(lo <= hi, "range set: inverted range");
  if (!ranges_.empty()) {
    auto& [last_lo, last_hi] = ranges_.back();
    JENGA_CHECK(lo > last_hi, "range set: appends must be increasing");
    if (lo == last_hi + 1) {
      last_hi = hi;
      return;
    }
  }
  ranges_.emplace_back(lo, hi);
}

bool PrefixRangeSet::contains(uint64_t value) const {
  auto it = std::upper_bound(
      ranges_.begin(), ranges_.end(), value,
      [](uint64_t v, const auto& r) { return v < r.first; });
  if (it == ranges_.begin()) return false;
  --it;
  return value >= it->first && value <= it->second;
}

uint64_t PrefixRangeSet::max_value() const {
  return ranges_.empty() ? 0 : ranges_.back().second;
}

uint64_t PrefixRangeSet::count() const {
  uint64_t n = 0;
  for (const auto& [lo, hi] : ranges_) n += hi - lo + 1;
  return n;
}

PrefixRangeSet PrefixRangeSet::intersect(const PrefixRangeSet& a,
                                         const PrefixRangeSet& b) {
  PrefixRangeSet out;
  size_t i = 0, j = 0;
  while (i < a.ranges_.size() && j < b.ranges_.size()) {
    const auto& ra = a.ranges_[i];
    const auto& rb = b.ranges_[j];
    const uint64_t lo = std::max(ra.first, rb.first);
    const uint64_t hi = std::min(ra.second, rb.second);
    if (lo <= hi) out.append_range(lo, hi);
    if (ra.second < rb.second) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

std::vector<uint64_t> PrefixRangeSet::to_values() const {
  std::vector<uint64_t> out;
  out.reserve(count());
  for (const auto& [lo, hi] : ranges_) {
    for (uint64_t v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

std::string PrefixRangeSet::to_string() const {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < ranges_.size(); ++i) {
    if (i > 0) os << ", ";
    if (ranges_[i].first == ranges_[i].second) {
      os << ranges_[i].first;
    } else {
      os << ranges_[i].first << ".." << ranges_[i].second;
    }
  }
  os << "}";
  return os.str();
}

}  // namespace jenga
