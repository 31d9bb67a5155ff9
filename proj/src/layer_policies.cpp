// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/layer_policies.hpp"

#include <algorithm>

namespace jenga {

std::vector<uint64_t> LayerPolicy::required_tokens(uint64_t p,
                                                   bool* defined) const {
  JENGA_CHECK(p >= 1, "required_tokens: prefix length must be >= 1");
  if (defined != nullptr) *defined = true;
  std::vector<uint64_t> out;
  switch (spec_.kind) {
    case LayerKind::kFullAttention:
    case LayerKind::kCrossAttention: {
      out.reserve(p);
      for (uint64_t i = 1; i <= p; ++i) out.push_back(i);
      break;
    }
    case LayerKind::kSlidingWindow: {
      const uint64_t lo = p > spec_.window_tokens ? p - spec_.window_tokens + 1 : 1;
      for (uint64_t i = lo; i <= p; ++i) out.push_back(i);
      break;
    }
    case LayerKind::kMamba: {
      if (p % spec_.checkpoint_interval_tokens == 0) {
        out.push_back(p);
      } else if (defined != nullptr) {
        *defined = false;
      }
      break;
    }
    case LayerKind::kVisionEmbedding:
      // A cached KV prefix replaces the need to re-encode, so embeddings
      // never constrain reuse.
      break;
  }
  return out;
}

PrefixRangeSet LayerPolicy::possible_prefixes(
    const std::vector<bool>& is_hit) const {
  const uint64_t n = is_hit.size();
  PrefixRangeSet out;
  switch (spec_.kind) {
    case LayerKind::kFullAttention:
    case LayerKind::kCrossAttention: {
      uint64_t run = 0;
      while (run < n && is_hit[run]) ++run;
      if (run >= 1) out.append_range(1, run);
      break;
    }
    case LayerKind::kSlidingWindow: {
      // p is valid iff the last min(W, p) tokens of the prefix are all hit,
      // i.e. the hit run ending at p is at least that long.
      uint64_t run = 0;
      for (uint64_t p = 1; p <= n; ++p) {
        run = is_hit[p - 1] ? run + 1 : 0;
        if (run >= std::min(spec_.window_tokens, p)) out.append(p);
      }
      break;
    }
    case LayerKind::kMamba: {
      const uint64_t k = spec_.checkpoint_interval_tokens;
      for (uint64_t p = k; p <= n; p += k) {
        if (is_hit[p - 1]) out.append(p);
      }
      break;
    }
    case LayerKind::kVisionEmbedding: {
      if (n >= 1) out.append_range(1, n);
      break;
    }
  }
  return out;
}

std::pair<uint64_t, uint64_t> LayerPolicy::accessed_range(
    uint64_t prev_tokens, uint64_t new_tokens) const {
  if (new_tokens == 0) return {1, 0};
  switch (spec_.kind) {
    case LayerKind::kFullAttention:
    case LayerKind::kCrossAttention:
    case LayerKind::kVisionEmbedding:
      return {1, new_tokens};
    case LayerKind::kSlidingWindow: {
      // Union of the windows of every token processed this step.
      const uint64_t first_new = prev_tokens + 1;
      const uint64_t lo =
          first_new > spec_.window_tokens ? first_new - spec_.window_tokens + 1
                                          : 1;
      return {lo, new_tokens};
    }
    case LayerKind::kMamba: {
      const uint64_t k = spec_.checkpoint_interval_tokens;
      const uint64_t checkpoint = (new_tokens / k) * k;
      if (checkpoint == 0) return {1, 0};
      return {checkpoint, checkpoint};
    }
  }
  return {1, 0};
}

bool LayerPolicy::needs_token(uint64_t i, uint64_t new_tokens,
                              uint64_t consumed_tokens) const {
  JENGA_CHECK(i >= 1 && i <= new_tokens, "needs_token: ordinal out of range");
  switch (spec_.kind) {
    case LayerKind::kFullAttention:
    case LayerKind::kCrossAttention:
      return true;
    case LayerKind::kSlidingWindow:
      return i + spec_.window_tokens > new_tokens;
    case LayerKind::kMamba:
      return i == new_tokens;
    case LayerKind::kVisionEmbedding:
      return i > consumed_tokens;
  }
  return true;
}

}  // namespace jenga
