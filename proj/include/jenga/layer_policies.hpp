// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "jenga/model_config.hpp"
#include "jenga/range_set.hpp"

namespace jenga {

// Per-layer-kind behavior behind eviction and cache-hit customization.
//
// All token arguments are ordinals on the group's stored axis: position i
// means the i-th token this group stores for the request (1-based). Groups
// that store only a subset of the sequence (cross-attention image KV, vision
// embeddings) are mapped onto this axis by the caller.
class LayerPolicy {
 public:
  explicit LayerPolicy(const LayerGroupSpec& spec) : spec_(spec) {}

  LayerKind kind() const { return spec_.kind; }
  uint64_t window() const { return spec_.window_tokens; }
  uint64_t checkpoint_interval() const {
    return spec_.checkpoint_interval_tokens;
  }

  // Tokens whose pages must be resident to reuse a prefix of p stored
  // tokens. Sets *defined=false for prefixes the layer cannot hit at all
  // (mamba lengths that are not checkpoint multiples).
  std::vector<uint64_t> required_tokens(uint64_t p, bool* defined = nullptr) const;

  // All valid prefix lengths given per-token cache residency.
  // is_hit[i] corresponds to stored token i+1.
  PrefixRangeSet possible_prefixes(const std::vector<bool>& is_hit) const;

  // Inclusive range of stored tokens whose last access is stamped when the
  // request advances from prev_tokens to new_tokens in one step. Returns
  // {1, 0} (empty) when nothing is stamped.
  std::pair<uint64_t, uint64_t> accessed_range(uint64_t prev_tokens,
                                               uint64_t new_tokens) const;

  // Whether token i must stay resident while the request runs at
  // new_tokens stored tokens with consumed_tokens already prefilled.
  // Drives out-of-window freeing and the uniform-layout waste census.
  bool needs_token(uint64_t i, uint64_t new_tokens,
                   uint64_t consumed_tokens) const;

  // Eviction ordinals for cross-attention and vision pages are drawn per
  // image rather than derived from position.
  bool uses_image_ordinal() const { return spec_.stores_image_tokens(); }

  // Mamba state is updated in place; per-token pages exist only as the
  // working state plus checkpoints.
  bool is_recurrent_state() const { return spec_.kind == LayerKind::kMamba; }

 private:
  LayerGroupSpec spec_;
};

}  // namespace jenga
