// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "jenga/util.hpp"

namespace jenga {

enum class LayerKind {
  kFullAttention,
  kSlidingWindow,
  kMamba,
  kCrossAttention,
  kVisionEmbedding,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

// One set of model layers sharing a KV size and dependency kind.
struct LayerGroupSpec {
  std::string name;
  LayerKind kind = LayerKind::kFullAttention;
  uint32_t num_layers = 0;
  uint64_t bytes_per_token_per_layer = 0;
  uint32_t tokens_per_page = 1;
  // Kind-specific parameters.
  uint64_t window_tokens = 0;              // sliding window
  uint64_t checkpoint_interval_tokens = 0; // mamba, default 512

  bool stores_image_tokens() const {
    return kind == LayerKind::kCrossAttention ||
           kind == LayerKind::kVisionEmbedding;
  }
};

struct ModelSpec {
  std::string name;
  std::vector<LayerGroupSpec> groups;

  // Throws ConfigError on any invariant violation.
  void validate() const;

  bool has_cross_attention() const;
  // Decoder-sequence groups (full/sliding/mamba) store image tokens too,
  // unless the model routes images through cross-attention encoder KV.
  bool decoder_stores_images() const { return !has_cross_attention(); }
  const LayerGroupSpec* find_group(const std::string& group_name) const;
};

enum class PageSizeStrategy { kLcm, kGcd, kMax, kUniform };

// Mean token counts of a workload, for analytic waste prediction.
// per_layer_embedding_bytes, when nonzero, overrides every group's
// per-layer byte size (the equal-embedding-size simplification).
struct WorkloadProfile {
  double text_tokens = 0.0;
  double image_tokens = 0.0;
  uint64_t per_layer_embedding_bytes = 0;
};

// bytes_per_token_per_layer * num_layers * tokens_per_page
uint64_t small_page_size(const LayerGroupSpec& group);

uint64_t compatible_page_size(const ModelSpec& spec, PageSizeStrategy strategy);

// LCM page size over the smallest small-page size. Writes a note to `diag`
// when the ratio exceeds 128.
double lcm_blowup_ratio(const ModelSpec& spec, std::ostream* diag = nullptr);

// 1 - ideal_bytes / uniform_bytes, where uniform charges every token for
// all layers of all groups and ideal charges each group only for the
// tokens it actually stores.
double predict_uniform_waste(const ModelSpec& spec,
                             const WorkloadProfile& profile);

ModelSpec parse_model_spec_json(const std::string& json_text);
ModelSpec load_model_spec(const std::string& path);

}  // namespace jenga
