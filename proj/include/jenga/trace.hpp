// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jenga/util.hpp"

namespace jenga {

struct Segment {
  bool is_image = false;
  uint64_t tokens = 0;
};

// One serving request. Token content is derived deterministically:
// requests sharing a prefix_group share the token stream of every segment
// except the last (the last segment is unique per request), and a
// single-segment request with a prefix_group is shared in full.
struct TraceRequest {
  uint64_t id = 0;
  uint64_t arrival_step = 0;
  std::vector<Segment> segments;
  uint64_t output_tokens = 1;
  std::optional<std::string> prefix_group;

  uint64_t prompt_tokens() const {
    uint64_t n = 0;
    for (const auto& s : segments) n += s.tokens;
    return n;
  }
};

struct Trace {
  std::vector<TraceRequest> requests;
};

// Line-delimited JSON records.
Trace parse_trace_jsonl(const std::string& text);
Trace load_trace(const std::string& path);
std::string trace_to_jsonl(const Trace& trace);
void save_trace(const Trace& trace, const std::string& path);

// Synthetic workload generators. All deterministic under (params, seed).
// `scale` shrinks input token counts for desk-scale runs; output lengths
// are not scaled so decode phases stay meaningful.
struct LongDocQaParams {
  uint32_t num_requests = 20;
  uint64_t input_min = 55000;
  uint64_t input_max = 110000;
  uint64_t output_min = 50;
  uint64_t output_max = 100;
  double scale = 1.0;
};
Trace gen_long_doc_qa(const LongDocQaParams& p, uint64_t seed);

struct MultiArticleParams {
  uint32_t num_articles = 4;
  uint32_t questions_per_article = 3;
  uint64_t article_tokens = 4000;
  uint64_t question_tokens = 50;
  uint64_t output_tokens = 20;
  // Questions arrive in rounds: round r of every article arrives at
  // r * round_spacing_steps, so earlier rounds finish (and cache) first.
  uint64_t round_spacing_steps = 200;
  double scale = 1.0;
};
Trace gen_multi_article_prefix(const MultiArticleParams& p, uint64_t seed);

struct DynamicLengthParams {
  uint32_t num_requests = 40;
  uint64_t input_min_start = 2000;   // mean input at the start of the trace
  uint64_t input_min_end = 20000;    // mean input at the end
  uint64_t output_min = 20;
  uint64_t output_max = 60;
  uint64_t arrival_spacing_steps = 10;
  double scale = 1.0;
};
Trace gen_dynamic_length(const DynamicLengthParams& p, uint64_t seed);

struct VisionMmmuParams {
  uint32_t num_requests = 10;
  uint64_t mean_image_tokens = 6193;
  uint64_t mean_text_tokens = 43;
  uint64_t output_min = 10;
  uint64_t output_max = 30;
  uint64_t arrival_spacing_steps = 0;
  double scale = 1.0;  // applies to image token counts only
};
Trace gen_vision_mmmu_like(const VisionMmmuParams& p, uint64_t seed);

}  // namespace jenga
