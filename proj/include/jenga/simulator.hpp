// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jenga/kv_allocator.hpp"
#include "jenga/model_config.hpp"
#include "jenga/trace.hpp"

namespace jenga {

// Raised when a run exceeds its step guard.
class RunGuardError : public std::runtime_error {
 public:
  explicit RunGuardError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class VisionMode { kAllocateOnDemand, kFullyAllocatedReuse };

const char* vision_mode_name(VisionMode m);
VisionMode vision_mode_from_name(const std::string& name);

struct SpeculativeConfig {
  ModelSpec draft_spec;
  uint32_t propose_k = 4;
  double acceptance_ratio = 0.7;
};

struct EngineConfig {
  AllocStrategy strategy = AllocStrategy::kJenga;
  uint64_t memory_budget = 0;
  uint64_t chunked_prefill_size = 512;
  bool prefix_caching = false;
  VisionMode vision_mode = VisionMode::kAllocateOnDemand;
  std::optional<SpeculativeConfig> speculative;
  std::vector<double> static_ratios;
  // Model weights and engine reservations: constants carved off the budget
  // before the KV pool is sized.
  uint64_t weight_bytes = 0;
  uint64_t reserved_bytes = 0;
  uint64_t seed = 0;
  uint64_t max_steps = 200000;
  bool request_aware = true;
};

struct StepMetrics {
  uint64_t step = 0;
  std::vector<uint64_t> used_bytes;  // per reporting group, needed KV only
  uint64_t wasted_bytes = 0;         // dead KV + stranded slots + padding
  uint64_t evictable_bytes = 0;
  uint64_t unallocated_bytes = 0;
  uint64_t reserved_bytes = 0;  // pool remainders + weights + reservations
  uint32_t decode_batch = 0;
  uint64_t prefill_tokens = 0;
  uint32_t preemptions = 0;
  uint64_t cache_hit_tokens = 0;

  uint64_t used_total() const {
    uint64_t n = 0;
    for (uint64_t u : used_bytes) n += u;
    return n;
  }
  uint64_t allocated_total() const {
    return used_total() + wasted_bytes + evictable_bytes;
  }
  double wasted_fraction() const {
    const uint64_t alloc = allocated_total();
    return alloc == 0 ? 0.0
                      : static_cast<double>(wasted_bytes) /
                            static_cast<double>(alloc);
  }
};

struct RunSummary {
  uint64_t steps = 0;
  uint64_t completed_requests = 0;
  uint64_t total_prompt_tokens = 0;   // prompt work including re-prefills
  uint64_t total_output_tokens = 0;
  uint64_t total_hit_tokens = 0;
  uint64_t total_preemptions = 0;
  double hit_rate = 0.0;              // hit tokens / prompt tokens
  double mean_decode_batch = 0.0;     // over steps that decoded
  double mean_wasted_fraction = 0.0;  // over steps with allocations
  uint64_t peak_allocated_bytes = 0;  // used + wasted + evictable
  uint64_t peak_kv_needed_bytes = 0;  // used only
  uint64_t peak_vision_bytes = 0;     // vision-embedding pages held
  // Speculative runs: peak used bytes per model.
  uint64_t peak_draft_bytes = 0;
  uint64_t peak_target_bytes = 0;
};

struct RunReport {
  std::vector<std::string> group_names;  // reporting groups (model order)
  std::vector<StepMetrics> steps;
  RunSummary summary;
};

// Discrete-step serving engine: continuous batching, chunked prefill,
// prefix caching, preemption on memory pressure.
class SimEngine {
 public:
  SimEngine(ModelSpec spec, EngineConfig config, Trace trace);

  // Advances one scheduler step and returns its metrics.
  StepMetrics step();
  bool done() const;
  RunReport run();  // steps until all requests complete

  uint64_t current_step() const { return now_; }
  KvAllocator& allocator() { return *kv_; }
  const std::vector<std::string>& reporting_groups() const {
    return report_groups_;
  }

 private:
  struct GroupRuntime {
    uint64_t stored = 0;
    std::vector<uint64_t> stored_positions;
    struct Block {
      SmallPageId page;
      bool live = false;
    };
    std::vector<Block> blocks;
    std::vector<BlockContent> chain;  // per full block, when caching
    uint64_t freed_blocks = 0;        // leading blocks no longer live
    uint64_t held_tokens = 0;         // stored ordinals inside live blocks
    uint64_t live_blocks = 0;
    uint64_t consumed_held = 0;       // vision: consumed ordinals still held
    uint64_t consumed_ordinals = 0;   // vision: ordinals consumed by prefill
    std::optional<SmallPageId> working_page;  // mamba state
    uint64_t checkpoints = 0;                 // mamba checkpoint blocks made
  };

  enum class Phase { kWaiting, kPrefill, kDecode, kDone };

  struct RequestRuntime {
    TraceRequest meta;
    std::vector<uint64_t> tokens;   // prompt + generated
    std::vector<uint8_t> is_image;
    struct ImageSpan {
      uint64_t begin = 0, end = 0;  // global positions, inclusive
      uint64_t content_id = 0;
    };
    std::vector<ImageSpan> images;
    Phase phase = Phase::kWaiting;
    uint64_t prompt_len = 0;   // prefill target (grows on preemption)
    uint64_t consumed = 0;     // prompt positions prefilled
    uint64_t generated = 0;    // output tokens produced so far
    uint64_t draft_len = 0;    // speculative: draft-model sequence length
    uint64_t blocked_until = 0;
    uint64_t hit_tokens_total = 0;
    bool suppress_window_free = false;  // fully-allocated prefill mode
    std::vector<GroupRuntime> groups;
    std::mt19937_64 spec_rng;  // speculative acceptance draws

    uint64_t seq_len() const { return tokens.size(); }
    bool running() const {
      return phase == Phase::kPrefill || phase == Phase::kDecode;
    }
  };

  // Group classification against the effective model.
  bool group_stores_position(size_t g, const RequestRuntime& r,
                             uint64_t pos) const;
  void materialize_prompt(RequestRuntime& r) const;
  uint64_t derived_token(const TraceRequest& meta, size_t segment,
                         uint64_t offset) const;

  bool decode_one(RequestRuntime& r);
  bool prefill_some(RequestRuntime& r, uint64_t* budget);
  bool admit(RequestRuntime& r, uint64_t* budget);
  void finish_prefill(RequestRuntime& r);
  bool store_position(RequestRuntime& r, size_t g, uint64_t pos);
  void free_block(RequestRuntime& r, size_t g, uint64_t block_index,
                  bool allow_cache);
  void append_chain(RequestRuntime& r, size_t g);
  void complete(RequestRuntime& r);
  void preempt(RequestRuntime& r);
  void release_all_pages(RequestRuntime& r, bool allow_cache);
  // False when the requester itself was preempted.
  bool alloc_with_preemption(RequestRuntime& r, size_t g, uint64_t block_index);
  RequestRuntime* most_recent_running();
  bool speculative_decode_one(RequestRuntime& r);
  void rollback_newest(RequestRuntime& r, size_t g, uint64_t count);
  void refresh_mamba_checkpoints(RequestRuntime& r);
  std::vector<GroupLookupInput> build_lookup_inputs(const RequestRuntime& r) const;
  void adopt_lookup_result(RequestRuntime& r, const LookupResult& result,
                           const std::vector<GroupLookupInput>& inputs);
  StepMetrics census();
  uint64_t image_ordinal(uint64_t content_id) const;

  ModelSpec spec_;          // reporting model (real groups)
  ModelSpec effective_spec_;  // groups the allocator sees
  EngineConfig config_;
  std::unique_ptr<KvAllocator> kv_;
  std::vector<RequestRuntime> requests_;
  std::vector<std::string> report_groups_;
  std::vector<size_t> draft_group_flags_;  // per effective group
  uint64_t now_ = 0;
  uint64_t completed_ = 0;
  uint64_t kv_budget_ = 0;
  // Step accumulators.
  uint32_t step_decode_batch_ = 0;
  uint64_t step_prefill_tokens_ = 0;
  uint32_t step_preemptions_ = 0;
  uint64_t step_hit_tokens_ = 0;
  uint64_t step_vision_bytes_ = 0;
  uint64_t step_draft_bytes_ = 0;
  uint64_t step_target_bytes_ = 0;
  uint64_t summary_prompt_tokens_ = 0;
  SmallPageId last_alloc_;  // page handed back by alloc_with_preemption
};

RunReport run_simulation(const ModelSpec& spec, const EngineConfig& config,
                         const Trace& trace);

void write_metrics_csv(const RunReport& report, std::ostream& os);
void write_summary_json(const RunReport& report, std::ostream& os);

}  // namespace jenga
