// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

namespace jenga {

const char* vision_mode_name(VisionMode m) {
  switch (m) {
    case VisionMode::kAllocateOnDemand:
      return "on_demand";
    case VisionMode::kFullyAllocatedReuse:
      return "full_reuse";
  }
  return "?";
}

VisionMode vision_mode_from_name(const std::string& name) {
  if (name == "on_demand") return VisionMode::kAllocateOnDemand;
  if (name == "full_reuse") return VisionMode::kFullyAllocatedReuse;
  throw ConfigError("unknown vision mode '" + name + "'");
}

namespace {

ModelSpec combine_with_draft(const ModelSpec& target, const ModelSpec& draft) {
  ModelSpec combined = target;
  combined.name = target.name + "+draft";
  for (LayerGroupSpec g : draft.groups) {
    g.name = "draft." + g.name;
    combined.groups.push_back(std::move(g));
  }
  combined.validate();
  return combined;
}

uint64_t binomial_draw(std::mt19937_64& rng, uint32_t n, double p) {
  std::bernoulli_distribution coin(std::clamp(p, 0.0, 1.0));
  uint64_t successes = 0;
  for (uint32_t i = 0; i < n; ++i) {
    if (coin(rng)) ++successes;
  }
  return successes;
}

}  // namespace

SimEngine::SimEngine(ModelSpec spec, EngineConfig config, Trace trace)
    : spec_(std::move(spec)), config_(std::move(config)) {
  spec_.validate();
  if (config_.speculative.has_value()) {
    if (config_.prefix_caching) {
      throw ConfigError("speculative runs do not support prefix caching");
    }
    if (config_.strategy == AllocStrategy::kUniform) {
      throw ConfigError("speculative runs need per-type pages; use jenga, "
                        "max_page, gcd_page or static");
    }
    spec_ = combine_with_draft(spec_, config_.speculative->draft_spec);
  }
  const uint64_t overhead = config_.weight_bytes + config_.reserved_bytes;
  if (config_.memory_budget <= overhead) {
    throw ConfigError("memory budget does not cover weights and reservations");
  }
  kv_budget_ = config_.memory_budget - overhead;
  kv_ = std::make_unique<KvAllocator>(spec_, config_.strategy, kv_budget_,
                                      config_.static_ratios);
  kv_->set_request_aware(config_.request_aware);
  for (const auto& g : spec_.groups) report_groups_.push_back(g.name);
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    draft_group_flags_.push_back(
        kv_->group(g).name.rfind("draft.", 0) == 0 ? 1 : 0);
  }
  if (config_.vision_mode == VisionMode::kFullyAllocatedReuse &&
      !kv_->geometry().merged) {
    // The reuse trick parks embeddings in allocated-but-unwritten KV pages,
    // which needs per-token KV at least as large as the embedding.
    uint64_t kv_per_token = 0, vision_per_token = 0;
    for (const auto& g : spec_.groups) {
      const uint64_t b = g.bytes_per_token_per_layer * g.num_layers;
      if (g.kind == LayerKind::kVisionEmbedding) {
        vision_per_token += b;
      } else if (!g.stores_image_tokens()) {
        kv_per_token += b;
      }
    }
    if (vision_per_token > 0 && vision_per_token > kv_per_token) {
      throw ConfigError(
          "full_reuse vision mode requires per-token KV >= embedding size");
    }
  }

  std::set<uint64_t> ids;
  for (const auto& r : trace.requests) {
    if (!ids.insert(r.id).second) {
      throw ConfigError("duplicate request id " + std::to_string(r.id));
    }
  }
  requests_.reserve(trace.requests.size());
  for (const auto& meta : trace.requests) {
    RequestRuntime r;
    r.meta = meta;
    r.spec_rng.seed(mix64(config_.seed, mix64(meta.id, 0x5bec)));
    materialize_prompt(r);
    requests_.push_back(std::move(r));
  }
  std::stable_sort(requests_.begin(), requests_.end(),
                   [](const RequestRuntime& a, const RequestRuntime& b) {
                     return std::tie(a.meta.arrival_step, a.meta.id) <
                            std::tie(b.meta.arrival_step, b.meta.id);
                   });
}

uint64_t SimEngine::derived_token(const TraceRequest& meta, size_t segment,
                                  uint64_t offset) const {
  const bool shared =
      meta.prefix_group.has_value() &&
      (meta.segments.size() == 1 || segment + 1 < meta.segments.size());
  const uint64_t base =
      shared ? mix64(hash_str(*meta.prefix_group), segment)
             : mix64(mix64(meta.id, 0x9e11), segment);
  return mix64(base, offset);
}

void SimEngine::materialize_prompt(RequestRuntime& r) const {
  uint64_t pos = 0;
  for (size_t s = 0; s < r.meta.segments.size(); ++s) {
    const Segment& seg = r.meta.segments[s];
    if (seg.is_image && seg.tokens > 0) {
      RequestRuntime::ImageSpan span;
      span.begin = pos + 1;
      span.end = pos + seg.tokens;
      span.content_id = mix64(derived_token(r.meta, s, 0), 0x1d347);
      r.images.push_back(span);
    }
    for (uint64_t o = 0; o < seg.tokens; ++o) {
      r.tokens.push_back(derived_token(r.meta, s, o));
      r.is_image.push_back(seg.is_image ? 1 : 0);
      ++pos;
    }
  }
  r.prompt_len = r.tokens.size();
}

bool SimEngine::group_stores_position(size_t g, const RequestRuntime& r,
                                      uint64_t pos) const {
  if (kv_->geometry().merged) return true;
  const LayerGroupSpec& grp = kv_->group(g);
  const bool image = r.is_image[pos - 1] != 0;
  if (grp.stores_image_tokens()) return image;
  return !image || spec_.decoder_stores_images();
}

uint64_t SimEngine::image_ordinal(uint64_t content_id) const {
  return mix64(config_.seed, mix64(content_id, 0x0e0e));
}

bool SimEngine::alloc_with_preemption(RequestRuntime& r, size_t g,
                                      uint64_t block_index) {
  (void)block_index;
  for (;;) {
    auto res = kv_->allocate(g, r.meta.id);
    if (res.has_value()) {
      // Caller wires the page into the runtime; stash it via last_alloc_.
      last_alloc_ = res->page;
      return true;
    }
    RequestRuntime* victim = most_recent_running();
    JENGA_CHECK(victim != nullptr, "allocation without a running request");
    const bool self = victim == &r;
    preempt(*victim);
    ++step_preemptions_;
    if (self) return false;
  }
}

SimEngine::RequestRuntime* SimEngine::most_recent_running() {
  RequestRuntime* best = nullptr;
  for (auto& r : requests_) {
    if (!r.running()) continue;
    if (best == nullptr ||
        std::tie(r.meta.arrival_step, r.meta.id) >
            std::tie(best->meta.arrival_step, best->meta.id)) {
      best = &r;
    }
  }
  return best;
}

void SimEngine::append_chain(RequestRuntime& r, size_t g) {
  if (!config_.prefix_caching) return;
  GroupRuntime& rt = r.groups[g];
  const LayerPolicy& pol = kv_->policy(g);
  const uint64_t t = pol.is_recurrent_state()
                         ? pol.checkpoint_interval()
                         : kv_->group(g).tokens_per_page;
  while ((rt.chain.size() + 1) * t <= rt.stored) {
    BlockContent c;
    c.parent_key = rt.chain.empty() ? block_chain_salt(kv_->group(g).name)
                                    : rt.chain.back().key;
    const uint64_t first_ordinal = rt.chain.size() * t;  // 0-based
    for (uint64_t i = 0; i < t; ++i) {
      const uint64_t pos = rt.stored_positions[first_ordinal + i];
      c.tokens.push_back(r.tokens[pos - 1]);
    }
    c.key = chain_block_key(c.parent_key, c.tokens);
    rt.chain.push_back(std::move(c));
  }
}

bool SimEngine::store_position(RequestRuntime& r, size_t g, uint64_t pos) {
  GroupRuntime& rt = r.groups[g];
  const LayerPolicy& pol = kv_->policy(g);
  const LayerGroupSpec& grp = kv_->group(g);

  if (pol.is_recurrent_state()) {
    if (!rt.working_page.has_value()) {
      if (!alloc_with_preemption(r, g, 0)) return false;
      rt.working_page = last_alloc_;
      kv_->type_allocator(g).set_prefix_length(*rt.working_page, 0);
    }
    rt.stored++;
    rt.stored_positions.push_back(pos);
    append_chain(r, g);
    const uint64_t k = pol.checkpoint_interval();
    if (config_.prefix_caching && rt.stored % k == 0) {
      // Snapshot the state; the page is cached immediately and the request
      // keeps decoding on its working page.
      if (!alloc_with_preemption(r, g, rt.stored / k)) return false;
      const SmallPageId page = last_alloc_;
      TypeAllocator& ta = kv_->type_allocator(g);
      ta.set_prefix_length(page, pos);
      ta.touch(page, now_);
      rt.checkpoints = rt.stored / k;
      kv_->free(g, page, rt.chain[rt.checkpoints - 1]);
    }
    return true;
  }

  rt.stored++;
  rt.stored_positions.push_back(pos);
  const uint64_t t = grp.tokens_per_page;
  const uint64_t bidx = (rt.stored - 1) / t;
  if (bidx >= rt.blocks.size()) {
    if (!alloc_with_preemption(r, g, bidx)) return false;
    rt.blocks.push_back(GroupRuntime::Block{last_alloc_, true});
    rt.live_blocks++;
  } else {
    JENGA_CHECK(rt.blocks[bidx].live, "stored into a dead block");
  }
  rt.held_tokens++;
  append_chain(r, g);

  TypeAllocator& ta = kv_->type_allocator(g);
  const uint64_t ordinal_value =
      pol.uses_image_ordinal()
          ? image_ordinal([&] {
              for (const auto& img : r.images) {
                if (pos >= img.begin && pos <= img.end) return img.content_id;
              }
              return mix64(r.meta.id, pos);
            }())
          : pos;
  ta.set_prefix_length(rt.blocks[bidx].page, ordinal_value);

  if (grp.kind == LayerKind::kSlidingWindow && !r.suppress_window_free) {
    const uint64_t w = grp.window_tokens;
    if (rt.stored > w) {
      const uint64_t exited = rt.stored - w;  // ordinals <= exited are out
      while (rt.freed_blocks * t + t <= exited) {
        free_block(r, g, rt.freed_blocks, /*allow_cache=*/true);
      }
    }
  }
  return true;
}

void SimEngine::free_block(RequestRuntime& r, size_t g, uint64_t block_index,
                           bool allow_cache) {
  GroupRuntime& rt = r.groups[g];
  JENGA_CHECK(block_index < rt.blocks.size(), "free of unknown block");
  GroupRuntime::Block& blk = rt.blocks[block_index];
  JENGA_CHECK(blk.live, "free of a dead block");
  const uint64_t t = kv_->group(g).tokens_per_page;
  const uint64_t covered =
      std::min(rt.stored, (block_index + 1) * t) - block_index * t;
  TypeAllocator& ta = kv_->type_allocator(g);
  ta.touch(blk.page, now_);
  const bool cacheable = allow_cache && config_.prefix_caching &&
                         block_index < rt.chain.size();
  if (cacheable) {
    kv_->free(g, blk.page, rt.chain[block_index]);
  } else {
    kv_->free(g, blk.page, std::nullopt);
  }
  blk.live = false;
  rt.live_blocks--;
  rt.held_tokens -= covered;
  if (kv_->group(g).kind == LayerKind::kVisionEmbedding) {
    rt.consumed_held -= std::min(rt.consumed_held, covered);
  }
  while (rt.freed_blocks < rt.blocks.size() &&
         !rt.blocks[rt.freed_blocks].live) {
    rt.freed_blocks++;
  }
}

void SimEngine::release_all_pages(RequestRuntime& r, bool allow_cache) {
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    GroupRuntime& rt = r.groups[g];
    for (uint64_t b = 0; b < rt.blocks.size(); ++b) {
      if (rt.blocks[b].live) free_block(r, g, b, allow_cache);
    }
    if (rt.working_page.has_value()) {
      TypeAllocator& ta = kv_->type_allocator(g);
      ta.touch(*rt.working_page, now_);
      kv_->free(g, *rt.working_page, std::nullopt);
      rt.working_page.reset();
    }
  }
}

void SimEngine::preempt(RequestRuntime& r) {
  JENGA_CHECK(r.running(), "preempt of a non-running request");
  release_all_pages(r, config_.prefix_caching);
  r.groups.assign(kv_->num_groups(), GroupRuntime{});
  r.phase = Phase::kWaiting;
  r.blocked_until = now_ + 1;
  r.consumed = 0;
  r.draft_len = 0;
  r.suppress_window_free = false;
}

void SimEngine::complete(RequestRuntime& r) {
  release_all_pages(r, config_.prefix_caching);
  r.groups.assign(kv_->num_groups(), GroupRuntime{});
  r.phase = Phase::kDone;
  ++completed_;
}

void SimEngine::refresh_mamba_checkpoints(RequestRuntime& r) {
  if (!config_.prefix_caching) return;
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    const LayerPolicy& pol = kv_->policy(g);
    if (!pol.is_recurrent_state()) continue;
    GroupRuntime& rt = r.groups[g];
    if (rt.checkpoints == 0 || rt.chain.size() < rt.checkpoints) continue;
    const BlockContent& latest = rt.chain[rt.checkpoints - 1];
    auto page = kv_->cache().find(g, latest);
    if (page.has_value()) kv_->type_allocator(g).touch(*page, now_);
  }
}

std::vector<GroupLookupInput> SimEngine::build_lookup_inputs(
    const RequestRuntime& r) const {
  std::vector<GroupLookupInput> inputs(kv_->num_groups());
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    GroupLookupInput& in = inputs[g];
    const LayerPolicy& pol = kv_->policy(g);
    const LayerGroupSpec& grp = kv_->group(g);
    for (uint64_t pos = 1; pos <= r.prompt_len; ++pos) {
      if (group_stores_position(g, r, pos)) in.stored_positions.push_back(pos);
    }
    if (grp.kind == LayerKind::kVisionEmbedding) continue;  // never cached
    const uint64_t t =
        pol.is_recurrent_state() ? pol.checkpoint_interval() : grp.tokens_per_page;
    const uint64_t full_blocks = in.stored_positions.size() / t;
    uint64_t parent = block_chain_salt(grp.name);
    for (uint64_t b = 0; b < full_blocks; ++b) {
      BlockContent c;
      c.parent_key = parent;
      for (uint64_t i = 0; i < t; ++i) {
        const uint64_t pos = in.stored_positions[b * t + i];
        c.tokens.push_back(r.tokens[pos - 1]);
      }
      c.key = chain_block_key(c.parent_key, c.tokens);
      parent = c.key;
      in.blocks.push_back(std::move(c));
      in.block_end_ordinal.push_back((b + 1) * t);
    }
  }
  return inputs;
}

void SimEngine::adopt_lookup_result(RequestRuntime& r,
                                    const LookupResult& result,
                                    const std::vector<GroupLookupInput>& inputs) {
  const uint64_t hit = result.hit_length;
  if (hit == 0) return;
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    GroupRuntime& rt = r.groups[g];
    const GroupLookupInput& in = inputs[g];
    const LayerPolicy& pol = kv_->policy(g);
    const LayerGroupSpec& grp = kv_->group(g);
    const uint64_t m = static_cast<uint64_t>(
        std::upper_bound(in.stored_positions.begin(), in.stored_positions.end(),
                         hit) -
        in.stored_positions.begin());
    if (grp.kind == LayerKind::kVisionEmbedding) continue;  // no pages to adopt
    rt.stored = m;
    rt.stored_positions.assign(in.stored_positions.begin(),
                               in.stored_positions.begin() + m);
    if (pol.is_recurrent_state()) {
      const uint64_t k = pol.checkpoint_interval();
      JENGA_CHECK(m % k == 0, "mamba hit not on a checkpoint boundary");
      rt.checkpoints = m / k;
      rt.chain.assign(in.blocks.begin(), in.blocks.begin() + rt.checkpoints);
      continue;  // working page allocated on the next stored token
    }
    const uint64_t t = grp.tokens_per_page;
    const uint64_t covering = (m + t - 1) / t;
    rt.blocks.assign(covering, GroupRuntime::Block{});
    rt.chain.assign(in.blocks.begin(),
                    in.blocks.begin() +
                        std::min<uint64_t>(covering, in.blocks.size()));
    for (const auto& [b, page] : result.pinned[g]) {
      JENGA_CHECK(b < covering, "pinned block beyond hit prefix");
      rt.blocks[b] = GroupRuntime::Block{page, true};
      rt.live_blocks++;
      rt.held_tokens += std::min(m, (b + 1) * t) - b * t;
    }
    while (rt.freed_blocks < rt.blocks.size() &&
           !rt.blocks[rt.freed_blocks].live) {
      rt.freed_blocks++;
    }
  }
}

bool SimEngine::admit(RequestRuntime& r, uint64_t* budget) {
  r.prompt_len = r.tokens.size();
  r.groups.assign(kv_->num_groups(), GroupRuntime{});
  r.phase = Phase::kPrefill;
  r.consumed = 0;
  r.suppress_window_free = false;
  summary_prompt_tokens_ += r.prompt_len;

  if (config_.prefix_caching) {
    const auto inputs = build_lookup_inputs(r);
    const LookupResult res =
        kv_->lookup_and_pin(inputs, r.prompt_len, r.meta.id);
    adopt_lookup_result(r, res, inputs);
    r.consumed = res.hit_length;
    r.hit_tokens_total += res.hit_length;
    step_hit_tokens_ += res.hit_length;
  }

  const bool merged = kv_->geometry().merged;
  if (!merged && config_.vision_mode == VisionMode::kAllocateOnDemand) {
    // Encode: embeddings for every image not fully covered by the hit.
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      if (kv_->group(g).kind != LayerKind::kVisionEmbedding) continue;
      for (const auto& img : r.images) {
        if (img.end <= r.consumed) continue;
        for (uint64_t pos = img.begin; pos <= img.end; ++pos) {
          if (!store_position(r, g, pos)) return false;
        }
      }
    }
  }
  if (!merged && config_.vision_mode == VisionMode::kFullyAllocatedReuse) {
    // All prompt KV allocated up front; embeddings overlay unwritten pages.
    r.suppress_window_free = true;
    for (uint64_t pos = r.consumed + 1; pos <= r.prompt_len; ++pos) {
      for (size_t g = 0; g < kv_->num_groups(); ++g) {
        if (kv_->group(g).kind == LayerKind::kVisionEmbedding) continue;
        if (!group_stores_position(g, r, pos)) continue;
        if (!store_position(r, g, pos)) return false;
      }
    }
  }
  if (r.consumed >= r.prompt_len) {
    finish_prefill(r);
    return true;
  }
  return prefill_some(r, budget);
}

void SimEngine::finish_prefill(RequestRuntime& r) {
  if (r.suppress_window_free) {
    // Deferred out-of-window frees now that the prompt is written.
    r.suppress_window_free = false;
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      const LayerGroupSpec& grp = kv_->group(g);
      if (grp.kind != LayerKind::kSlidingWindow) continue;
      GroupRuntime& rt = r.groups[g];
      const uint64_t w = grp.window_tokens;
      if (rt.stored <= w) continue;
      const uint64_t t = grp.tokens_per_page;
      const uint64_t exited = rt.stored - w;
      while (rt.freed_blocks * t + t <= exited) {
        free_block(r, g, rt.freed_blocks, /*allow_cache=*/true);
      }
    }
  }
  r.phase = Phase::kDecode;
}

bool SimEngine::prefill_some(RequestRuntime& r, uint64_t* budget) {
  const bool merged = kv_->geometry().merged;
  const bool prealloc =
      !merged && config_.vision_mode == VisionMode::kFullyAllocatedReuse;
  while (*budget > 0 && r.consumed < r.prompt_len) {
    const uint64_t pos = r.consumed + 1;
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      const LayerGroupSpec& grp = kv_->group(g);
      if (!merged && grp.kind == LayerKind::kVisionEmbedding) continue;
      if (prealloc) continue;  // pages already exist
      if (!group_stores_position(g, r, pos)) continue;
      GroupRuntime& rt = r.groups[g];
      if (!rt.stored_positions.empty() && pos <= rt.stored_positions.back()) {
        continue;  // already covered by a pinned block
      }
      if (!store_position(r, g, pos)) return false;
    }
    r.consumed++;
    (*budget)--;
    step_prefill_tokens_++;

    // Consume vision embeddings for image positions as they prefill.
    if (!merged && config_.vision_mode == VisionMode::kAllocateOnDemand &&
        r.is_image[pos - 1]) {
      for (size_t g = 0; g < kv_->num_groups(); ++g) {
        const LayerGroupSpec& grp = kv_->group(g);
        if (grp.kind != LayerKind::kVisionEmbedding) continue;
        GroupRuntime& rt = r.groups[g];
        rt.consumed_ordinals++;
        rt.consumed_held++;
        const uint64_t t = grp.tokens_per_page;
        while (rt.freed_blocks < rt.blocks.size() &&
               rt.blocks[rt.freed_blocks].live &&
               std::min(rt.stored, (rt.freed_blocks + 1) * t) <=
                   rt.consumed_ordinals) {
          free_block(r, g, rt.freed_blocks, /*allow_cache=*/false);
        }
      }
    }
  }
  refresh_mamba_checkpoints(r);
  if (r.consumed >= r.prompt_len) finish_prefill(r);
  return true;
}

bool SimEngine::decode_one(RequestRuntime& r) {
  if (config_.speculative.has_value()) return speculative_decode_one(r);
  refresh_mamba_checkpoints(r);
  const uint64_t pos = r.seq_len() + 1;
  r.tokens.push_back(mix64(mix64(r.meta.id, 0xdec0de), r.generated));
  r.is_image.push_back(0);
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    if (!group_stores_position(g, r, pos)) continue;
    if (!store_position(r, g, pos)) {
      r.tokens.pop_back();
      r.is_image.pop_back();
      return false;
    }
  }
  r.generated++;
  if (r.generated >= r.meta.output_tokens) complete(r);
  return true;
}

void SimEngine::rollback_newest(RequestRuntime& r, size_t g, uint64_t count) {
  GroupRuntime& rt = r.groups[g];
  const LayerPolicy& pol = kv_->policy(g);
  if (pol.is_recurrent_state()) {
    const uint64_t drop = std::min(count, rt.stored);
    rt.stored -= drop;
    rt.stored_positions.resize(rt.stored);
    return;
  }
  const uint64_t t = kv_->group(g).tokens_per_page;
  for (uint64_t i = 0; i < count && rt.stored > 0; ++i) {
    const uint64_t bidx = (rt.stored - 1) / t;
    rt.stored--;
    rt.stored_positions.pop_back();
    if (bidx < rt.blocks.size() && rt.blocks[bidx].live) {
      rt.held_tokens--;
      if (rt.stored <= bidx * t) {
        // Block emptied out; drop the page entirely.
        TypeAllocator& ta = kv_->type_allocator(g);
        ta.touch(rt.blocks[bidx].page, now_);
        kv_->free(g, rt.blocks[bidx].page, std::nullopt);
        rt.blocks[bidx].live = false;
        rt.live_blocks--;
        rt.blocks.pop_back();
      }
    }
  }
  while (!rt.chain.empty() && rt.chain.size() * t > rt.stored) {
    rt.chain.pop_back();
  }
}

bool SimEngine::speculative_decode_one(RequestRuntime& r) {
  const SpeculativeConfig& sc = *config_.speculative;
  // Draft proposes propose_k tokens.
  for (uint32_t i = 1; i <= sc.propose_k; ++i) {
    const uint64_t pos = r.draft_len + i;
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      if (!draft_group_flags_[g]) continue;
      if (!store_position(r, g, pos)) return false;
    }
  }
  const uint64_t accepted =
      binomial_draw(r.spec_rng, sc.propose_k, sc.acceptance_ratio);
  // Rejected proposals roll back.
  for (size_t g = 0; g < kv_->num_groups(); ++g) {
    if (!draft_group_flags_[g]) continue;
    rollback_newest(r, g, sc.propose_k - accepted);
  }
  r.draft_len += accepted;
  // Target verifies: accepted tokens, or a single token on full rejection.
  const uint64_t target_new = std::max<uint64_t>(accepted, 1);
  for (uint64_t j = 0; j < target_new; ++j) {
    const uint64_t pos = r.seq_len() + 1;
    r.tokens.push_back(mix64(mix64(r.meta.id, 0xdec0de), r.generated));
    r.is_image.push_back(0);
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      if (draft_group_flags_[g]) continue;
      if (!group_stores_position(g, r, pos)) continue;
      if (!store_position(r, g, pos)) {
        r.tokens.pop_back();
        r.is_image.pop_back();
        return false;
      }
    }
    r.generated++;
    if (r.generated >= r.meta.output_tokens) {
      complete(r);
      return true;
    }
  }
  return true;
}

StepMetrics SimEngine::step() {
  step_decode_batch_ = 0;
  step_prefill_tokens_ = 0;
  step_preemptions_ = 0;
  step_hit_tokens_ = 0;

  // Decode running requests in admission order.
  std::vector<uint64_t> decode_ids;
  for (const auto& r : requests_) {
    if (r.phase == Phase::kDecode) decode_ids.push_back(r.meta.id);
  }
  for (uint64_t id : decode_ids) {
    auto it = std::find_if(requests_.begin(), requests_.end(),
                           [&](const RequestRuntime& r) { return r.meta.id == id; });
    if (it == requests_.end() || it->phase != Phase::kDecode) continue;
    if (decode_one(*it)) step_decode_batch_++;
  }

  // Chunked prefill: continue in-flight prefills, then admit.
  uint64_t budget = config_.chunked_prefill_size;
  for (auto& r : requests_) {
    if (budget == 0) break;
    if (r.phase != Phase::kPrefill) continue;
    prefill_some(r, &budget);
  }
  for (auto& r : requests_) {
    if (budget == 0) break;
    if (r.phase != Phase::kWaiting) continue;
    if (r.meta.arrival_step > now_ || r.blocked_until > now_) continue;
    admit(r, &budget);
  }

  StepMetrics m = census();
  ++now_;
  return m;
}

StepMetrics SimEngine::census() {
  StepMetrics m;
  m.step = now_;
  m.used_bytes.assign(report_groups_.size(), 0);
  m.decode_batch = step_decode_batch_;
  m.prefill_tokens = step_prefill_tokens_;
  m.preemptions = step_preemptions_;
  m.cache_hit_tokens = step_hit_tokens_;

  const bool merged = kv_->geometry().merged;
  uint64_t dead = 0;
  uint64_t vision_bytes = 0;
  uint64_t draft_used = 0, target_used = 0;

  for (const auto& r : requests_) {
    if (!r.running()) continue;
    if (merged) {
      const GroupRuntime& rt = r.groups[0];
      const uint64_t n = rt.stored;  // computed positions, all live
      if (n == 0) continue;
      uint64_t image_n = 0;
      for (const auto& img : r.images) {
        if (img.begin > n) break;
        image_n += std::min(img.end, n) - img.begin + 1;
      }
      const uint64_t text_n = n - image_n;
      uint64_t needed_total = 0;
      for (size_t gi = 0; gi < spec_.groups.size(); ++gi) {
        const LayerGroupSpec& grp = spec_.groups[gi];
        const uint64_t share = small_page_size(grp);
        uint64_t stored_by_g = 0;
        switch (grp.kind) {
          case LayerKind::kFullAttention:
          case LayerKind::kSlidingWindow:
          case LayerKind::kMamba:
            stored_by_g = spec_.decoder_stores_images() ? n : text_n;
            break;
          case LayerKind::kCrossAttention:
          case LayerKind::kVisionEmbedding:
            stored_by_g = image_n;
            break;
        }
        uint64_t need = 0;
        switch (grp.kind) {
          case LayerKind::kFullAttention:
          case LayerKind::kCrossAttention:
            need = stored_by_g;
            break;
          case LayerKind::kSlidingWindow:
            need = std::min<uint64_t>(grp.window_tokens, stored_by_g);
            break;
          case LayerKind::kMamba:
            need = stored_by_g > 0 ? 1 : 0;
            break;
          case LayerKind::kVisionEmbedding:
            need = 0;  // no embedding cache in the uniform layout
            break;
        }
        m.used_bytes[gi] += need * share;
        needed_total += need * share;
      }
      const uint64_t page_bytes =
          n * kv_->type_allocator(0).geometry().small_page_bytes;
      JENGA_CHECK(page_bytes >= needed_total, "needed exceeds allocated");
      dead += page_bytes - needed_total;
      target_used += needed_total;
      continue;
    }
    for (size_t g = 0; g < kv_->num_groups(); ++g) {
      const GroupRuntime& rt = r.groups[g];
      const LayerGroupSpec& grp = kv_->group(g);
      const LayerPolicy& pol = kv_->policy(g);
      const uint64_t small = kv_->type_allocator(g).geometry().small_page_bytes;
      const uint64_t per_token = small / std::max<uint32_t>(1, grp.tokens_per_page);
      uint64_t pages = rt.live_blocks;
      uint64_t needed_tokens = 0;
      uint64_t needed_bytes = 0;
      if (pol.is_recurrent_state()) {
        pages = rt.working_page.has_value() ? 1 : 0;
        needed_bytes = pages * small;
      } else {
        switch (grp.kind) {
          case LayerKind::kFullAttention:
          case LayerKind::kCrossAttention:
            needed_tokens = rt.held_tokens;
            break;
          case LayerKind::kSlidingWindow:
            needed_tokens = std::min<uint64_t>(grp.window_tokens, rt.stored);
            break;
          case LayerKind::kVisionEmbedding:
            needed_tokens = rt.held_tokens - rt.consumed_held;
            break;
          case LayerKind::kMamba:
            break;
        }
        needed_bytes = needed_tokens * per_token;
      }
      const uint64_t page_bytes = pages * small;
      JENGA_CHECK(page_bytes >= needed_bytes, "needed exceeds allocated");
      m.used_bytes[g] += needed_bytes;
      dead += page_bytes - needed_bytes;
      if (grp.kind == LayerKind::kVisionEmbedding) vision_bytes += page_bytes;
      if (g < draft_group_flags_.size() && draft_group_flags_[g]) {
        draft_used += needed_bytes;
      } else {
        target_used += needed_bytes;
      }
    }
  }

  m.evictable_bytes = kv_->evictable_bytes();
  m.wasted_bytes = dead + kv_->stranded_bytes();
  m.unallocated_bytes = kv_->unallocated_bytes();
  m.reserved_bytes = kv_->reserved_remainder_bytes() + config_.weight_bytes +
                     config_.reserved_bytes;
  JENGA_CHECK(m.used_total() + m.wasted_bytes + m.evictable_bytes +
                      m.unallocated_bytes + m.reserved_bytes ==
                  config_.memory_budget,
              "step byte conservation violated");

  step_vision_bytes_ = vision_bytes;
  step_draft_bytes_ = draft_used;
  step_target_bytes_ = target_used;
  return m;
}

bool SimEngine::done() const { return completed_ == requests_.size(); }

RunReport SimEngine::run() {
  RunReport report;
  report.group_names = report_groups_;
  RunSummary& s = report.summary;
  uint64_t decode_steps = 0;
  double wasted_fraction_sum = 0.0;
  uint64_t allocated_steps = 0;
  double batch_sum = 0.0;

  while (!done()) {
    if (now_ >= config_.max_steps) {
      throw RunGuardError("run exceeded max_steps=" +
                          std::to_string(config_.max_steps));
    }
    StepMetrics m = step();
    s.total_output_tokens += m.decode_batch;
    s.total_hit_tokens += m.cache_hit_tokens;
    s.total_preemptions += m.preemptions;
    if (m.decode_batch > 0) {
      batch_sum += m.decode_batch;
      decode_steps++;
    }
    if (m.allocated_total() > 0) {
      wasted_fraction_sum += m.wasted_fraction();
      allocated_steps++;
    }
    s.peak_allocated_bytes =
        std::max(s.peak_allocated_bytes, m.allocated_total());
    s.peak_kv_needed_bytes = std::max(s.peak_kv_needed_bytes, m.used_total());
    s.peak_vision_bytes = std::max(s.peak_vision_bytes, step_vision_bytes_);
    s.peak_draft_bytes = std::max(s.peak_draft_bytes, step_draft_bytes_);
    s.peak_target_bytes = std::max(s.peak_target_bytes, step_target_bytes_);
    report.steps.push_back(std::move(m));
  }
  s.steps = report.steps.size();
  s.completed_requests = completed_;
  s.total_prompt_tokens = summary_prompt_tokens_;
  s.hit_rate = s.total_prompt_tokens == 0
                   ? 0.0
                   : static_cast<double>(s.total_hit_tokens) /
                         static_cast<double>(s.total_prompt_tokens);
  s.mean_decode_batch = decode_steps == 0 ? 0.0 : batch_sum / decode_steps;
  s.mean_wasted_fraction =
      allocated_steps == 0 ? 0.0 : wasted_fraction_sum / allocated_steps;
  return report;
}

RunReport run_simulation(const ModelSpec& spec, const EngineConfig& config,
                         const Trace& trace) {
  SimEngine engine(spec, config, trace);
  return engine.run();
}

void write_metrics_csv(const RunReport& report, std::ostream& os) {
  os << "step";
  for (const auto& g : report.group_names) os << ",used_" << g;
  os << ",evictable,wasted,unallocated,batch,prefill,preemptions,hits\n";
  for (const auto& m : report.steps) {
    os << m.step;
    for (uint64_t u : m.used_bytes) os << "," << u;
    os << "," << m.evictable_bytes << "," << m.wasted_bytes << ","
       << m.unallocated_bytes << "," << m.decode_batch << ","
       << m.prefill_tokens << "," << m.preemptions << ","
       << m.cache_hit_tokens << "\n";
  }
}

void write_summary_json(const RunReport& report, std::ostream& os) {
  nlohmann::json j;
  const RunSummary& s = report.summary;
  j["steps"] = s.steps;
  j["completed_requests"] = s.completed_requests;
  j["total_prompt_tokens"] = s.total_prompt_tokens;
  j["total_output_tokens"] = s.total_output_tokens;
  j["total_hit_tokens"] = s.total_hit_tokens;
  j["total_preemptions"] = s.total_preemptions;
  j["hit_rate"] = s.hit_rate;
  j["mean_decode_batch"] = s.mean_decode_batch;
  j["mean_wasted_fraction"] = s.mean_wasted_fraction;
  j["peak_allocated_bytes"] = s.peak_allocated_bytes;
  j["peak_kv_needed_bytes"] = s.peak_kv_needed_bytes;
  j["peak_vision_bytes"] = s.peak_vision_bytes;
  j["peak_draft_bytes"] = s.peak_draft_bytes;
  j["peak_target_bytes"] = s.peak_target_bytes;
  os << j.dump() << "\n";
}

}  // namespace jenga
