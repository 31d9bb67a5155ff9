// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "jenga/prefix_cache.hpp"

using namespace jenga;

namespace {

LayerPolicy make_policy(LayerKind kind, uint64_t window = 0,
                        uint64_t interval = 512) {
  LayerGroupSpec g;
  g.name = "g";
  g.kind = kind;
  g.num_layers = 1;
  g.bytes_per_token_per_layer = 1;
  g.window_tokens = window;
  g.checkpoint_interval_tokens = interval;
  return LayerPolicy(g);
}

}  // namespace

TEST_CASE("range set basics") {
  PrefixRangeSet s;
  CHECK(s.empty());
  CHECK(s.max_value() == 0);
  s.append(1);
  s.append(2);
  s.append(3);
  s.append(7);
  CHECK(s.ranges().size() == 2);  // 1..3 collapses into one run
  CHECK(s.contains(2));
  CHECK_FALSE(s.contains(4));
  CHECK(s.count() == 4);
  CHECK(s.max_value() == 7);
  CHECK(s.to_string() == "{1..3, 7}");
  CHECK_THROWS_AS(s.append(5), InvariantError);  // not increasing
}

TEST_CASE("range set intersection") {
  PrefixRangeSet a, b;
  a.append_range(1, 9);
  b.append(4);
  b.append_range(9, 10);
  const auto i = PrefixRangeSet::intersect(a, b);
  CHECK(i.to_values() == std::vector<uint64_t>{4, 9});

  PrefixRangeSet empty;
  CHECK(PrefixRangeSet::intersect(a, empty).empty());
}

TEST_CASE("chained block keys depend on the whole prefix") {
  const uint64_t salt = block_chain_salt("self");
  const uint64_t k1 = chain_block_key(salt, {10, 11});
  const uint64_t k2 = chain_block_key(k1, {12, 13});
  const uint64_t k2_other_parent = chain_block_key(salt, {12, 13});
  CHECK(k2 != k2_other_parent);
  CHECK(block_chain_salt("self") != block_chain_salt("window"));
}

TEST_CASE("reference hit sets for a ten-token request") {
  // Hits on A..I for self-attention, on C D H I J for window 2.
  std::vector<bool> self_hits(10, true);
  self_hits[9] = false;
  std::vector<bool> win_hits = {false, false, true, true, false,
                                false, false, true, true, true};
  const auto self_set =
      get_possible_prefix(self_hits, make_policy(LayerKind::kFullAttention));
  const auto win_set =
      get_possible_prefix(win_hits, make_policy(LayerKind::kSlidingWindow, 2));
  CHECK(self_set.max_value() == 9);
  CHECK(self_set.count() == 9);
  CHECK(win_set.to_values() == std::vector<uint64_t>{4, 9, 10});

  // Longest common prefix across the two layers.
  CHECK(find_longest_common_prefix({self_set, win_set}) == 9);
  // The window set alone is not downward closed.
  CHECK_FALSE(win_set.contains(3));
  CHECK(win_set.contains(4));

  PrefixRangeSet empty;
  CHECK(find_longest_common_prefix({self_set, empty}) == 0);
  CHECK(find_longest_common_prefix({self_set}) == 9);
}

TEST_CASE("stored-axis sets map onto global prefix lengths") {
  // A group storing positions 3,4 (an image) with both blocks hit does not
  // constrain any prefix; with no hits it only allows prefixes before it.
  PrefixRangeSet both;
  both.append_range(1, 2);
  CHECK(stored_to_global_prefixes(both, {3, 4}, 6).to_values() ==
        std::vector<uint64_t>{1, 2, 3, 4, 5, 6});
  PrefixRangeSet none;
  CHECK(stored_to_global_prefixes(none, {3, 4}, 6).to_values() ==
        std::vector<uint64_t>{1, 2});
  // No stored positions at all: unconstrained.
  CHECK(stored_to_global_prefixes(none, {}, 4).count() == 4);
  // Partial: first block hit only.
  PrefixRangeSet first;
  first.append(1);
  CHECK(stored_to_global_prefixes(first, {3, 4}, 6).to_values() ==
        std::vector<uint64_t>{1, 2, 3});
}

TEST_CASE("registry: register, find, unregister, collisions") {
  PrefixCache cache(2);
  BlockContent c1;
  c1.parent_key = 1;
  c1.tokens = {5, 6};
  c1.key = 77;  // forced key so a colliding entry can share it
  BlockContent c2 = c1;
  c2.tokens = {5, 7};  // same key, different span: a hash collision

  const SmallPageId p1{LargePageId{0}, 0};
  const SmallPageId p2{LargePageId{1}, 0};
  cache.register_block(0, c1, p1);
  cache.register_block(0, c2, p2);
  CHECK(cache.entries(0) == 2);
  auto f1 = cache.find(0, c1);
  auto f2 = cache.find(0, c2);
  REQUIRE(f1.has_value());
  REQUIRE(f2.has_value());
  CHECK(*f1 == p1);  // span comparison resolves the collision
  CHECK(*f2 == p2);
  CHECK_FALSE(cache.find(1, c1).has_value());  // group namespaces

  cache.unregister(0, c1.key, p1);
  CHECK_FALSE(cache.find(0, c1).has_value());
  CHECK(cache.find(0, c2).has_value());
  cache.unregister(0, c1.key, p1);  // idempotent
  CHECK(cache.entries(0) == 1);
}

TEST_CASE("brute-force equivalence on random hit vectors") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 3000; ++iter) {
    const uint64_t n = rng() % 17;
    const uint64_t w = 1 + rng() % 5;
    std::vector<bool> hits(n);
    for (uint64_t i = 0; i < n; ++i) hits[i] = (rng() % 2) == 0;
    const LayerPolicy pol = make_policy(LayerKind::kSlidingWindow, w);
    const auto set = get_possible_prefix(hits, pol);
    for (uint64_t p = 1; p <= n; ++p) {
      // A prefix is valid iff its last min(w, p) tokens are all hit.
      bool ok = true;
      for (uint64_t x = p >= w ? p - w + 1 : 1; x <= p; ++x) {
        if (!hits[x - 1]) ok = false;
      }
      CHECK(set.contains(p) == ok);
    }
  }
}
