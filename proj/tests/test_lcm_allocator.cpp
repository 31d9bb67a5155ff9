// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "jenga/lcm_allocator.hpp"

using namespace jenga;

TEST_CASE("request order is deterministic lowest-index-first") {
  LargePagePool pool(3 * 768, 768);
  CHECK(pool.num_pages() == 3);
  auto a = pool.request_large_page("text");
  auto b = pool.request_large_page("text");
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->index == 0);
  CHECK(b->index == 1);
}

TEST_CASE("exhaustion returns no page") {
  LargePagePool pool(768, 768);
  auto a = pool.request_large_page("g");
  REQUIRE(a.has_value());
  CHECK(a->index == 0);
  CHECK_FALSE(pool.request_large_page("g").has_value());
}

TEST_CASE("free and reuse cycle") {
  LargePagePool pool(2 * 64, 64);
  auto a = pool.request_large_page("g");
  auto b = pool.request_large_page("g");
  REQUIRE(b.has_value());
  pool.return_large_page(*b);
  CHECK(pool.num_free() == 1);
  auto again = pool.request_large_page("g");
  REQUIRE(again.has_value());
  CHECK(again->index == b->index);
  (void)a;
}

TEST_CASE("double free detected") {
  LargePagePool pool(2 * 64, 64);
  auto a = pool.request_large_page("g");
  REQUIRE(a.has_value());
  pool.return_large_page(*a);
  CHECK_THROWS_AS(pool.return_large_page(*a), InvariantError);
}

TEST_CASE("interleaved owners: image, text, image") {
  LargePagePool pool(3 * 768, 768);
  auto img0 = pool.request_large_page("image");
  auto txt = pool.request_large_page("text");
  auto img1 = pool.request_large_page("image");
  REQUIRE(img0.has_value());
  REQUIRE(txt.has_value());
  REQUIRE(img1.has_value());
  CHECK(img0->index == 0);
  CHECK(txt->index == 1);
  CHECK(img1->index == 2);
  CHECK(pool.owner_of(*img0) == "image");
  CHECK(pool.owner_of(*txt) == "text");
  CHECK(pool.owner_of(*img1) == "image");
}

TEST_CASE("capacity remainder is reserved, never allocated") {
  LargePagePool pool(1000, 300);
  CHECK(pool.num_pages() == 3);
  CHECK(pool.reserved_remainder_bytes() == 100);
}

TEST_CASE("conservation under random request/return sequences") {
  std::mt19937_64 rng(11);
  LargePagePool pool(64 * 128, 128);
  std::vector<LargePageId> held;
  for (int op = 0; op < 5000; ++op) {
    if (held.empty() || (rng() % 2 == 0 && pool.num_free() > 0)) {
      auto id = pool.request_large_page("g" + std::to_string(rng() % 3));
      if (id.has_value()) held.push_back(*id);
    } else if (!held.empty()) {
      const size_t pick = rng() % held.size();
      pool.return_large_page(held[pick]);
      held.erase(held.begin() + pick);
    }
    pool.check_conservation();
    CHECK(pool.num_free() + held.size() == pool.num_pages());
  }
}
