// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>
#include <vector>

#include "jenga/memory_layout.hpp"

using namespace jenga;

namespace {

ModelSpec fig6_spec() {
  // Image pages of 256 B (2 layers x 128) and text pages of 384 B
  // (3 layers x 128); compatible page 768 B.
  ModelSpec spec;
  spec.name = "fig6";
  LayerGroupSpec cross;
  cross.name = "cross";
  cross.kind = LayerKind::kCrossAttention;
  cross.num_layers = 2;
  cross.bytes_per_token_per_layer = 128;
  LayerGroupSpec self;
  self.name = "self";
  self.kind = LayerKind::kFullAttention;
  self.num_layers = 3;
  self.bytes_per_token_per_layer = 128;
  spec.groups = {cross, self};
  return spec;
}

ModelSpec random_spec(std::mt19937_64& rng) {
  // Byte sizes drawn from hardware-shaped values so the compatible page
  // stays within a few thousand slots.
  static const uint64_t kBytes[] = {8, 16, 24, 32, 48, 64, 96, 128};
  ModelSpec spec;
  spec.name = "rand";
  const int n = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    LayerGroupSpec g;
    g.name = "g" + std::to_string(i);
    g.kind = LayerKind::kFullAttention;
    g.num_layers = 1 + static_cast<uint32_t>(rng() % 8);
    g.bytes_per_token_per_layer = kBytes[rng() % 8];
    g.tokens_per_page = 1 + static_cast<uint32_t>(rng() % 3);
    spec.groups.push_back(g);
  }
  return spec;
}

// Pairwise disjointness of intervals: sort by start, check neighbors.
void check_disjoint(std::vector<ByteRange>& ranges) {
  std::sort(ranges.begin(), ranges.end(),
            [](const ByteRange& a, const ByteRange& b) {
              return a.begin < b.begin;
            });
  for (size_t i = 0; i + 1 < ranges.size(); ++i) {
    CHECK(ranges[i].end <= ranges[i + 1].begin);
  }
}

}  // namespace

TEST_CASE("reference geometry addresses") {
  const AddressMap map(fig6_spec());
  CHECK(map.large_page_bytes() == 768);
  CHECK(map.slots_per_large(0) == 3);  // image: 768/256
  CHECK(map.slots_per_large(1) == 2);  // text: 768/384

  // Image page (large 0, slot 1), layer cross.1 -> [384, 512).
  CHECK(map.address_of(0, 1, SmallPageId{LargePageId{0}, 1}) ==
        ByteRange{384, 512});
  // Origin case.
  CHECK(map.address_of(0, 0, SmallPageId{LargePageId{0}, 0}) ==
        ByteRange{0, 128});
  // Text page (large 1, slot 0), layer self.2 -> [1024, 1152).
  CHECK(map.address_of(1, 2, SmallPageId{LargePageId{1}, 0}) ==
        ByteRange{1024, 1152});

  // Out-of-range layer index violates the contract.
  CHECK_THROWS_AS(map.address_of(0, 2, SmallPageId{LargePageId{0}, 0}),
                  InvariantError);
}

TEST_CASE("layer views") {
  const AddressMap map(fig6_spec());
  const LayerView cross1 = map.layer_view(0, 1);
  CHECK(cross1.start_offset == 128);
  CHECK(cross1.page_stride == 256);
  CHECK(cross1.exec_page_size == 128);

  // Single-layer group: view starts at 0 and strides by the small page.
  ModelSpec single;
  single.name = "one";
  LayerGroupSpec g;
  g.name = "g";
  g.kind = LayerKind::kFullAttention;
  g.num_layers = 1;
  g.bytes_per_token_per_layer = 512;
  single.groups = {g};
  const AddressMap smap(single);
  const LayerView v = smap.layer_view(0, 0);
  CHECK(v.start_offset == 0);
  CHECK(v.page_stride == 512);
}

TEST_CASE("view addresses equal direct addresses everywhere") {
  const AddressMap map(fig6_spec());
  for (uint32_t lp = 0; lp < 4; ++lp) {
    for (size_t g = 0; g < map.num_groups(); ++g) {
      for (uint32_t slot = 0; slot < map.slots_per_large(g); ++slot) {
        const SmallPageId page{LargePageId{lp}, slot};
        for (uint32_t layer = 0; layer < map.group(g).num_layers; ++layer) {
          CHECK(map.view_address(g, layer, page) ==
                map.address_of(g, layer, page));
        }
      }
    }
  }
}

TEST_CASE("disjointness and coverage within owned large pages") {
  const AddressMap map(fig6_spec());
  // Simulate ownership: image group owns large pages 0 and 2, text owns 1.
  struct Owned {
    size_t group;
    uint32_t large;
  };
  const std::vector<Owned> owned = {{0, 0}, {1, 1}, {0, 2}};

  std::vector<ByteRange> ranges;
  for (const auto& o : owned) {
    uint64_t covered = 0;
    for (uint32_t slot = 0; slot < map.slots_per_large(o.group); ++slot) {
      for (uint32_t layer = 0; layer < map.group(o.group).num_layers; ++layer) {
        const ByteRange r =
            map.address_of(o.group, layer, SmallPageId{LargePageId{o.large}, slot});
        covered += r.size();
        // Ranges stay inside their large page.
        CHECK(r.begin >= o.large * map.large_page_bytes());
        CHECK(r.end <= (o.large + 1) * map.large_page_bytes());
        ranges.push_back(r);
      }
    }
    // Full coverage: the group's slices tile the whole large page.
    CHECK(covered == map.large_page_bytes());
  }
  check_disjoint(ranges);
}

TEST_CASE("equivalence and disjointness on random geometries") {
  std::mt19937_64 rng(4242);
  int tested = 0;
  for (int iter = 0; iter < 200 && tested < 100; ++iter) {
    const ModelSpec spec = random_spec(rng);
    const AddressMap map(spec);
    uint64_t total_ranges = 0;
    for (size_t g = 0; g < map.num_groups(); ++g) {
      total_ranges += uint64_t{map.slots_per_large(g)} * map.group(g).num_layers;
    }
    if (total_ranges > 20000) continue;  // keep the sweep fast
    ++tested;
    std::vector<ByteRange> ranges;
    for (size_t g = 0; g < map.num_groups(); ++g) {
      // Each group owns one distinct large page, like a live pool would.
      const uint32_t lp = static_cast<uint32_t>(g);
      for (uint32_t slot = 0; slot < map.slots_per_large(g); ++slot) {
        const SmallPageId page{LargePageId{lp}, slot};
        for (uint32_t layer = 0; layer < map.group(g).num_layers; ++layer) {
          CHECK(map.view_address(g, layer, page) ==
                map.address_of(g, layer, page));
          ranges.push_back(map.address_of(g, layer, page));
        }
      }
    }
    check_disjoint(ranges);
  }
}

TEST_CASE("layout dump is stable text") {
  const AddressMap map(fig6_spec());
  std::ostringstream os;
  map.dump(os, 1);
  const std::string text = os.str();
  CHECK(text.find("large page 768 B") != std::string::npos);
  CHECK(text.find("cross.1 page 1 -> [384, 512)") != std::string::npos);
  CHECK(text.find("self.2 page 0 -> [256, 384)") != std::string::npos);
}
