// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "jenga/model_config.hpp"
#include "jenga/type_allocator.hpp"

namespace jenga {

struct ByteRange {
  uint64_t begin = 0;
  uint64_t end = 0;  // exclusive

  uint64_t size() const { return end - begin; }
  bool overlaps(const ByteRange& other) const {
    return begin < other.end && other.begin < end;
  }
  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

// Kernel view of one layer: pages of this group appear as a dense array of
// exec-size pages starting at start_offset with a fixed stride, indexed by
// global small-page id. Existing paged kernels consume exactly this triple.
struct LayerView {
  uint64_t start_offset = 0;
  uint64_t page_stride = 0;     // the group's small page size
  uint64_t exec_page_size = 0;  // bytes of one layer within a small page
};

// Physical address map of the page-layer layout: memory is partitioned
// into large pages, each large page into small pages, each small page into
// per-layer slices, so every small page is consecutive in memory.
class AddressMap {
 public:
  explicit AddressMap(const ModelSpec& spec);

  uint64_t large_page_bytes() const { return large_page_bytes_; }
  size_t num_groups() const { return spec_.groups.size(); }
  const LayerGroupSpec& group(size_t g) const { return spec_.groups[g]; }

  uint64_t small_page_bytes(size_t g) const { return small_bytes_[g]; }
  uint64_t per_layer_bytes(size_t g) const { return per_layer_bytes_[g]; }
  uint32_t slots_per_large(size_t g) const { return slots_per_large_[g]; }

  uint64_t global_page_index(size_t g, SmallPageId page) const;

  // Byte range of (group, layer, page) in the pooled tensor.
  ByteRange address_of(size_t g, uint32_t layer_index, SmallPageId page) const;

  LayerView layer_view(size_t g, uint32_t layer_index) const;

  // Address of a page through the layer view; equal to address_of.
  ByteRange view_address(size_t g, uint32_t layer_index, SmallPageId page) const;

  // Text table of (group, layer, page -> range) over the first
  // `large_pages` large pages, for docs and golden tests.
  void dump(std::ostream& os, uint32_t large_pages) const;

 private:
  ModelSpec spec_;
  uint64_t large_page_bytes_ = 0;
  std::vector<uint64_t> small_bytes_;
  std::vector<uint64_t> per_layer_bytes_;
  std::vector<uint32_t> slots_per_large_;
};

}  // namespace jenga
