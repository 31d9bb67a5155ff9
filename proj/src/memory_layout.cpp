// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/memory_layout.hpp"

#include <iomanip>
#include <ostream>

namespace jenga {

AddressMap::AddressMap(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  large_page_bytes_ = compatible_page_size(spec_, PageSizeStrategy::kLcm);
  for (const auto& g : spec_.groups) {
    const uint64_t small = small_page_size(g);
    small_bytes_.push_back(small);
    per_layer_bytes_.push_back(checked_mul(g.bytes_per_token_per_layer,
                                           g.tokens_per_page, "per_layer_bytes"));
    slots_per_large_.push_back(static_cast<uint32_t>(large_page_bytes_ / small));
  }
}

uint64_t AddressMap::global_page_index(size_t g, SmallPageId page) const {
  JENGA_CHECK(g < num_groups(), "group index out of range");
  JENGA_CHECK(page.slot < slots_per_large_[g], "slot out of range");
  return static_cast<uint64_t>(page.large.index) * slots_per_large_[g] +
         page.slot;
}

ByteRange AddressMap::address_of(size_t g, uint32_t layer_index,
                                 SmallPageId page) const {
  JENGA_CHECK(g < num_groups(), "group index out of range");
  JENGA_CHECK(layer_index < spec_.groups[g].num_layers,
              "layer index out of range");
  JENGA_CHECK(page.slot < slots_per_large_[g], "slot out of range");
  const uint64_t start = page.large.index * large_page_bytes_ +
                         page.slot * small_bytes_[g] +
                         layer_index * per_layer_bytes_[g];
  return ByteRange{start, start + per_layer_bytes_[g]};
}

LayerView AddressMap::layer_view(size_t g, uint32_t layer_index) const {
  JENGA_CHECK(g < num_groups(), "group index out of range");
  JENGA_CHECK(layer_index < spec_.groups[g].num_layers,
              "layer index out of range");
  return LayerView{layer_index * per_layer_bytes_[g], small_bytes_[g],
                   per_layer_bytes_[g]};
}

ByteRange AddressMap::view_address(size_t g, uint32_t layer_index,
                                   SmallPageId page) const {
  const LayerView view = layer_view(g, layer_index);
  const uint64_t start =
      view.start_offset + global_page_index(g, page) * view.page_stride;
  return ByteRange{start, start + view.exec_page_size};
}

void AddressMap::dump(std::ostream& os, uint32_t large_pages) const {
  os << "model " << spec_.name << ": large page " << large_page_bytes_
     << " B\n";
  for (size_t g = 0; g < num_groups(); ++g) {
    const auto& grp = spec_.groups[g];
    os << "group " << grp.name << ": small page " << small_bytes_[g]
       << " B, " << slots_per_large_[g] << " per large page, "
       << grp.num_layers << " layers x " << per_layer_bytes_[g] << " B\n";
    for (uint32_t lp = 0; lp < large_pages; ++lp) {
      for (uint32_t slot = 0; slot < slots_per_large_[g]; ++slot) {
        const SmallPageId page{LargePageId{lp}, slot};
        for (uint32_t layer = 0; layer < grp.num_layers; ++layer) {
          const ByteRange r = address_of(g, layer, page);
          os << "  " << grp.name << "." << layer << " page "
             << global_page_index(g, page) << " -> [" << r.begin << ", "
             << r.end << ")\n";
        }
      }
    }
  }
}

}  // namespace jenga
