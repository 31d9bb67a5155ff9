// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/model_config.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace jenga {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kFullAttention:
      return "full";
    case LayerKind::kSlidingWindow:
      return "sliding_window";
    case LayerKind::kMamba:
      return "mamba";
    case LayerKind::kCrossAttention:
      return "cross_attention";
    case LayerKind::kVisionEmbedding:
      return "vision_embedding";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "full") return LayerKind::kFullAttention;
  if (name == "sliding_window") return LayerKind::kSlidingWindow;
  if (name == "mamba") return LayerKind::kMamba;
  if (name == "cross_attention") return LayerKind::kCrossAttention;
  if (name == "vision_embedding") return LayerKind::kVisionEmbedding;
  throw ConfigError("unknown layer kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (groups.empty()) {
    throw ConfigError("model '" + name + "' has no layer groups");
  }
  std::set<std::string> seen;
  for (const auto& g : groups) {
    if (g.name.empty()) throw ConfigError("layer group with empty name");
    if (!seen.insert(g.name).second) {
      throw ConfigError("duplicate layer group name '" + g.name + "'");
    }
    if (g.num_layers == 0) {
      throw ConfigError("group '" + g.name + "': num_layers must be > 0");
    }
    if (g.bytes_per_token_per_layer == 0) {
      throw ConfigError("group '" + g.name +
                        "': bytes_per_token_per_layer must be > 0");
    }
    if (g.tokens_per_page == 0) {
      throw ConfigError("group '" + g.name + "': tokens_per_page must be >= 1");
    }
    if (g.kind == LayerKind::kSlidingWindow && g.window_tokens == 0) {
      throw ConfigError("group '" + g.name + "': window_tokens must be >= 1");
    }
    if (g.kind == LayerKind::kMamba && g.checkpoint_interval_tokens == 0) {
      throw ConfigError("group '" + g.name +
                        "': checkpoint_interval_tokens must be >= 1");
    }
    small_page_size(g);  // throws on overflow
  }
}

bool ModelSpec::has_cross_attention() const {
  return std::any_of(groups.begin(), groups.end(), [](const LayerGroupSpec& g) {
    return g.kind == LayerKind::kCrossAttention;
  });
}

const LayerGroupSpec* ModelSpec::find_group(const std::string& group_name) const {
  for (const auto& g : groups) {
    if (g.name == group_name) return &g;
  }
  return nullptr;
}

uint64_t small_page_size(const LayerGroupSpec& group) {
  uint64_t per_token = checked_mul(group.bytes_per_token_per_layer,
                                   group.num_layers, "small_page_size");
  return checked_mul(per_token, group.tokens_per_page, "small_page_size");
}

namespace {

uint64_t checked_lcm(uint64_t a, uint64_t b) {
  uint64_t g = std::gcd(a, b);
  return checked_mul(a / g, b, "compatible_page_size (lcm)");
}

}  // namespace

uint64_t compatible_page_size(const ModelSpec& spec, PageSizeStrategy strategy) {
  spec.validate();
  switch (strategy) {
    case PageSizeStrategy::kLcm: {
      uint64_t l = 1;
      for (const auto& g : spec.groups) l = checked_lcm(l, small_page_size(g));
      return l;
    }
    case PageSizeStrategy::kGcd: {
      uint64_t d = 0;
      for (const auto& g : spec.groups) d = std::gcd(d, small_page_size(g));
      return d;
    }
    case PageSizeStrategy::kMax: {
      uint64_t m = 0;
      for (const auto& g : spec.groups) m = std::max(m, small_page_size(g));
      return m;
    }
    case PageSizeStrategy::kUniform: {
      uint64_t sum = 0;
      for (const auto& g : spec.groups) {
        sum = checked_add(sum, small_page_size(g), "compatible_page_size (uniform)");
      }
      return sum;
    }
  }
  throw ConfigError("unknown page size strategy");
}

double lcm_blowup_ratio(const ModelSpec& spec, std::ostream* diag) {
  uint64_t lcm = compatible_page_size(spec, PageSizeStrategy::kLcm);
  uint64_t min_small = UINT64_MAX;
  for (const auto& g : spec.groups) {
    min_small = std::min(min_small, small_page_size(g));
  }
  double ratio = static_cast<double>(lcm) / static_cast<double>(min_small);
  if (ratio > 128.0 && diag != nullptr) {
    *diag << "note: model '" << spec.name << "' has a compatible page "
          << ratio << "x larger than its smallest page size (" << lcm << " vs "
          << min_small << " bytes)\n";
  }
  return ratio;
}

double predict_uniform_waste(const ModelSpec& spec,
                             const WorkloadProfile& profile) {
  spec.validate();
  if (profile.text_tokens < 0 || profile.image_tokens < 0) {
    throw ConfigError("workload token counts must be nonnegative");
  }
  const double text = profile.text_tokens;
  const double image = profile.image_tokens;
  const double total = text + image;
  if (total <= 0) throw ConfigError("empty workload");

  const double decoder_tokens =
      spec.decoder_stores_images() ? total : text;

  double uniform_per_token = 0.0;
  double ideal = 0.0;
  for (const auto& g : spec.groups) {
    const double per_layer =
        profile.per_layer_embedding_bytes > 0
            ? static_cast<double>(profile.per_layer_embedding_bytes)
            : static_cast<double>(g.bytes_per_token_per_layer);
    const double layer_bytes = per_layer * static_cast<double>(g.num_layers);
    uniform_per_token += layer_bytes;

    double stored = 0.0;
    switch (g.kind) {
      case LayerKind::kFullAttention:
        stored = decoder_tokens;
        break;
      case LayerKind::kSlidingWindow:
        stored = std::min(decoder_tokens, static_cast<double>(g.window_tokens));
        break;
      case LayerKind::kMamba:
        // Fixed-size recurrent state: one token slot per request.
        stored = std::min(decoder_tokens, 1.0);
        break;
      case LayerKind::kCrossAttention:
      case LayerKind::kVisionEmbedding:
        stored = image;
        break;
    }
    ideal += layer_bytes * stored;
  }
  const double uniform_total = total * uniform_per_token;
  if (ideal <= 0.0) {
    throw ConfigError("workload stores no KV bytes for this model");
  }
  return 1.0 - ideal / uniform_total;
}

namespace {

ModelSpec parse_model_spec(const nlohmann::json& j) {
  ModelSpec spec;
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  spec.name = j.value("name", std::string("unnamed"));
  if (!j.contains("groups") || !j["groups"].is_array()) {
    throw ConfigError("model config missing 'groups' list");
  }
  for (const auto& gj : j["groups"]) {
    LayerGroupSpec g;
    if (!gj.contains("name")) throw ConfigError("group missing 'name'");
    g.name = gj["name"].get<std::string>();
    if (!gj.contains("kind")) {
      throw ConfigError("group '" + g.name + "' missing 'kind'");
    }
    g.kind = layer_kind_from_name(gj["kind"].get<std::string>());
    g.num_layers = gj.value("num_layers", 0u);
    g.bytes_per_token_per_layer =
        gj.value("bytes_per_token_per_layer", uint64_t{0});
    g.tokens_per_page = gj.value("tokens_per_page", 1u);
    g.window_tokens = gj.value("window_tokens", uint64_t{0});
    g.checkpoint_interval_tokens =
        gj.value("checkpoint_interval_tokens",
                 g.kind == LayerKind::kMamba ? uint64_t{512} : uint64_t{0});
    spec.groups.push_back(std::move(g));
  }
  spec.validate();
  return spec;
}

}  // namespace

ModelSpec parse_model_spec_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config parse error: ") + e.what());
  }
  return parse_model_spec(j);
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model_spec_json(buf.str());
}

}  // namespace jenga
