// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace jenga {

namespace {

using nlohmann::json;

TraceRequest parse_request(const json& j) {
  TraceRequest r;
  if (!j.contains("id")) throw ConfigError("trace record missing 'id'");
  r.id = j["id"].get<uint64_t>();
  r.arrival_step = j.value("arrival_step", uint64_t{0});
  if (!j.contains("segments") || !j["segments"].is_array() ||
      j["segments"].empty()) {
    throw ConfigError("trace record " + std::to_string(r.id) +
                      " needs a nonempty 'segments' list");
  }
  for (const auto& sj : j["segments"]) {
    Segment s;
    const std::string kind = sj.value("kind", std::string("text"));
    if (kind == "text") {
      s.is_image = false;
    } else if (kind == "image") {
      s.is_image = true;
    } else {
      throw ConfigError("unknown segment kind '" + kind + "'");
    }
    s.tokens = sj.value("tokens", uint64_t{0});
    r.segments.push_back(s);
  }
  r.output_tokens = j.value("output_tokens", uint64_t{1});
  if (r.output_tokens == 0) {
    throw ConfigError("trace record " + std::to_string(r.id) +
                      ": output_tokens must be >= 1");
  }
  if (r.prompt_tokens() == 0) {
    throw ConfigError("trace record " + std::to_string(r.id) +
                      " has an empty prompt");
  }
  if (j.contains("prefix_group") && !j["prefix_group"].is_null()) {
    r.prefix_group = j["prefix_group"].get<std::string>();
  }
  return r;
}

json request_to_json(const TraceRequest& r) {
  json j;
  j["id"] = r.id;
  j["arrival_step"] = r.arrival_step;
  json segs = json::array();
  for (const auto& s : r.segments) {
    segs.push_back({{"kind", s.is_image ? "image" : "text"},
                    {"tokens", s.tokens}});
  }
  j["segments"] = segs;
  j["output_tokens"] = r.output_tokens;
  if (r.prefix_group.has_value()) j["prefix_group"] = *r.prefix_group;
  return j;
}

uint64_t scaled(uint64_t tokens, double scale) {
  if (scale == 1.0) return tokens;
  const double v = std::llround(static_cast<double>(tokens) * scale);
  return std::max<uint64_t>(1, static_cast<uint64_t>(v));
}

uint64_t draw_uniform(std::mt19937_64& rng, uint64_t lo, uint64_t hi) {
  if (lo > hi) throw ConfigError("invalid generator range");
  std::uniform_int_distribution<uint64_t> d(lo, hi);
  return d(rng);
}

}  // namespace

Trace parse_trace_jsonl(const std::string& text) {
  Trace trace;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("trace line " + std::to_string(lineno) +
                        ": parse error: " + e.what());
    }
    trace.requests.push_back(parse_request(j));
  }
  return trace;
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace_jsonl(buf.str());
}

std::string trace_to_jsonl(const Trace& trace) {
  std::ostringstream out;
  for (const auto& r : trace.requests) out << request_to_json(r).dump() << "\n";
  return out.str();
}

void save_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace '" + path + "'");
  out << trace_to_jsonl(trace);
}

Trace gen_long_doc_qa(const LongDocQaParams& p, uint64_t seed) {
  if (p.input_min > p.input_max || p.output_min > p.output_max) {
    throw ConfigError("long-doc-qa: invalid ranges");
  }
  std::mt19937_64 rng(mix64(seed, 0x10d6));
  Trace t;
  for (uint32_t i = 0; i < p.num_requests; ++i) {
    TraceRequest r;
    r.id = i;
    r.arrival_step = 0;
    r.segments.push_back(Segment{
        false, scaled(draw_uniform(rng, p.input_min, p.input_max), p.scale)});
    r.output_tokens = draw_uniform(rng, p.output_min, p.output_max);
    t.requests.push_back(std::move(r));
  }
  return t;
}

Trace gen_multi_article_prefix(const MultiArticleParams& p, uint64_t seed) {
  if (p.num_articles == 0 || p.questions_per_article == 0) {
    throw ConfigError("multi-article-prefix: counts must be positive");
  }
  std::mt19937_64 rng(mix64(seed, 0xa271c1e));
  Trace t;
  uint64_t id = 0;
  const uint64_t article_len = scaled(p.article_tokens, p.scale);
  for (uint32_t round = 0; round < p.questions_per_article; ++round) {
    for (uint32_t a = 0; a < p.num_articles; ++a) {
      TraceRequest r;
      r.id = id++;
      r.arrival_step = round * p.round_spacing_steps;
      r.prefix_group = "article-" + std::to_string(a);
      r.segments.push_back(Segment{false, article_len});
      // Question lengths jitter a little so requests are not clones.
      r.segments.push_back(Segment{
          false, std::max<uint64_t>(
                     1, draw_uniform(rng, p.question_tokens,
                                     p.question_tokens + 16))});
      r.output_tokens = p.output_tokens;
      t.requests.push_back(std::move(r));
    }
  }
  return t;
}

Trace gen_dynamic_length(const DynamicLengthParams& p, uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, 0xd17a));
  Trace t;
  for (uint32_t i = 0; i < p.num_requests; ++i) {
    // Mean input length ramps linearly over the trace.
    const double frac =
        p.num_requests <= 1 ? 0.0
                            : static_cast<double>(i) / (p.num_requests - 1);
    const uint64_t mean = p.input_min_start +
                          static_cast<uint64_t>(
                              frac * static_cast<double>(p.input_min_end -
                                                         p.input_min_start));
    const uint64_t lo = std::max<uint64_t>(1, mean - mean / 4);
    const uint64_t hi = mean + mean / 4;
    TraceRequest r;
    r.id = i;
    r.arrival_step = i * p.arrival_spacing_steps;
    r.segments.push_back(Segment{false, scaled(draw_uniform(rng, lo, hi),
                                               p.scale)});
    r.output_tokens = draw_uniform(rng, p.output_min, p.output_max);
    t.requests.push_back(std::move(r));
  }
  return t;
}

Trace gen_vision_mmmu_like(const VisionMmmuParams& p, uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, 0x5151));
  Trace t;
  for (uint32_t i = 0; i < p.num_requests; ++i) {
    const uint64_t image_mean = scaled(p.mean_image_tokens, p.scale);
    const uint64_t image = draw_uniform(rng, std::max<uint64_t>(1, image_mean / 2),
                                        image_mean + image_mean / 2);
    const uint64_t text =
        draw_uniform(rng, std::max<uint64_t>(1, p.mean_text_tokens / 2),
                     p.mean_text_tokens + p.mean_text_tokens / 2);
    TraceRequest r;
    r.id = i;
    r.arrival_step = i * p.arrival_spacing_steps;
    // Question text leads, then the image, then a short text tail.
    const uint64_t lead = std::max<uint64_t>(1, text / 2);
    r.segments.push_back(Segment{false, lead});
    r.segments.push_back(Segment{true, image});
    if (text > lead) r.segments.push_back(Segment{false, text - lead});
    r.output_tokens = draw_uniform(rng, p.output_min, p.output_max);
    t.requests.push_back(std::move(r));
  }
  return t;
}

}  // namespace jenga
