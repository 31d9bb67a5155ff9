// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: simulate serving runs, sweep strategies, predict
// analytic waste, generate synthetic traces, and dump the memory layout.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "jenga/memory_layout.hpp"
#include "jenga/model_config.hpp"
#include "jenga/simulator.hpp"
#include "jenga/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitTraceError = 2;
constexpr int kExitRunGuard = 3;

struct CommonOpts {
  std::string model_config;
  std::string trace_path;
  std::string strategy = "jenga";
  uint64_t memory_bytes = 1ULL << 30;
  uint64_t chunk_size = 512;
  std::string prefix_caching = "off";
  std::string vision_mode = "on_demand";
  uint64_t seed = 0;
  double scale = 1.0;
  uint64_t max_steps = 200000;
  std::string metrics_out;
  std::string summary_out;
};

jenga::EngineConfig engine_config(const CommonOpts& o) {
  jenga::EngineConfig cfg;
  cfg.strategy = jenga::alloc_strategy_from_name(o.strategy);
  cfg.memory_budget = o.memory_bytes;
  cfg.chunked_prefill_size = o.chunk_size;
  if (o.prefix_caching == "on") {
    cfg.prefix_caching = true;
  } else if (o.prefix_caching == "off") {
    cfg.prefix_caching = false;
  } else {
    throw jenga::ConfigError("--prefix-caching expects on|off");
  }
  cfg.vision_mode = jenga::vision_mode_from_name(o.vision_mode);
  cfg.seed = o.seed;
  cfg.max_steps = o.max_steps;
  return cfg;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw jenga::ConfigError("cannot write '" + path + "'");
  out << text;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_trace) {
  cmd->add_option("--model-config", o.model_config, "model config file")
      ->required();
  auto* trace = cmd->add_option("--trace", o.trace_path, "trace file (jsonl)");
  if (needs_trace) trace->required();
  cmd->add_option("--strategy", o.strategy,
                  "jenga|uniform|static|max_page|gcd_page");
  cmd->add_option("--memory-bytes", o.memory_bytes, "KV memory budget");
  cmd->add_option("--chunk-size", o.chunk_size, "chunked prefill budget");
  cmd->add_option("--prefix-caching", o.prefix_caching, "on|off");
  cmd->add_option("--vision-mode", o.vision_mode, "on_demand|full_reuse");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--scale", o.scale, "token scale factor");
  cmd->add_option("--max-steps", o.max_steps, "non-termination guard");
  cmd->add_option("--metrics-out", o.metrics_out, "per-step CSV path");
  cmd->add_option("--summary-out", o.summary_out, "summary JSON path");
}

int run_simulate(const CommonOpts& o) {
  const jenga::ModelSpec spec = jenga::load_model_spec(o.model_config);
  const jenga::Trace trace = jenga::load_trace(o.trace_path);
  const jenga::RunReport report =
      jenga::run_simulation(spec, engine_config(o), trace);
  std::ostringstream metrics;
  jenga::write_metrics_csv(report, metrics);
  std::ostringstream summary;
  jenga::write_summary_json(report, summary);
  if (o.metrics_out.empty() && o.summary_out.empty()) {
    std::cout << summary.str();
  } else {
    if (!o.metrics_out.empty()) write_or_print(o.metrics_out, metrics.str());
    if (!o.summary_out.empty()) write_or_print(o.summary_out, summary.str());
  }
  return kExitOk;
}

int run_sweep(const CommonOpts& o, const std::vector<std::string>& strategies) {
  const jenga::ModelSpec spec = jenga::load_model_spec(o.model_config);
  const jenga::Trace trace = jenga::load_trace(o.trace_path);
  std::ostringstream table;
  table << "strategy,steps,mean_batch,waste_fraction,hit_rate,preemptions\n";
  for (const std::string& name : strategies) {
    CommonOpts cell = o;
    cell.strategy = name;
    try {
      const jenga::RunReport r =
          jenga::run_simulation(spec, engine_config(cell), trace);
      table << name << "," << r.summary.steps << "," << std::fixed
            << std::setprecision(4) << r.summary.mean_decode_batch << ","
            << r.summary.mean_wasted_fraction << "," << r.summary.hit_rate
            << "," << r.summary.total_preemptions << "\n";
    } catch (const std::exception& e) {
      table << name << ",error: " << e.what() << ",,,,\n";
    }
  }
  write_or_print(o.summary_out, table.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level KV-cache memory management simulator"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* simulate = app.add_subcommand("simulate", "run one serving simulation");
  add_common(simulate, opts, /*needs_trace=*/true);

  auto* sweep = app.add_subcommand("sweep", "compare strategies on one trace");
  std::vector<std::string> sweep_strategies = {"jenga", "uniform"};
  add_common(sweep, opts, /*needs_trace=*/true);
  sweep->add_option("--strategies", sweep_strategies,
                    "strategies to compare");

  auto* predict = app.add_subcommand(
      "predict-waste", "analytic waste of the uniform-page layout");
  std::string predict_config;
  double text_tokens = 0, image_tokens = 0;
  uint64_t embedding_bytes = 0;
  predict->add_option("--model-config", predict_config)->required();
  predict->add_option("--text-tokens", text_tokens)->required();
  predict->add_option("--image-tokens", image_tokens);
  predict->add_option("--embedding-bytes", embedding_bytes,
                      "override per-layer bytes for all groups");

  auto* gen = app.add_subcommand("gen-trace", "generate a synthetic trace");
  std::string kind = "long-doc-qa";
  std::string out_path;
  uint64_t gen_seed = 0;
  double gen_scale = 1.0;
  uint32_t requests = 20, articles = 4, questions = 3;
  uint64_t article_tokens = 4000, question_tokens = 50, round_spacing = 200;
  gen->add_option("--kind", kind,
                  "long-doc-qa|multi-article-prefix|dynamic-length|"
                  "vision-mmmu-like");
  gen->add_option("--out", out_path, "output path")->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--scale", gen_scale);
  gen->add_option("--requests", requests);
  gen->add_option("--articles", articles);
  gen->add_option("--questions", questions);
  gen->add_option("--article-tokens", article_tokens);
  gen->add_option("--question-tokens", question_tokens);
  gen->add_option("--round-spacing", round_spacing);

  auto* layout = app.add_subcommand("layout-dump",
                                    "page-layer address map as text");
  std::string layout_config;
  uint32_t layout_pages = 2;
  std::string layout_out;
  layout->add_option("--model-config", layout_config)->required();
  layout->add_option("--large-pages", layout_pages);
  layout->add_option("--out", layout_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(opts);
    if (sweep->parsed()) return run_sweep(opts, sweep_strategies);
    if (predict->parsed()) {
      const jenga::ModelSpec spec = jenga::load_model_spec(predict_config);
      jenga::WorkloadProfile profile;
      profile.text_tokens = text_tokens;
      profile.image_tokens = image_tokens;
      profile.per_layer_embedding_bytes = embedding_bytes;
      std::cout << std::fixed << std::setprecision(6)
                << jenga::predict_uniform_waste(spec, profile) << "\n";
      return kExitOk;
    }
    if (gen->parsed()) {
      jenga::Trace trace;
      if (kind == "long-doc-qa") {
        jenga::LongDocQaParams p;
        p.num_requests = requests;
        p.scale = gen_scale;
        trace = jenga::gen_long_doc_qa(p, gen_seed);
      } else if (kind == "multi-article-prefix") {
        jenga::MultiArticleParams p;
        p.num_articles = articles;
        p.questions_per_article = questions;
        p.article_tokens = article_tokens;
        p.question_tokens = question_tokens;
        p.round_spacing_steps = round_spacing;
        p.scale = gen_scale;
        trace = jenga::gen_multi_article_prefix(p, gen_seed);
      } else if (kind == "dynamic-length") {
        jenga::DynamicLengthParams p;
        p.num_requests = requests;
        p.scale = gen_scale;
        trace = jenga::gen_dynamic_length(p, gen_seed);
      } else if (kind == "vision-mmmu-like") {
        jenga::VisionMmmuParams p;
        p.num_requests = requests;
        p.scale = gen_scale;
        trace = jenga::gen_vision_mmmu_like(p, gen_seed);
      } else {
        throw jenga::ConfigError("unknown trace kind '" + kind + "'");
      }
      jenga::save_trace(trace, out_path);
      return kExitOk;
    }
    if (layout->parsed()) {
      const jenga::ModelSpec spec = jenga::load_model_spec(layout_config);
      const jenga::AddressMap map(spec);
      std::ostringstream os;
      map.dump(os, layout_pages);
      write_or_print(layout_out, os.str());
      return kExitOk;
    }
  } catch (const jenga::RunGuardError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunGuard;
  } catch (const jenga::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool trace_error =
        std::string(e.what()).find("trace") != std::string::npos;
    return trace_error ? kExitTraceError : kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitOk;
}
