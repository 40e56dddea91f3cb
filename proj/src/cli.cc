/* Copyright 2026 The blocksparse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "blocksparse/cli.h"

#include <algorithm>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "blocksparse/bench.h"
#include "blocksparse/bundle.h"
#include "blocksparse/errors.h"
#include "blocksparse/hardware.h"
#include "blocksparse/model.h"
#include "blocksparse/pruning.h"
#include "blocksparse/scheduler.h"
#include "blocksparse/verify.h"

namespace blocksparse {

namespace {

// Layer config flags shared by bench, prune and tune. Zero means "from the
// preset". Changing --hidden alone keeps the preset's head width and sets
// ffn to 4 * hidden.
struct ModelFlags {
  std::string preset = "desk";
  std::size_t hidden = 0;
  std::size_t heads = 0;
  std::size_t ffn = 0;
  std::size_t layers = 0;
  std::size_t seq = 0;

  void add_to(CLI::App& app) {
    app.add_option("--preset", preset, "Base layer config: desk (128/4/512/2, seq 32) or bert-base")
        ->check(CLI::IsMember({"desk", "bert-base"}))
        ->capture_default_str();
    app.add_option("--hidden", hidden, "Hidden size h");
    app.add_option("--heads", heads, "Attention heads");
    app.add_option("--ffn", ffn, "FFN width");
    app.add_option("--layers", layers, "Encoder layers");
    app.add_option("--seq", seq, "Sequence length");
  }

  LayerConfig resolve() const {
    LayerConfig cfg = preset == "bert-base" ? LayerConfig::bert_base() : LayerConfig::desk();
    if (hidden != 0) {
      const std::size_t head_dim = cfg.head_dim();
      cfg.h = hidden;
      cfg.a = hidden % head_dim == 0 ? hidden / head_dim : 1;
      cfg.ffn = 4 * hidden;
    }
    if (heads != 0) cfg.a = heads;
    if (ffn != 0) cfg.ffn = ffn;
    if (layers != 0) cfg.l = layers;
    if (seq != 0) cfg.seq = seq;
    cfg.check();
    return cfg;
  }
};

std::vector<BlockShape> parse_blocks(const std::string& text) {
  std::vector<BlockShape> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }),
               item.end());
    if (!item.empty()) out.push_back(BlockShape::parse(item));
  }
  if (out.empty()) throw ConfigError("no block shapes given");
  return out;
}

std::string shapes_to_text(const std::vector<BlockShape>& shapes) {
  std::string s;
  for (std::size_t i = 0; i < shapes.size(); ++i) s += (i ? "," : "") + shapes[i].to_string();
  return s;
}

std::string run_tag(bool test_mode) { return test_mode ? std::string("test-mode") : hardware_tag(); }

// --- bench --------------------------------------------------------------------------

struct BenchFlags {
  ModelFlags model;
  BenchConfig cfg;
  std::string blocks = shapes_to_text(default_sweep_shapes());
  std::string out, format = "markdown", tuning_log;
};

void setup_bench(CLI::App& app, BenchFlags& f) {
  f.model.add_to(app);
  app.add_option("--batch", f.cfg.batch, "Sequences per forward")->capture_default_str();
  app.add_option("--sparsity", f.cfg.sparsity, "Block sparsity target")->capture_default_str();
  app.add_option("--blocks", f.blocks, "Comma-separated block shapes, e.g. 1x32,16x16")->capture_default_str();
  app.add_option("--repeats", f.cfg.repeats, "Timed forwards per variant (>= 3)")->capture_default_str();
  app.add_option("--warmup", f.cfg.warmup, "Untimed forwards per variant (>= 1)")->capture_default_str();
  app.add_option("--threads", f.cfg.threads, "Kernel threads")->capture_default_str();
  app.add_option("--seed", f.cfg.seed, "Weight and input seed")->capture_default_str();
  app.add_option("--budget", f.cfg.tuning_budget, "Schedules measured per tuning task")->capture_default_str();
  app.add_option("--out", f.out, "Report path (stdout if omitted); plot data goes to <out>.plot.tsv");
  app.add_option("--format", f.format, "csv, markdown or json")
      ->check(CLI::IsMember({"csv", "markdown", "md", "json"}))
      ->capture_default_str();
  app.add_option("--tuning-log", f.tuning_log, "JSON-lines tuning log to load and update");
  app.add_flag("--attention-only", f.cfg.attention_only, "Prune only wq, wk, wv, wo");
  app.add_flag("--shared-masks", f.cfg.shared_masks, "One mask per matrix shape across the stack");
  app.add_flag("--baseline-only", f.cfg.baseline_only, "Dense row only");
  app.add_flag("--test-mode", f.cfg.test_mode, "Deterministic cost model instead of wall clock");
}

int run_bench(BenchFlags& f, std::ostream& out, std::ostream& err) {
  f.cfg.layer = f.model.resolve();
  f.cfg.block_shapes = parse_blocks(f.blocks);
  f.cfg.check();
  TuneCache cache(bench_hardware_tag(f.cfg));
  if (!f.tuning_log.empty()) cache.load(f.tuning_log);
  const BenchReport report = run_sweep(f.cfg, cache);
  if (!f.tuning_log.empty()) cache.save(f.tuning_log);
  for (const auto& s : report.skipped) err << "skipped " << s.block.to_string() << ": " << s.reason << "\n";

  const ReportFormat format = parse_report_format(f.format);
  if (f.out.empty()) {
    switch (format) {
      case ReportFormat::kCsv: out << report_csv(report); break;
      case ReportFormat::kMarkdown: out << report_markdown(report); break;
      case ReportFormat::kJson: out << report_json(report); break;
    }
  } else {
    emit_report(report, format, f.out);
    out << "wrote " << f.out << " and " << f.out << ".plot.tsv\n";
  }
  return kExitOk;
}

// --- prune --------------------------------------------------------------------------

struct PruneFlags {
  ModelFlags model;
  std::string in, out, block = "1x32", method = "magnitude";
  double sparsity = 0.8;
  double lambda = 0.0;
  int p = 2;
  std::uint64_t seed = 0;
  bool attention_only = false;
  bool shared_masks = false;
};

void setup_prune(CLI::App& app, PruneFlags& f) {
  f.model.add_to(app);
  app.add_option("--in", f.in, "Bundle to prune; random weights from --seed if omitted");
  app.add_option("--out", f.out, "Output bundle directory")->required();
  app.add_option("--block", f.block, "Block shape")->capture_default_str();
  app.add_option("--sparsity", f.sparsity, "Block sparsity target")->capture_default_str();
  app.add_option("--p", f.p, "Group norm order, 1 or 2")->capture_default_str();
  app.add_option("--method", f.method, "magnitude or proximal")
      ->check(CLI::IsMember({"magnitude", "proximal"}))
      ->capture_default_str();
  app.add_option("--lambda", f.lambda, "Shrinkage threshold for the proximal method")->capture_default_str();
  app.add_option("--seed", f.seed, "Weight seed")->capture_default_str();
  app.add_flag("--attention-only", f.attention_only, "Prune only wq, wk, wv, wo");
  app.add_flag("--shared-masks", f.shared_masks, "One mask per matrix shape across the stack");
}

int run_prune(const PruneFlags& f, std::ostream& out) {
  PruneConfig cfg;
  cfg.block = BlockShape::parse(f.block);
  cfg.p = parse_norm_order(f.p);
  cfg.method = parse_prune_method(f.method);
  cfg.target_sparsity = f.sparsity;
  cfg.lambda = f.lambda;
  const EncoderWeights w = f.in.empty() ? init_weights(f.model.resolve(), f.seed) : load_bundle(f.in);
  SparsifyOptions opts;
  opts.attention_only = f.attention_only;
  opts.shared_masks = f.shared_masks;
  const EncoderWeights pruned = sparsify_weights(w, cfg, opts);
  save_bundle(f.out, pruned);
  for (const auto& e : pruned.prune_log) {
    out << "layer " << e.layer << " " << matrix_name(e.matrix) << " " << e.block.to_string() << " achieved "
        << e.achieved_sparsity << "\n";
  }
  out << "wrote " << f.out << "\n";
  return kExitOk;
}

// --- verify -------------------------------------------------------------------------

void setup_verify(CLI::App& app, VerifyOptions& o) {
  app.add_option("--seed", o.seed, "Instance seed")->capture_default_str();
  app.add_option("--instances", o.instances, "Random instances")->capture_default_str();
  app.add_option("--tolerance", o.tolerance, "Max absolute difference allowed")->capture_default_str();
  app.add_option("--threads", o.max_threads, "Largest thread count drawn for schedules")->capture_default_str();
}

int run_verify_cmd(const VerifyOptions& o, std::ostream& out) {
  const VerifyResult res = run_verify(o);
  double worst = 0.0;
  for (const auto& c : res.cases) {
    worst = std::max(worst, c.max_abs_diff);
    if (!c.pass) {
      out << "FAIL " << c.block.to_string() << " sparsity " << c.sparsity << " m=" << c.m << " n=" << c.n
          << " k=" << c.k << " " << c.sched.to_string() << " diff " << c.max_abs_diff << "\n";
    }
  }
  out << "verify: " << res.cases.size() << " instances, " << res.failures << " failures, worst diff " << worst
      << ", " << res.seconds << " s\n";
  return res.ok() ? kExitOk : kExitFailure;
}

// --- tune ---------------------------------------------------------------------------

struct TuneFlags {
  ModelFlags model;
  std::string bundle, blocks = "1x32", tuning_log;
  double sparsity = 0.8;
  std::size_t batch = 1, threads = 1, budget = 8;
  std::uint64_t seed = 0;
  bool attention_only = false, shared_masks = false, test_mode = false;
};

void setup_tune(CLI::App& app, TuneFlags& f) {
  f.model.add_to(app);
  app.add_option("--bundle", f.bundle, "Tune the projections of this bundle instead of a fresh sweep");
  app.add_option("--blocks", f.blocks, "Comma-separated block shapes")->capture_default_str();
  app.add_option("--sparsity", f.sparsity, "Block sparsity target")->capture_default_str();
  app.add_option("--batch", f.batch, "Sequences per forward")->capture_default_str();
  app.add_option("--threads", f.threads, "Largest thread count searched")->capture_default_str();
  app.add_option("--budget", f.budget, "Schedules measured per task")->capture_default_str();
  app.add_option("--seed", f.seed, "Weight and search seed")->capture_default_str();
  app.add_option("--tuning-log", f.tuning_log, "JSON-lines tuning log to update")->required();
  app.add_flag("--attention-only", f.attention_only, "Prune only wq, wk, wv, wo");
  app.add_flag("--shared-masks", f.shared_masks, "One mask per matrix shape across the stack");
  app.add_flag("--test-mode", f.test_mode, "Deterministic cost model instead of wall clock");
}

int run_tune(const TuneFlags& f, std::ostream& out) {
  if (f.batch < 1) throw ConfigError("batch must be >= 1");
  std::vector<EncoderWeights> variants;
  if (!f.bundle.empty()) {
    variants.push_back(load_bundle(f.bundle));
  } else {
    const EncoderWeights base = init_weights(f.model.resolve(), f.seed);
    SparsifyOptions opts;
    opts.attention_only = f.attention_only;
    opts.shared_masks = f.shared_masks;
    for (const auto& b : parse_blocks(f.blocks)) {
      PruneConfig cfg;
      cfg.block = b;
      cfg.target_sparsity = f.sparsity;
      variants.push_back(sparsify_weights(base, cfg, opts));
    }
  }

  TuneOptions topts;
  topts.seed = f.seed;
  topts.max_threads = f.threads;
  topts.test_mode = f.test_mode;
  const std::string tag = run_tag(f.test_mode);
  Tuner tuner(topts, tag);
  TuneCache cache(tag);
  const std::size_t loaded = cache.load(f.tuning_log);

  std::size_t hits = 0, misses = 0;
  for (const auto& w : variants) {
    const std::size_t m = f.batch * w.cfg.seq;
    std::map<TaskKey, const Weight*> owner;
    for (const auto& layer : w.layers) {
      for (MatrixId id : kAllMatrices) {
        const Weight& mat = layer.matrix(id);
        owner.try_emplace(is_bsr(mat) ? make_task_key(std::get<BsrMatrix>(mat), m)
                                      : make_task_key(std::get<DenseMatrix>(mat), m),
                          &mat);
      }
    }
    for (const TaskKey& key : order_tasks(projection_tasks(w, m))) {
      const Weight& mat = *owner.at(key);
      const WeightRef ref = is_bsr(mat) ? WeightRef(std::cref(std::get<BsrMatrix>(mat)))
                                        : WeightRef(std::cref(std::get<DenseMatrix>(mat)));
      ++(tuner.lookup_or_tune(cache, key, ref, f.budget).second ? hits : misses);
    }
  }
  cache.save(f.tuning_log);
  out << "tune: " << loaded << " records loaded, " << misses << " tuned, " << hits << " reused, " << cache.size()
      << " in " << f.tuning_log << "\n";
  return kExitOk;
}

// --- stats --------------------------------------------------------------------------

int run_stats(const std::string& bundle, std::ostream& out) {
  const EncoderWeights w = load_bundle(bundle);
  out << "layer\tmatrix\ttag\tblock\tblock_rows\tdistinct_patterns\treuse_ratio\tsparsity\n";
  std::size_t rows = 0, distinct = 0;
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    for (MatrixId id : kAllMatrices) {
      const Weight& m = w.layers[li].matrix(id);
      out << li << "\t" << matrix_name(id) << "\t";
      if (!is_bsr(m)) {
        out << "dense\t-\t-\t-\t-\t-\n";
        continue;
      }
      const auto& b = std::get<BsrMatrix>(m);
      const auto st = pattern_stats(b);
      rows += st.block_rows;
      distinct += st.distinct_patterns;
      out << "bsr\t" << b.block().to_string() << "\t" << st.block_rows << "\t" << st.distinct_patterns << "\t"
          << st.reuse_ratio << "\t" << 1.0 - double(b.n_blocks()) / double(b.total_blocks()) << "\n";
    }
  }
  out << "total: " << distinct << " distinct patterns over " << rows << " block rows\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-sparse inference benchmark and tools", args.empty() ? "bsrbench" : args.front()};
  app.require_subcommand(1);

  BenchFlags bench;
  setup_bench(*app.add_subcommand("bench", "Run the block-shape sweep and write a report"), bench);
  PruneFlags prune;
  setup_prune(*app.add_subcommand("prune", "Prune encoder weights and save a bundle"), prune);
  VerifyOptions verify;
  setup_verify(*app.add_subcommand("verify", "Check sparse kernels against a naive oracle"), verify);
  TuneFlags tune;
  setup_tune(*app.add_subcommand("tune", "Pre-populate a tuning log"), tune);
  std::string stats_bundle;
  auto* stats = app.add_subcommand("stats", "Block-row pattern statistics of a bundle");
  stats->add_option("--bundle", stats_bundle, "Bundle directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back("bsrbench");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("bench")) return run_bench(bench, out, err);
    if (app.got_subcommand("prune")) return run_prune(prune, out);
    if (app.got_subcommand("verify")) return run_verify_cmd(verify, out);
    if (app.got_subcommand("tune")) return run_tune(tune, out);
    if (app.got_subcommand("stats")) return run_stats(stats_bundle, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int cli_main(const std::vector<std::string>& args) { return cli_main(args, std::cout, std::cerr); }

}  // namespace blocksparse
