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

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blocksparse/bench.h"
#include "blocksparse/errors.h"
#include "json.hpp"

namespace blocksparse {

using nlohmann::json;

ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  if (s == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

namespace {

constexpr const char* kCsvHeader =
    "label,block_r,block_c,mean_ms,std_ms,ratio_to_dense,no_bsr_ratio,flops_ratio,distinct_patterns";

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, end);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("bad number '" + std::string(s) + "' in CSV");
  return v;
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("bad integer '" + std::string(s) + "' in CSV");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = line.find(sep, start);
    out.push_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

json config_json(const BenchConfig& c) {
  std::vector<std::string> blocks;
  for (const auto& b : c.block_shapes) blocks.push_back(b.to_string());
  return {{"hidden", c.layer.h},
          {"heads", c.layer.a},
          {"ffn", c.layer.ffn},
          {"layers", c.layer.l},
          {"seq", c.layer.seq},
          {"batch", c.batch},
          {"sparsity", c.sparsity},
          {"blocks", blocks},
          {"warmup", c.warmup},
          {"repeats", c.repeats},
          {"threads", c.threads},
          {"seed", c.seed},
          {"budget", c.tuning_budget},
          {"baseline_only", c.baseline_only},
          {"attention_only", c.attention_only},
          {"shared_masks", c.shared_masks},
          {"test_mode", c.test_mode}};
}

BenchConfig config_from_json(const json& j) {
  BenchConfig c;
  c.layer = LayerConfig{j.at("hidden").get<std::size_t>(), j.at("heads").get<std::size_t>(),
                        j.at("ffn").get<std::size_t>(), j.at("layers").get<std::size_t>(),
                        j.at("seq").get<std::size_t>()};
  c.batch = j.at("batch").get<std::size_t>();
  c.sparsity = j.at("sparsity").get<double>();
  c.block_shapes.clear();
  for (const auto& b : j.at("blocks")) c.block_shapes.push_back(BlockShape::parse(b.get<std::string>()));
  c.warmup = j.at("warmup").get<std::size_t>();
  c.repeats = j.at("repeats").get<std::size_t>();
  c.threads = j.at("threads").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tuning_budget = j.at("budget").get<std::size_t>();
  c.baseline_only = j.at("baseline_only").get<bool>();
  c.attention_only = j.at("attention_only").get<bool>();
  c.shared_masks = j.at("shared_masks").get<bool>();
  c.test_mode = j.at("test_mode").get<bool>();
  return c;
}

}  // namespace

std::string report_csv(const BenchReport& r) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& row : r.rows) {
    out += row.label + ",";
    out += row.block ? std::to_string(row.block->r) + "," + std::to_string(row.block->c) : std::string(",");
    out += "," + num(row.mean_ms) + "," + num(row.std_ms) + "," + num(row.ratio_to_dense) + "," +
           num(row.no_bsr_ratio) + "," + num(row.flops_ratio) + "," + std::to_string(row.distinct_patterns) + "\n";
  }
  return out;
}

std::vector<BenchRow> rows_from_csv(std::string_view text) {
  std::vector<BenchRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError("CSV header does not match the report schema");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw IoError("CSV row has " + std::to_string(f.size()) + " fields, expected 9");
    BenchRow row;
    row.label = std::string(f[0]);
    if (!f[1].empty() || !f[2].empty()) row.block = BlockShape{parse_size(f[1]), parse_size(f[2])};
    row.mean_ms = parse_double(f[3]);
    row.std_ms = parse_double(f[4]);
    row.ratio_to_dense = parse_double(f[5]);
    row.no_bsr_ratio = parse_double(f[6]);
    row.flops_ratio = parse_double(f[7]);
    row.distinct_patterns = parse_size(f[8]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_markdown(const BenchReport& r) {
  const auto& c = r.config;
  std::ostringstream md;
  md << "# Block-sparse inference sweep\n\n";
  md << "- hardware: `" << r.hardware_tag << "`\n";
  md << "- timestamp: " << r.timestamp << "\n";
  md << "- model: h=" << c.layer.h << " heads=" << c.layer.a << " ffn=" << c.layer.ffn << " layers=" << c.layer.l
     << " seq=" << c.layer.seq << " batch=" << c.batch << "\n";
  md << "- sparsity " << num(c.sparsity) << ", warmup " << c.warmup << ", repeats " << c.repeats << ", threads "
     << c.threads << ", seed " << c.seed << ", budget " << c.tuning_budget
     << (c.attention_only ? ", attention-only" : "") << (c.shared_masks ? ", shared masks" : "")
     << (c.test_mode ? ", test mode (modeled times)" : "") << "\n\n";

  md << "| | Block size | No-BSR ms mean (std) | BSR ms mean (std) | BSR/Dense mean (std) | No-BSR/Dense | Flops ratio "
        "| Distinct patterns |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  auto group = [](const BenchRow& row) -> std::string {
    if (!row.block) return "Dense";
    return *row.block == BlockShape{1, 1} ? "Irregular" : "Structured";
  };
  std::string last;
  for (const auto& row : r.rows) {
    const std::string g = group(row);
    md << "| " << (g == last ? "" : g) << " | " << (row.block ? row.block->to_string() : "") << " | "
       << fixed(row.no_bsr_mean_ms, 3) << " (" << fixed(row.no_bsr_std_ms, 3) << ") | " << fixed(row.mean_ms, 3)
       << " (" << fixed(row.std_ms, 3) << ") | " << fixed(row.ratio_to_dense, 3) << " (" << fixed(row.ratio_std, 3)
       << ") | " << fixed(row.no_bsr_ratio, 3) << " | " << fixed(row.flops_ratio, 3) << " | "
       << row.distinct_patterns << " |\n";
    last = g;
  }
  for (const auto& s : r.skipped) {
    md << "| Structured | " << s.block.to_string() << " | skipped: " << s.reason << " | | | | | |\n";
  }
  return md.str();
}

std::string report_json(const BenchReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"label", row.label},
                    {"block", row.block ? json(row.block->to_string()) : json(nullptr)},
                    {"mean_ms", row.mean_ms},
                    {"std_ms", row.std_ms},
                    {"ratio_to_dense", row.ratio_to_dense},
                    {"ratio_std", row.ratio_std},
                    {"no_bsr_mean_ms", row.no_bsr_mean_ms},
                    {"no_bsr_std_ms", row.no_bsr_std_ms},
                    {"no_bsr_ratio", row.no_bsr_ratio},
                    {"flops_ratio", row.flops_ratio},
                    {"distinct_patterns", row.distinct_patterns},
                    {"reuse_ratio", row.reuse_ratio},
                    {"achieved_sparsity", row.achieved_sparsity},
                    {"tune_runs", row.tune_runs}});
  }
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"block", s.block.to_string()}, {"reason", s.reason}});
  const json j = {
      {"metadata", {{"hardware_tag", r.hardware_tag}, {"timestamp", r.timestamp}, {"config", config_json(r.config)}}},
      {"rows", rows},
      {"skipped", skipped}};
  return j.dump(2) + "\n";
}

BenchReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    BenchReport r;
    const json& meta = j.at("metadata");
    r.hardware_tag = meta.at("hardware_tag").get<std::string>();
    r.timestamp = meta.at("timestamp").get<std::string>();
    r.config = config_from_json(meta.at("config"));
    for (const json& jr : j.at("rows")) {
      BenchRow row;
      row.label = jr.at("label").get<std::string>();
      if (!jr.at("block").is_null()) row.block = BlockShape::parse(jr.at("block").get<std::string>());
      row.mean_ms = jr.at("mean_ms").get<double>();
      row.std_ms = jr.at("std_ms").get<double>();
      row.ratio_to_dense = jr.at("ratio_to_dense").get<double>();
      row.ratio_std = jr.at("ratio_std").get<double>();
      row.no_bsr_mean_ms = jr.at("no_bsr_mean_ms").get<double>();
      row.no_bsr_std_ms = jr.at("no_bsr_std_ms").get<double>();
      row.no_bsr_ratio = jr.at("no_bsr_ratio").get<double>();
      row.flops_ratio = jr.at("flops_ratio").get<double>();
      row.distinct_patterns = jr.at("distinct_patterns").get<std::size_t>();
      row.reuse_ratio = jr.at("reuse_ratio").get<double>();
      row.achieved_sparsity = jr.at("achieved_sparsity").get<double>();
      row.tune_runs = jr.at("tune_runs").get<std::size_t>();
      r.rows.push_back(std::move(row));
    }
    for (const json& js : j.at("skipped")) {
      r.skipped.push_back({BlockShape::parse(js.at("block").get<std::string>()), js.at("reason").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
}

std::string report_plot_data(const BenchReport& r) {
  std::string out = "index\tlabel\tratio_to_dense\tratio_std\tno_bsr_ratio\tflops_ratio\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    out += std::to_string(i) + "\t" + row.label + "\t" + num(row.ratio_to_dense) + "\t" + num(row.ratio_std) + "\t" +
           num(row.no_bsr_ratio) + "\t" + num(row.flops_ratio) + "\n";
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path) {
  std::string text;
  switch (format) {
    case ReportFormat::kCsv: text = report_csv(r); break;
    case ReportFormat::kMarkdown: text = report_markdown(r); break;
    case ReportFormat::kJson: text = report_json(r); break;
  }
  write_text(path, text);
  write_text(path.string() + ".plot.tsv", report_plot_data(r));
}

}  // namespace blocksparse
