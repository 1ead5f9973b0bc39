/*
 * Copyright (c) 2026, The stflow Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// stflow command line: attribution, equalization demo, heatmap export,
// benchmarks and graph inspection.
//
// Exit codes: 0 ok, 2 bad flags, 3 unreadable or invalid input, 4 internal.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stflow/attention_graph.hpp"
#include "stflow/bench.hpp"
#include "stflow/equalizer.hpp"
#include "stflow/exact_flow.hpp"
#include "stflow/kernels.hpp"
#include "stflow/minmax_flow.hpp"
#include "stflow/rollout.hpp"
#include "stflow/tensor_io.hpp"
#include "stflow/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitInternal = 4;
constexpr int kResultVersion = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

AttentionStack load_stack(const fs::path& path, std::string* digest = nullptr) {
  const auto bytes = read_bytes(path);
  if (digest) *digest = "sha256:" + sha256_hex(bytes);
  try {
    return decode_stack(bytes);
  } catch (const FormatError& e) {
    throw InputError(path.string() + ": " + std::string(to_string(e.kind())) + ": " + e.what());
  }
}

void ensure_valid(const AttentionStack& stack) {
  const auto report = validate_stack(stack);
  if (report.ok) return;
  std::ostringstream os;
  os << "invalid stack:";
  for (const auto& v : report.violations) os << "\n  [" << v.rule << "] layer " << v.layer << ": " << v.message;
  throw InputError(os.str());
}

std::vector<int> resolve_tokens(const std::vector<int>& requested, int text_count) {
  std::vector<int> tokens = requested;
  if (tokens.empty()) {
    tokens.resize(static_cast<std::size_t>(text_count));
    std::iota(tokens.begin(), tokens.end(), 0);
  }
  for (int t : tokens)
    if (t < 0 || t >= text_count)
      throw UsageError("token " + std::to_string(t) + " out of range (stack has " + std::to_string(text_count) +
                       " text tokens)");
  return tokens;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

json layout_json(const TokenLayout& l) { return {{"frames", l.frames}, {"height", l.height}, {"width", l.width}}; }

json scores_json(const std::map<int, double>& scores) {
  json out = json::object();
  for (const auto& [t, v] : scores) out[std::to_string(t)] = v;
  return out;
}

json result_json(const AttributionResult& r, const std::vector<int>& tokens, const TokenLayout& layout,
                 bool with_heatmaps) {
  json out = {{"version", kResultVersion},
              {"mode", r.method},
              {"tau", r.config.tau},
              {"group_agg", std::string(to_string(r.config.group_agg))},
              {"tokens", tokens},
              {"layout", layout_json(layout)},
              {"scores", scores_json(r.scores)}};
  if (with_heatmaps && !r.heatmaps.empty()) {
    json maps = json::object();
    for (const auto& [t, v] : r.heatmaps) maps[std::to_string(t)] = v;
    out["heatmaps"] = std::move(maps);
  }
  return out;
}

// ---- attribute ----------------------------------------------------------

struct AttributeOpts {
  std::string input, out, mode = "soft", group_agg = "max";
  double tau = 0.01;
  std::vector<int> tokens;
  bool no_heatmaps = false;
};

int run_attribute(const AttributeOpts& o) {
  std::string digest;
  const AttentionStack stack = load_stack(o.input, &digest);
  ensure_valid(stack);
  const auto tokens = resolve_tokens(o.tokens, stack.text_count());
  const FlowConfig cfg{o.mode == "hard" ? FlowMode::hard : FlowMode::soft, o.tau, parse_group_agg(o.group_agg)};
  if (o.mode == "soft" && !(o.tau > 0.0)) throw UsageError("--tau must be positive in soft mode");

  AttributionResult r;
  if (o.mode == "exact") {
    r.method = "exact";
    r.config = cfg;
    r.scores = exact_st_flow(build_capacity_graph(stack), tokens).scores;
  } else if (o.mode == "rollout") {
    r = rollout(stack, tokens);
    r.config = cfg;
  } else if (o.mode == "cross") {
    r = cross_attention_attr(stack, tokens);
    r.config = cfg;
  } else {
    r = path_flow(build_capacity_graph(stack), tokens, cfg);
  }
  json out = result_json(r, tokens, stack.layout, !o.no_heatmaps);
  out["input_digest"] = digest;
  write_text(o.out, out.dump(2) + "\n");
  return kExitOk;
}

// ---- heatmap ------------------------------------------------------------

struct HeatmapOpts {
  std::string input, out, size, segment;
  int token = 0;
};

std::pair<int, int> parse_size(const std::string& s) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream is(s);
  if (!(is >> h >> x >> w) || (x != 'x' && x != 'X') || h < 1 || w < 1 || is.peek() != EOF)
    throw UsageError("--size expects HxW, got '" + s + "'");
  return {h, w};
}

std::string pgm(int width, int height, const std::vector<std::uint8_t>& pixels) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

int run_heatmap(const HeatmapOpts& o) {
  json doc;
  try {
    const auto bytes = read_bytes(o.input);
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InputError(o.input + ": not a result file (" + e.what() + ")");
  }
  const std::string key = std::to_string(o.token);
  if (!doc.contains("heatmaps") || !doc["heatmaps"].contains(key))
    throw InputError(o.input + ": no heatmap for token " + key);

  Heatmap map;
  try {
    const auto& l = doc.at("layout");
    map.frames = l.at("frames").get<int>();
    map.height = l.at("height").get<int>();
    map.width = l.at("width").get<int>();
    map.values = doc["heatmaps"][key].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw InputError(o.input + ": malformed result file (" + e.what() + ")");
  }
  if (map.frames < 1 || map.height < 1 || map.width < 1 ||
      map.values.size() != static_cast<std::size_t>(map.frames) * map.height * map.width)
    throw InputError(o.input + ": heatmap size does not match layout");
  for (double v : map.values)
    if (!std::isfinite(v)) throw InputError(o.input + ": heatmap holds non-finite values");

  if (!o.size.empty()) {
    const auto [h, w] = parse_size(o.size);
    map = resize_bicubic(map, h, w);
  }

  // frames are stacked vertically; scaling and thresholds are per frame
  const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
  std::vector<std::uint8_t> pixels(map.values.size());
  for (std::size_t f = 0; f < static_cast<std::size_t>(map.frames); ++f) {
    const std::span<const double> frame(map.values.data() + f * plane, plane);
    std::uint8_t* dst = pixels.data() + f * plane;
    if (o.segment == "mean") {
      const auto mask = threshold_segment(frame);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = mask[i] ? 255 : 0;
      continue;
    }
    const auto [lo, hi] = std::minmax_element(frame.begin(), frame.end());
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < plane; ++i)
      dst[i] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (frame[i] - *lo) / range)) : 0;
  }
  write_text(o.out, pgm(map.width, map.height * map.frames, pixels));
  return kExitOk;
}

// ---- equalize -----------------------------------------------------------

struct EqualizeOpts {
  std::uint64_t seed = 0;
  int frames = 2, height = 4, width = 4, dim = 8, text_tokens = 4, heads = 1;
  std::vector<int> tokens;
  int steps = 100, inner_steps = 1;
  std::string loss = "min", optimizer = "adam", group_agg = "max", out_dir = ".";
  double lr = 1e-5, threshold = 0.2, tau = 0.01;
};

json report_json(const AttributionReport& r) {
  return {{"exact", scores_json(r.exact.scores)},
          {"hard", scores_json(r.hard.scores)},
          {"soft", scores_json(r.soft.scores)},
          {"rollout", scores_json(r.rollout.scores)},
          {"cross", scores_json(r.cross.scores)}};
}

int run_equalize(const EqualizeOpts& o) {
  ToyConfig tc;
  tc.frames = o.frames;
  tc.height = o.height;
  tc.width = o.width;
  tc.dim = o.dim;
  tc.text_tokens = o.text_tokens;
  tc.heads = o.heads;
  tc.seed = o.seed;
  EqualizeConfig ec;
  ec.step_size = o.lr;
  ec.optimizer = parse_optimizer(o.optimizer);
  ec.loss = parse_loss_kind(o.loss);
  ec.tau = o.tau;
  ec.group_agg = parse_group_agg(o.group_agg);
  ec.inner_steps = o.inner_steps;
  ec.max_iterations = o.steps;
  ec.threshold = o.threshold;
  ec.tokens = resolve_tokens(o.tokens, o.text_tokens);
  try {
    tc.validate();
    ec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const ToyModel model = init_toy_model(tc);
  const ToyLatent latent = init_toy_latent(tc, o.seed);
  const auto before = attribution_report(model, latent, ec);
  const auto traj = equalize(model, latent, ec);
  const auto after = attribution_report(model, traj.final_latent, ec);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  std::ostringstream jsonl;
  write_trajectory_jsonl(traj, ec.tokens, jsonl);
  write_text((dir / "trajectory.jsonl").string(), jsonl.str());
  write_stack_file(forward_attention(model, traj.final_latent), dir / "final.atns");
  const json report = {{"version", kResultVersion},
                       {"seed", o.seed},
                       {"loss", o.loss},
                       {"tokens", ec.tokens},
                       {"iterations", traj.records.size()},
                       {"final_loss", traj.final_loss},
                       {"before", report_json(before)},
                       {"after", report_json(after)}};
  write_text((dir / "report.json").string(), report.dump(2) + "\n");

  std::cout << "iterations " << traj.records.size() << ", final loss " << traj.final_loss << "\n";
  for (std::size_t i = 0; i < ec.tokens.size(); ++i) {
    const int t = ec.tokens[i];
    std::cout << "token " << t << ": soft " << before.soft.scores.at(t) << " -> " << after.soft.scores.at(t) << "\n";
  }
  return kExitOk;
}

// ---- bench --------------------------------------------------------------

struct BenchOpts {
  BenchSpec spec;
  bool json = false;
  std::string out;
};

int run_bench_cmd(const BenchOpts& o) {
  try {
    o.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto records = run_bench(o.spec);
  const auto layout = o.spec.layout();
  if (o.json) {
    json arr = json::array();
    for (const auto& r : records)
      arr.push_back({{"method", r.method},
                     {"layers", r.layers},
                     {"video_tokens", r.video_tokens},
                     {"text_tokens", r.text_tokens},
                     {"seconds", r.seconds},
                     {"seconds_per_token", r.seconds_per_token},
                     {"repeats", r.repeats}});
    const json doc = {{"version", kResultVersion},
                      {"isa", std::string(kernels::isa_name(kernels::active().isa))},
                      {"layout", layout_json(layout)},
                      {"records", arr}};
    write_text(o.out, doc.dump(2) + "\n");
    return kExitOk;
  }
  std::ostringstream os;
  os << "layers " << (records.empty() ? 0 : records.front().layers) << ", video tokens " << o.spec.video_tokens
     << " (" << layout.frames << "x" << layout.height << "x" << layout.width << "), text tokens "
     << o.spec.text_tokens << ", repeats " << o.spec.repeats << ", isa "
     << kernels::isa_name(kernels::active().isa) << "\n";
  os << std::left << std::setw(10) << "method" << std::right << std::setw(14) << "median s" << std::setw(16)
     << "s per token" << "\n";
  for (const auto& r : records)
    os << std::left << std::setw(10) << r.method << std::right << std::scientific << std::setprecision(3)
       << std::setw(14) << r.seconds << std::setw(16) << r.seconds_per_token << std::defaultfloat << "\n";
  write_text(o.out, os.str());
  return kExitOk;
}

// ---- graph-info ---------------------------------------------------------

struct GraphInfoOpts {
  std::string input;
  bool json = false;
};

int run_graph_info(const GraphInfoOpts& o) {
  const AttentionStack stack = load_stack(o.input);
  const auto report = validate_stack(stack);
  if (!report.ok) {
    if (o.json) {
      json v = json::array();
      for (const auto& x : report.violations) v.push_back({{"layer", x.layer}, {"rule", x.rule}, {"message", x.message}});
      std::cout << json{{"valid", false}, {"violations", v}}.dump(2) << "\n";
    } else {
      std::cout << "invalid stack\n";
      for (const auto& x : report.violations)
        std::cout << "  [" << x.rule << "] layer " << x.layer << ": " << x.message << "\n";
    }
    return kExitInput;
  }
  const CapacityGraph graph = build_capacity_graph(stack);
  const auto chains = group_chains(graph);

  json layers = json::array();
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& layer = stack.layers[l];
    const auto& t = graph.video_chain[l];
    json item = {{"name", layer.name},
                 {"kind", std::string(to_string(layer.kind))},
                 {"heads", layer.heads},
                 {"query_tokens", layer.query_tokens},
                 {"key_tokens", layer.key_tokens},
                 {"nonzero_edges", nonzero_count(t.entries)},
                 {"blocks", t.blocks ? t.blocks->count : 1}};
    layers.push_back(std::move(item));
  }
  json groups = json::array();
  for (std::size_t g = 0; g < chains.size(); ++g)
    groups.push_back({{"layer", chains[g].layer},
                      {"suffix_length", chains[g].suffix.size()},
                      {"injection_nonzero", nonzero_count(*chains[g].injection)}});

  if (o.json) {
    const json doc = {{"valid", true},
                      {"layout", layout_json(stack.layout)},
                      {"video_tokens", stack.video_count()},
                      {"text_tokens", stack.text_tokens},
                      {"layers", layers},
                      {"groups", groups}};
    std::cout << doc.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << "layout " << stack.layout.frames << "x" << stack.layout.height << "x" << stack.layout.width << ", "
            << stack.video_count() << " video tokens, " << stack.text_count() << " text tokens\n";
  for (const auto& l : layers)
    std::cout << "  " << l["name"].get<std::string>() << " " << l["kind"].get<std::string>() << " heads "
              << l["heads"].get<int>() << ", " << l["nonzero_edges"].get<std::size_t>() << " nonzero edges, "
              << l["blocks"].get<int>() << " blocks\n";
  std::cout << chains.size() << (chains.size() == 1 ? " group" : " groups");
  for (std::size_t g = 0; g < chains.size(); ++g)
    std::cout << (g == 0 ? ", " : "; ") << "suffix length " << chains[g].suffix.size();
  std::cout << "\n";
  return kExitOk;
}

// ---- toy-stack ----------------------------------------------------------

struct ToyStackOpts {
  std::uint64_t seed = 0;
  int frames = 2, height = 4, width = 4, dim = 8, text_tokens = 4, heads = 1;
  std::string out;
};

int run_toy_stack(const ToyStackOpts& o) {
  ToyConfig tc;
  tc.frames = o.frames;
  tc.height = o.height;
  tc.width = o.width;
  tc.dim = o.dim;
  tc.text_tokens = o.text_tokens;
  tc.heads = o.heads;
  tc.seed = o.seed;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ToyModel model = init_toy_model(tc);
  write_stack_file(forward_attention(model, init_toy_latent(tc, o.seed)), o.out);
  return kExitOk;
}

template <typename T>
void add_toy_flags(CLI::App* cmd, T& o) {
  cmd->add_option("--seed", o.seed, "model and latent seed");
  cmd->add_option("--frames", o.frames, "frames F")->check(CLI::PositiveNumber);
  cmd->add_option("--height", o.height, "frame height H")->check(CLI::PositiveNumber);
  cmd->add_option("--width", o.width, "frame width W")->check(CLI::PositiveNumber);
  cmd->add_option("--dim", o.dim, "latent width d")->check(CLI::PositiveNumber);
  cmd->add_option("--text-tokens", o.text_tokens, "text tokens K")->check(CLI::PositiveNumber);
  cmd->add_option("--heads", o.heads, "attention heads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stflow: spatial-temporal attention flow attribution"};
  app.require_subcommand(1);
  const std::vector<std::string> modes{"exact", "hard", "soft", "rollout", "cross"};
  const std::vector<std::string> aggs{"max", "sum"};

  AttributeOpts attr;
  auto* attribute = app.add_subcommand("attribute", "score text tokens on an attention stack");
  attribute->add_option("--input", attr.input, "ATNS stack")->required();
  attribute->add_option("--mode", attr.mode, "exact|hard|soft|rollout|cross")->check(CLI::IsMember(modes));
  attribute->add_option("--tau", attr.tau, "soft temperature");
  attribute->add_option("--group-agg", attr.group_agg, "max|sum")->check(CLI::IsMember(aggs));
  attribute->add_option("--tokens", attr.tokens, "comma separated token indices (default all)")->delimiter(',');
  attribute->add_option("--out", attr.out, "result file (default stdout)");
  attribute->add_flag("--no-heatmaps", attr.no_heatmaps, "omit per-output heatmaps");

  HeatmapOpts hm;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "export a token heatmap as PGM");
  heatmap_cmd->add_option("--input", hm.input, "result file from attribute")->required();
  heatmap_cmd->add_option("--token", hm.token, "token index")->required();
  heatmap_cmd->add_option("--out", hm.out, "PGM output")->required();
  heatmap_cmd->add_option("--size", hm.size, "bicubic resize per frame, HxW");
  heatmap_cmd->add_option("--segment", hm.segment, "write a 0/255 mask instead")->check(CLI::IsMember({"mean"}));

  EqualizeOpts eq;
  auto* equalize_cmd = app.add_subcommand("equalize", "equalize token attributions on a seeded toy model");
  add_toy_flags(equalize_cmd, eq);
  equalize_cmd->add_option("--tokens", eq.tokens, "token set V (default all)")->delimiter(',');
  equalize_cmd->add_option("--steps", eq.steps, "outer iterations")->check(CLI::NonNegativeNumber);
  equalize_cmd->add_option("--inner-steps", eq.inner_steps, "updates per iteration")->check(CLI::PositiveNumber);
  equalize_cmd->add_option("--loss", eq.loss, "min|softmin|variance")
      ->check(CLI::IsMember({"min", "softmin", "variance"}));
  equalize_cmd->add_option("--lr", eq.lr, "step size");
  equalize_cmd->add_option("--optimizer", eq.optimizer, "adam|plain")->check(CLI::IsMember({"adam", "plain"}));
  equalize_cmd->add_option("--threshold", eq.threshold, "stop once the loss reaches this value");
  equalize_cmd->add_option("--tau", eq.tau, "soft temperature");
  equalize_cmd->add_option("--group-agg", eq.group_agg, "max|sum")->check(CLI::IsMember(aggs));
  equalize_cmd->add_option("--out-dir", eq.out_dir, "directory for trajectory.jsonl, final.atns, report.json");

  BenchOpts bench;
  auto* bench_cmd = app.add_subcommand("bench", "time the attribution methods on a random stack");
  bench_cmd->add_option("--layers", bench.spec.self_layers, "self-attention layers after the cross layer");
  bench_cmd->add_option("--video-tokens", bench.spec.video_tokens, "video tokens n");
  bench_cmd->add_option("--text-tokens", bench.spec.text_tokens, "text tokens m");
  bench_cmd->add_option("--frames", bench.spec.frames, "frames (0: automatic)");
  bench_cmd->add_option("--heads", bench.spec.heads, "attention heads");
  bench_cmd->add_option("--repeat", bench.spec.repeats, "timed repeats (>= 3)");
  bench_cmd->add_option("--tau", bench.spec.tau, "soft temperature");
  bench_cmd->add_option("--seed", bench.spec.seed, "stack seed");
  bench_cmd->add_flag("--exact", bench.spec.exact, "include exact max flow");
  bench_cmd->add_flag("--json", bench.json, "JSON report");
  bench_cmd->add_option("--out", bench.out, "report file (default stdout)");

  GraphInfoOpts gi;
  auto* info_cmd = app.add_subcommand("graph-info", "summarize a stack's capacity graph");
  info_cmd->add_option("--input", gi.input, "ATNS stack")->required();
  info_cmd->add_flag("--json", gi.json, "JSON summary");

  ToyStackOpts ts;
  auto* toy_cmd = app.add_subcommand("toy-stack", "write the attention stack of a seeded toy model");
  add_toy_flags(toy_cmd, ts);
  toy_cmd->add_option("--out", ts.out, "ATNS output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*attribute) return run_attribute(attr);
    if (*heatmap_cmd) return run_heatmap(hm);
    if (*equalize_cmd) return run_equalize(eq);
    if (*bench_cmd) return run_bench_cmd(bench);
    if (*info_cmd) return run_graph_info(gi);
    if (*toy_cmd) return run_toy_stack(ts);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const GraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == FormatErrorKind::io ? kExitInternal : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
