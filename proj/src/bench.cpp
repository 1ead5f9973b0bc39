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

#include "stflow/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "stflow/attention_graph.hpp"
#include "stflow/exact_flow.hpp"
#include "stflow/minmax_flow.hpp"
#include "stflow/rollout.hpp"
#include "stflow/synthetic.hpp"

namespace stflow {

void BenchSpec::validate() const {
  if (self_layers < 0 || video_tokens < 1 || text_tokens < 1 || heads < 1)
    throw std::invalid_argument("bench sizes must be positive");
  if (repeats < kMinBenchRepeats)
    throw std::invalid_argument("at least " + std::to_string(kMinBenchRepeats) + " repeats required");
  if (frames < 0 || (frames > 0 && video_tokens % frames != 0))
    throw std::invalid_argument("frames must divide the video token count");
  if (exact && video_tokens > kExactVideoTokenLimit)
    throw std::invalid_argument("exact flow limited to " + std::to_string(kExactVideoTokenLimit) +
                                " video tokens; got " + std::to_string(video_tokens));
}

TokenLayout BenchSpec::layout() const {
  const int f = frames > 0 ? frames : (video_tokens % 16 == 0 ? 16 : 1);
  const int hw = video_tokens / f;
  int h = static_cast<int>(std::sqrt(static_cast<double>(hw)));
  while (hw % h != 0) --h;
  return {f, h, hw / h};
}

namespace {

double median_seconds(int repeats, const std::function<void()>& body) {
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    body();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

std::vector<BenchRecord> run_bench(const BenchSpec& spec) {
  spec.validate();
  const AttentionStack stack =
      random_stack({spec.layout(), spec.text_tokens, cross_then_self(spec.self_layers), spec.heads, 1.0}, spec.seed);
  std::vector<int> tokens(static_cast<std::size_t>(spec.text_tokens));
  std::iota(tokens.begin(), tokens.end(), 0);

  std::vector<BenchRecord> records;
  volatile double sink = 0.0;
  auto record = [&](const std::string& method, const std::function<AttributionResult()>& run) {
    const double secs = median_seconds(spec.repeats, [&] { sink = sink + run().scores.begin()->second; });
    records.push_back({method, spec.self_layers, spec.video_tokens, spec.text_tokens, secs,
                       secs / spec.text_tokens, spec.repeats});
  };
  record("cross", [&] { return cross_attention_attr(stack, tokens); });
  record("rollout", [&] { return rollout(stack, tokens); });
  record("soft", [&] { return path_flow(build_capacity_graph(stack), tokens, {FlowMode::soft, spec.tau, GroupAgg::max}); });
  record("hard", [&] { return path_flow(build_capacity_graph(stack), tokens, {FlowMode::hard, spec.tau, GroupAgg::max}); });
  if (spec.exact) {
    record("exact", [&] {
      AttributionResult r;
      r.method = "exact";
      r.scores = exact_st_flow(build_capacity_graph(stack), tokens).scores;
      return r;
    });
  }
  return records;
}

}  // namespace stflow
