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

#include "stflow/rollout.hpp"

#include <algorithm>

#include "stflow/attention_graph.hpp"
#include "stflow/kernels.hpp"

namespace stflow {

namespace {

void require_valid(const AttentionStack& stack) {
  const auto report = validate_stack(stack);
  if (!report.ok) throw GraphError("invalid stack: " + report.violations.front().message);
}

void check_tokens(const AttentionStack& stack, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= stack.text_count()) throw std::out_of_range("token index " + std::to_string(t) + " out of range");
}

void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    double sum = 0.0;
    for (double v : row) sum += v;
    if (sum > 0.0)
      for (double& v : row) v /= sum;
  }
}

// x <- x * m, restricted to m's diagonal blocks when it has them.
Matrix propagate(const Matrix& x, const TransferMatrix& t) {
  const auto& kt = kernels::active();
  const Matrix& m = t.entries;
  Matrix out(x.rows(), m.cols());
  if (!t.blocks || t.blocks->count == 1) {
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t r = 0; r < m.rows(); ++r) {
        const double a = x(i, r);
        if (a != 0.0) kt.axpy_row(a, m.row(r).data(), out.row(i).data(), m.cols());
      }
    return out;
  }
  const BlockPartition& p = *t.blocks;
  const auto b = static_cast<std::size_t>(p.size);
  std::vector<double> blk(b * b), acc(b);
  for (int g = 0; g < p.count; ++g) {
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t u = 0; u < b; ++u)
        blk[r * b + u] = m(static_cast<std::size_t>(p.index(g, static_cast<int>(r))),
                           static_cast<std::size_t>(p.index(g, static_cast<int>(u))));
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t r = 0; r < b; ++r) {
        const double a = x(i, static_cast<std::size_t>(p.index(g, static_cast<int>(r))));
        if (a != 0.0) kt.axpy_row(a, blk.data() + r * b, acc.data(), b);
      }
      for (std::size_t u = 0; u < b; ++u) out(i, static_cast<std::size_t>(p.index(g, static_cast<int>(u)))) = acc[u];
    }
  }
  return out;
}

}  // namespace

AttributionResult rollout(const AttentionStack& stack, std::span<const int> tokens) {
  require_valid(stack);
  check_tokens(stack, tokens);
  AttributionResult result;
  result.method = "rollout";
  const auto n = static_cast<std::size_t>(stack.video_count());
  Matrix influence(tokens.size(), n);
  bool started = false;
  for (const auto& layer : stack.layers) {
    Matrix avg = average_heads(layer);
    if (layer.kind == LayerKind::cross) {
      normalize_rows(avg);
      for (std::size_t i = 0; i < tokens.size(); ++i)
        for (std::size_t q = 0; q < n; ++q) influence(i, q) += avg(q, static_cast<std::size_t>(tokens[i]));
      started = true;
      continue;
    }
    if (!started) continue;
    for (std::size_t i = 0; i < avg.size(); ++i) avg.data()[i] *= 0.5;
    for (std::size_t q = 0; q < n; ++q) avg(q, q) += 0.5;
    normalize_rows(avg);
    TransferMatrix step{avg.transposed(), std::nullopt};
    const auto expected = layer.kind == LayerKind::self_spatial ? BlockPartition::spatial(stack.layout)
                                                                : BlockPartition::temporal(stack.layout);
    step.blocks = verify_blocks(step.entries, expected);
    influence = propagate(influence, step);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = influence.row(i);
    result.scores[tokens[i]] = *std::max_element(row.begin(), row.end());
    result.heatmaps[tokens[i]] = std::vector<double>(row.begin(), row.end());
  }
  return result;
}

AttributionResult cross_attention_attr(const AttentionStack& stack, std::span<const int> tokens) {
  require_valid(stack);
  check_tokens(stack, tokens);
  AttributionResult result;
  result.method = "cross";
  const auto n = static_cast<std::size_t>(stack.video_count());
  std::vector<std::vector<double>> maps(tokens.size(), std::vector<double>(n, 0.0));
  int cross_layers = 0;
  for (const auto& layer : stack.layers) {
    if (layer.kind != LayerKind::cross) continue;
    ++cross_layers;
    const double inv_heads = 1.0 / layer.heads;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (int h = 0; h < layer.heads; ++h)
        for (std::size_t q = 0; q < n; ++q) maps[i][q] += layer.at(h, static_cast<int>(q), tokens[i]) * inv_heads;
    }
  }
  if (cross_layers == 0) throw GraphError("no cross layer");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double total = 0.0;
    for (double& v : maps[i]) {
      v /= cross_layers;
      total += v;
    }
    result.scores[tokens[i]] = total / static_cast<double>(n);
    result.heatmaps[tokens[i]] = std::move(maps[i]);
  }
  return result;
}

}  // namespace stflow
