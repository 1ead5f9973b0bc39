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

#pragma once

// Min-max path flow: lower bounds on ST-Flow obtained from the best
// single-path flow, computed with (soft) min-max matrix products folded over
// each injection group.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stflow/attention_graph.hpp"
#include "stflow/matrix.hpp"

namespace stflow {

enum class FlowMode { hard, soft };
enum class GroupAgg { max, sum };

std::string_view to_string(FlowMode mode);
std::string_view to_string(GroupAgg agg);
FlowMode parse_flow_mode(std::string_view s);
GroupAgg parse_group_agg(std::string_view s);

struct FlowConfig {
  FlowMode mode = FlowMode::soft;
  double tau = 0.01;
  GroupAgg group_agg = GroupAgg::max;

  /// Throws std::invalid_argument if tau <= 0 in soft mode.
  void validate() const;
};

struct AttributionResult {
  std::string method;                          // "hard", "soft", "exact", "rollout", "cross"
  std::map<int, double> scores;                // token -> A_i
  std::map<int, std::vector<double>> heatmaps; // token -> per-output values (frame-major)
  FlowConfig config;
};

/// Sensitivities with the same shapes as the graph's matrices.
struct FlowGradient {
  std::vector<Matrix> video_chain;
  std::vector<Matrix> injections;
};

/// tau * log(sum exp(e / tau)), max-shifted.
double soft_max(std::span<const double> values, double tau);
/// -soft_max(-values).
double soft_min(std::span<const double> values, double tau);
/// Two-argument softmin, min(a, b) - tau * log1p(exp(-|a - b| / tau)).
double soft_min2(double a, double b, double tau);

/// C(i, j) = max_r min(A(i, r), B(r, j)).
Matrix minmax_mul(const Matrix& a, const Matrix& b);
/// Batched form: [B, m, k] x [B, k, n] -> [B, m, n].
MatrixBatch minmax_mul(const MatrixBatch& a, const MatrixBatch& b);

/// C(i, j) = softmax_r(softmin(A(i, r), B(r, j))).
Matrix soft_minmax_mul(const Matrix& a, const Matrix& b, double tau);
/// Element-by-element log-sum-exp evaluation of the same product; slow but
/// stable for any tau and any magnitudes.
Matrix soft_minmax_mul_reference(const Matrix& a, const Matrix& b, double tau);

/// One fold step X <- X (.) T over non-negative capacities, exploiting the
/// transfer's block structure when present. Results equal the dense product.
Matrix fold_hard(const Matrix& x, const TransferMatrix& t);
Matrix fold_soft(const Matrix& x, const TransferMatrix& t, double tau);

AttributionResult path_flow(const CapacityGraph& graph, std::span<const int> tokens, const FlowConfig& cfg);

/// Adjoint of sum_i upstream[i] * A_i (soft mode only) with respect to
/// every transfer and injection entry.
FlowGradient path_flow_gradient(const CapacityGraph& graph, std::span<const int> tokens, const FlowConfig& cfg,
                                std::span<const double> upstream);

/// Per-output values of one token reshaped by the token layout.
struct Heatmap {
  int frames = 1;
  int height = 1;
  int width = 1;
  std::vector<double> values;  // [frames, height, width]

  double at(int f, int y, int x) const {
    return values[(static_cast<std::size_t>(f) * height + y) * width + x];
  }
};

Heatmap heatmap(const AttributionResult& result, int token, const TokenLayout& layout);
/// Per-frame bicubic resampling (cubic convolution a = -0.75, half-pixel
/// centres, clamped borders).
Heatmap resize_bicubic(const Heatmap& map, int height, int width);
/// 1 where value > mean(values), else 0.
std::vector<std::uint8_t> threshold_segment(std::span<const double> values);

}  // namespace stflow
