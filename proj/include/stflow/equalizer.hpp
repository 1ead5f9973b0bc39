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

// Test-time latent optimisation that equalises per-token flow attributions:
// soft path flow -> fairness loss -> gradient ascent on the latent.

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "stflow/minmax_flow.hpp"
#include "stflow/toy_model.hpp"

namespace stflow {

enum class LossKind { min, softmin, variance };
enum class Optimizer { plain, adam };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view s);
std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view s);

struct EqualizeConfig {
  double step_size = 1e-5;
  Optimizer optimizer = Optimizer::adam;
  LossKind loss = LossKind::min;
  double tau = 0.01;
  GroupAgg group_agg = GroupAgg::max;
  int inner_steps = 1;
  int max_iterations = 100;
  double threshold = 0.2;  // no update once loss >= threshold
  std::vector<int> tokens;

  void validate() const;
};

/// min: smallest score. softmin: soft_min(scores; tau). variance: -sum (A_i - mean)^2.
double fairness_loss(std::span<const double> scores, LossKind kind, double tau);
/// d loss / d scores. For min, the lowest-index minimum takes the whole gradient.
std::vector<double> fairness_loss_gradient(std::span<const double> scores, LossKind kind, double tau);

struct LossEvaluation {
  double loss = 0.0;
  std::vector<double> scores;    // aligned with cfg.tokens
  std::vector<double> gradient;  // d loss / d latent; empty unless requested
};

LossEvaluation evaluate_fairness(const ToyModel& model, const ToyLatent& latent, const EqualizeConfig& cfg,
                                 bool with_gradient);

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  std::vector<double> scores;
  double grad_norm = 0.0;
  bool updated = false;
};

struct EqualizeTrajectory {
  std::vector<IterationRecord> records;
  ToyLatent final_latent;
  std::vector<double> final_scores;
  double final_loss = 0.0;
};

/// Throws std::runtime_error on a non-finite loss or gradient.
EqualizeTrajectory equalize(const ToyModel& model, ToyLatent latent, const EqualizeConfig& cfg);

/// One JSON object per line: iteration, loss, scores, grad_norm, updated.
void write_trajectory_jsonl(const EqualizeTrajectory& trajectory, std::span<const int> tokens, std::ostream& out);

struct AttributionReport {
  AttributionResult exact;
  AttributionResult hard;
  AttributionResult soft;
  AttributionResult rollout;
  AttributionResult cross;
};

/// All five attribution methods on the (f32) stack of the current latent.
AttributionReport attribution_report(const ToyModel& model, const ToyLatent& latent, const EqualizeConfig& cfg);
AttributionReport attribution_report(const AttentionStack& stack, std::span<const int> tokens, double tau,
                                     GroupAgg group_agg = GroupAgg::max);

}  // namespace stflow
