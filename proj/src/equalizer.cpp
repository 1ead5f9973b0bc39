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

#include "stflow/equalizer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "stflow/exact_flow.hpp"
#include "stflow/rollout.hpp"

namespace stflow {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::min: return "min";
    case LossKind::softmin: return "softmin";
    case LossKind::variance: return "variance";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "min") return LossKind::min;
  if (s == "softmin") return LossKind::softmin;
  if (s == "variance") return LossKind::variance;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

std::string_view to_string(Optimizer opt) { return opt == Optimizer::plain ? "plain" : "adam"; }

Optimizer parse_optimizer(std::string_view s) {
  if (s == "plain") return Optimizer::plain;
  if (s == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

void EqualizeConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(threshold >= 0.0)) throw std::invalid_argument("threshold must be non-negative");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (tokens.empty()) throw std::invalid_argument("token set must be non-empty");
  if (inner_steps < 1) throw std::invalid_argument("inner steps must be at least 1");
  if (max_iterations < 0) throw std::invalid_argument("max iterations must be non-negative");
}

double fairness_loss(std::span<const double> scores, LossKind kind, double tau) {
  if (scores.empty()) throw std::invalid_argument("fairness loss of an empty score set");
  switch (kind) {
    case LossKind::min: return *std::min_element(scores.begin(), scores.end());
    case LossKind::softmin: return soft_min(scores, tau);
    case LossKind::variance: {
      double mean = 0.0;
      for (double a : scores) mean += a;
      mean /= static_cast<double>(scores.size());
      double ss = 0.0;
      for (double a : scores) ss += (a - mean) * (a - mean);
      return -ss;
    }
  }
  return 0.0;
}

std::vector<double> fairness_loss_gradient(std::span<const double> scores, LossKind kind, double tau) {
  if (scores.empty()) throw std::invalid_argument("fairness loss of an empty score set");
  std::vector<double> g(scores.size(), 0.0);
  switch (kind) {
    case LossKind::min:
      g[static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin())] = 1.0;
      break;
    case LossKind::softmin: {
      const double value = soft_min(scores, tau);
      for (std::size_t i = 0; i < scores.size(); ++i) g[i] = std::exp((value - scores[i]) / tau);
      break;
    }
    case LossKind::variance: {
      double mean = 0.0;
      for (double a : scores) mean += a;
      mean /= static_cast<double>(scores.size());
      for (std::size_t i = 0; i < scores.size(); ++i) g[i] = -2.0 * (scores[i] - mean);
      break;
    }
  }
  return g;
}

LossEvaluation evaluate_fairness(const ToyModel& model, const ToyLatent& latent, const EqualizeConfig& cfg,
                                 bool with_gradient) {
  const ToyAttention attention = forward_weights(model, latent);
  const CapacityGraph graph =
      build_capacity_graph(attention.averaged(), model.config.layout(), model.config.text_tokens);
  const FlowConfig flow{FlowMode::soft, cfg.tau, cfg.group_agg};
  const AttributionResult result = path_flow(graph, cfg.tokens, flow);

  LossEvaluation eval;
  for (int t : cfg.tokens) eval.scores.push_back(result.scores.at(t));
  eval.loss = fairness_loss(eval.scores, cfg.loss, cfg.tau);
  if (!with_gradient) return eval;

  const auto upstream = fairness_loss_gradient(eval.scores, cfg.loss, cfg.tau);
  const FlowGradient fg = path_flow_gradient(graph, cfg.tokens, flow, upstream);
  const auto sens = attention_sensitivities(graph, fg.video_chain, fg.injections);
  eval.gradient = backward_latent(model, latent, sens);
  return eval;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

class LatentStepper {
 public:
  LatentStepper(const EqualizeConfig& cfg, std::size_t size)
      : cfg_(cfg), first_(size, 0.0), second_(size, 0.0) {}

  // Gradient ascent.
  void step(std::vector<double>& x, const std::vector<double>& g) {
    if (cfg_.optimizer == Optimizer::plain) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg_.step_size * g[i];
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, t_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      first_[i] = kAdamBeta1 * first_[i] + (1.0 - kAdamBeta1) * g[i];
      second_[i] = kAdamBeta2 * second_[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      x[i] += cfg_.step_size * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + kAdamEps);
    }
  }

 private:
  const EqualizeConfig& cfg_;
  std::vector<double> first_;
  std::vector<double> second_;
  int t_ = 0;
};

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_finite(const LossEvaluation& eval, int iteration) {
  if (!std::isfinite(eval.loss))
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(iteration));
  for (double g : eval.gradient)
    if (!std::isfinite(g)) throw std::runtime_error("non-finite latent gradient at iteration " + std::to_string(iteration));
}

}  // namespace

EqualizeTrajectory equalize(const ToyModel& model, ToyLatent latent, const EqualizeConfig& cfg) {
  cfg.validate();
  EqualizeTrajectory traj;
  LatentStepper stepper(cfg, latent.values.size());
  bool stopped = false;
  for (int it = 0; it < cfg.max_iterations && !stopped; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    for (int inner = 0; inner < cfg.inner_steps; ++inner) {
      const LossEvaluation eval = evaluate_fairness(model, latent, cfg, true);
      require_finite(eval, it);
      if (inner == 0) {
        rec.loss = eval.loss;
        rec.scores = eval.scores;
        rec.grad_norm = norm(eval.gradient);
      }
      if (eval.loss >= cfg.threshold) {
        stopped = true;
        break;
      }
      stepper.step(latent.values, eval.gradient);
      rec.updated = true;
    }
    traj.records.push_back(std::move(rec));
  }
  const LossEvaluation final_eval = evaluate_fairness(model, latent, cfg, false);
  traj.final_scores = final_eval.scores;
  traj.final_loss = final_eval.loss;
  traj.final_latent = std::move(latent);
  return traj;
}

void write_trajectory_jsonl(const EqualizeTrajectory& trajectory, std::span<const int> tokens, std::ostream& out) {
  for (const auto& rec : trajectory.records) {
    nlohmann::json line = {{"iteration", rec.iteration},
                           {"loss", rec.loss},
                           {"tokens", std::vector<int>(tokens.begin(), tokens.end())},
                           {"scores", rec.scores},
                           {"grad_norm", rec.grad_norm},
                           {"updated", rec.updated}};
    out << line.dump() << '\n';
  }
}

AttributionReport attribution_report(const AttentionStack& stack, std::span<const int> tokens, double tau,
                                     GroupAgg group_agg) {
  const CapacityGraph graph = build_capacity_graph(stack);
  AttributionReport report;
  const ExactFlowResult exact = exact_st_flow(graph, tokens);
  report.exact.method = "exact";
  report.exact.scores = exact.scores;
  report.hard = path_flow(graph, tokens, {FlowMode::hard, tau, group_agg});
  report.soft = path_flow(graph, tokens, {FlowMode::soft, tau, group_agg});
  report.rollout = rollout(stack, tokens);
  report.cross = cross_attention_attr(stack, tokens);
  return report;
}

AttributionReport attribution_report(const ToyModel& model, const ToyLatent& latent, const EqualizeConfig& cfg) {
  return attribution_report(forward_attention(model, latent), cfg.tokens, cfg.tau, cfg.group_agg);
}

}  // namespace stflow
