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

// A small, frozen, differentiable attention network standing in for a
// text-to-video backbone: the latent goes in, per-layer attention weights
// come out, and weight sensitivities map back onto the latent exactly.
//
// Weights are drawn from xorshift64* (seeded through splitmix64) with
// Box-Muller normals, so a (config, seed) pair reproduces the same model on
// any platform.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "stflow/attention_graph.hpp"
#include "stflow/matrix.hpp"
#include "stflow/tensor_io.hpp"

namespace stflow {

/// xorshift64* generator with a splitmix64-scrambled seed.
class XorShift64Star {
 public:
  explicit XorShift64Star(std::uint64_t seed);
  std::uint64_t next();
  /// Uniform in (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct ToyConfig {
  int frames = 2;
  int height = 4;
  int width = 4;
  int dim = 8;
  int text_tokens = 4;
  std::vector<LayerKind> pattern{LayerKind::self_spatial, LayerKind::cross, LayerKind::self_temporal,
                                 LayerKind::cross, LayerKind::self_spatial};
  int heads = 1;
  std::uint64_t seed = 0;

  TokenLayout layout() const { return {frames, height, width}; }
  /// Throws std::invalid_argument on non-positive sizes or a pattern without cross layers.
  void validate() const;
};

struct ToyModel {
  ToyConfig config;
  // [layer][head]
  std::vector<std::vector<Matrix>> query_proj;
  std::vector<std::vector<Matrix>> key_proj;
  Matrix text_embedding;  // [K x d]

  /// Order-sensitive digest of every weight bit.
  std::uint64_t checksum() const;
};

/// Latent tensor [frames, height*width, dim], token-major.
struct ToyLatent {
  int tokens = 0;
  int dim = 0;
  std::vector<double> values;

  std::span<const double> token(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * dim, static_cast<std::size_t>(dim)};
  }
};

ToyModel init_toy_model(const ToyConfig& cfg);
/// Standard-normal latent from a seed.
ToyLatent init_toy_latent(const ToyConfig& cfg, std::uint64_t seed);

/// Per-layer, per-head f64 attention weights ([Q x K] each).
struct ToyAttention {
  std::vector<LayerKind> kinds;
  std::vector<std::vector<Matrix>> heads;

  /// Head means, ready for build_capacity_graph.
  std::vector<AveragedLayer> averaged() const;
};

ToyAttention forward_weights(const ToyModel& model, const ToyLatent& latent);
/// Same weights rounded to an f32 AttentionStack.
AttentionStack forward_attention(const ToyModel& model, const ToyLatent& latent);

/// Gradient of sum_l <sensitivities[l], mean-over-heads weights[l]> w.r.t. the latent.
std::vector<double> backward_latent(const ToyModel& model, const ToyLatent& latent,
                                    std::span<const Matrix> sensitivities);

}  // namespace stflow
