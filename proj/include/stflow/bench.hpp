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

#include <cstdint>
#include <string>
#include <vector>

#include "stflow/tensor_io.hpp"

namespace stflow {

inline constexpr int kExactVideoTokenLimit = 256;
inline constexpr int kMinBenchRepeats = 3;

struct BenchSpec {
  int self_layers = 8;
  int video_tokens = 1024;
  int text_tokens = 16;
  int frames = 0;  // 0: 16 when it divides video_tokens, else 1
  int heads = 1;
  int repeats = 5;
  bool exact = false;
  double tau = 0.01;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on bad sizes, repeats < 3, or exact above the size guard.
  void validate() const;
  TokenLayout layout() const;
};

struct BenchRecord {
  std::string method;
  int layers = 0;
  int video_tokens = 0;
  int text_tokens = 0;
  double seconds = 0.0;            // median wall time per inference (all tokens)
  double seconds_per_token = 0.0;
  int repeats = 0;
};

/// Times cross, rollout, soft, hard (and exact) attribution on a random stack.
std::vector<BenchRecord> run_bench(const BenchSpec& spec);

}  // namespace stflow
