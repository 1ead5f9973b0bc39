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

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stflow/minmax_flow.hpp"

namespace stflow {

Heatmap heatmap(const AttributionResult& result, int token, const TokenLayout& layout) {
  const auto it = result.heatmaps.find(token);
  if (it == result.heatmaps.end()) throw std::out_of_range("no heatmap for token " + std::to_string(token));
  if (it->second.size() != static_cast<std::size_t>(layout.video_tokens()))
    throw DimensionError("heatmap length " + std::to_string(it->second.size()) + " does not match layout");
  return {layout.frames, layout.height, layout.width, it->second};
}

namespace {

constexpr double kCubicA = -0.75;

double cubic_weight(double x) {
  x = std::abs(x);
  if (x <= 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((kCubicA * x - 5.0 * kCubicA) * x + 8.0 * kCubicA) * x - 4.0 * kCubicA;
  return 0.0;
}

struct Tap {
  int index[4];
  double weight[4];
};

std::vector<Tap> taps(int in, int out) {
  std::vector<Tap> result(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    Tap& t = result[static_cast<std::size_t>(o)];
    for (int k = 0; k < 4; ++k) {
      t.index[k] = std::clamp(static_cast<int>(base) - 1 + k, 0, in - 1);
      t.weight[k] = cubic_weight(frac - (k - 1));
    }
  }
  return result;
}

}  // namespace

Heatmap resize_bicubic(const Heatmap& map, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("resize target must be positive");
  const auto ty = taps(map.height, height);
  const auto tx = taps(map.width, width);
  Heatmap out{map.frames, height, width,
              std::vector<double>(static_cast<std::size_t>(map.frames) * height * width)};
  std::vector<double> rows(static_cast<std::size_t>(map.height) * width);
  for (int f = 0; f < map.frames; ++f) {
    for (int y = 0; y < map.height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Tap& t = tx[static_cast<std::size_t>(x)];
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += t.weight[k] * map.at(f, y, t.index[k]);
        rows[static_cast<std::size_t>(y) * width + x] = v;
      }
    }
    for (int y = 0; y < height; ++y) {
      const Tap& t = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < width; ++x) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += t.weight[k] * rows[static_cast<std::size_t>(t.index[k]) * width + x];
        out.values[(static_cast<std::size_t>(f) * height + y) * width + x] = v;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> threshold_segment(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("cannot segment an empty map");
  // Offsets from the minimum keep a constant map's mean exactly equal to its values.
  const double lo = *std::min_element(values.begin(), values.end());
  double mean = 0.0;
  for (double v : values) mean += v - lo;
  mean /= static_cast<double>(values.size());
  std::vector<std::uint8_t> mask(values.size());
  std::transform(values.begin(), values.end(), mask.begin(), [&](double v) { return v - lo > mean ? 1 : 0; });
  return mask;
}

}  // namespace stflow
