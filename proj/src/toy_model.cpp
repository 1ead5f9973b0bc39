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

#include "stflow/toy_model.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace stflow {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

XorShift64Star::XorShift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
  if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
}

std::uint64_t XorShift64Star::next() {
  state_ ^= state_ >> 12;
  state_ ^= state_ << 25;
  state_ ^= state_ >> 27;
  return state_ * 0x2545F4914F6CDD1Dull;
}

double XorShift64Star::uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

double XorShift64Star::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void ToyConfig::validate() const {
  if (frames < 1 || height < 1 || width < 1 || dim < 1 || text_tokens < 1 || heads < 1)
    throw std::invalid_argument("toy config sizes must be positive");
  bool has_cross = false;
  for (auto k : pattern) has_cross = has_cross || k == LayerKind::cross;
  if (!has_cross) throw std::invalid_argument("toy layer pattern needs a cross layer");
}

std::uint64_t ToyModel::checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&h](const Matrix& m) {
    for (double v : m.values()) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 0x100000001B3ull;
    }
  };
  for (std::size_t l = 0; l < query_proj.size(); ++l)
    for (std::size_t h_i = 0; h_i < query_proj[l].size(); ++h_i) {
      mix(query_proj[l][h_i]);
      mix(key_proj[l][h_i]);
    }
  mix(text_embedding);
  return h;
}

ToyModel init_toy_model(const ToyConfig& cfg) {
  cfg.validate();
  XorShift64Star rng(cfg.seed);
  const auto d = static_cast<std::size_t>(cfg.dim);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  auto sample = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
  };
  ToyModel model;
  model.config = cfg;
  for (std::size_t l = 0; l < cfg.pattern.size(); ++l) {
    model.query_proj.emplace_back();
    model.key_proj.emplace_back();
    for (int h = 0; h < cfg.heads; ++h) {
      model.query_proj[l].push_back(sample(d, d));
      model.key_proj[l].push_back(sample(d, d));
    }
  }
  model.text_embedding = sample(static_cast<std::size_t>(cfg.text_tokens), d);
  return model;
}

ToyLatent init_toy_latent(const ToyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  XorShift64Star rng(seed ^ 0x5EEDF00Dull);
  ToyLatent latent;
  latent.tokens = cfg.layout().video_tokens();
  latent.dim = cfg.dim;
  latent.values.resize(static_cast<std::size_t>(latent.tokens) * cfg.dim);
  for (double& v : latent.values) v = rng.normal();
  return latent;
}

namespace {

// rows of out = rows of in times proj^T, i.e. out[t] = proj * in[t]
Matrix project(const Matrix& proj, std::span<const double> in, std::size_t count, std::size_t d) {
  Matrix out(count, d);
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t a = 0; a < d; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < d; ++b) s += proj(a, b) * in[t * d + b];
      out(t, a) = s;
    }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_latent(const ToyModel& model, const ToyLatent& latent) {
  const auto& cfg = model.config;
  if (latent.tokens != cfg.layout().video_tokens() || latent.dim != cfg.dim ||
      latent.values.size() != static_cast<std::size_t>(latent.tokens) * latent.dim)
    throw DimensionError("latent shape does not match the toy config");
}

BlockPartition self_groups(LayerKind kind, const TokenLayout& layout) {
  return kind == LayerKind::self_spatial ? BlockPartition::spatial(layout) : BlockPartition::temporal(layout);
}

struct Projections {
  Matrix queries;  // [n x d]
  Matrix keys;     // [n x d] or [K x d] for cross
};

Projections projections(const ToyModel& model, const ToyLatent& latent, std::size_t layer, std::size_t head) {
  const auto d = static_cast<std::size_t>(model.config.dim);
  const auto n = static_cast<std::size_t>(latent.tokens);
  Projections p;
  p.queries = project(model.query_proj[layer][head], latent.values, n, d);
  if (model.config.pattern[layer] == LayerKind::cross) {
    p.keys = project(model.key_proj[layer][head], model.text_embedding.values(),
                     model.text_embedding.rows(), d);
  } else {
    p.keys = project(model.key_proj[layer][head], latent.values, n, d);
  }
  return p;
}

// Softmax over the support of each query row; scores scaled by 1/sqrt(d).
Matrix attention_head(const ToyModel& model, LayerKind kind, const Projections& p) {
  const auto& cfg = model.config;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  const std::size_t n = p.queries.rows();
  if (kind == LayerKind::cross) {
    const std::size_t k = p.keys.rows();
    Matrix w(n, k);
    std::vector<double> s(k);
    for (std::size_t q = 0; q < n; ++q) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, s[j] = scale * dot(p.queries.row(q), p.keys.row(j)));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += s[j] = std::exp(s[j] - mx);
      for (std::size_t j = 0; j < k; ++j) w(q, j) = s[j] / z;
    }
    return w;
  }
  const BlockPartition groups = self_groups(kind, cfg.layout());
  const auto b = static_cast<std::size_t>(groups.size);
  Matrix w(n, n);
  std::vector<double> s(b);
  for (int g = 0; g < groups.count; ++g) {
    for (int tq = 0; tq < groups.size; ++tq) {
      const auto q = static_cast<std::size_t>(groups.index(g, tq));
      double mx = -INFINITY;
      for (std::size_t u = 0; u < b; ++u) {
        const auto key = static_cast<std::size_t>(groups.index(g, static_cast<int>(u)));
        mx = std::max(mx, s[u] = scale * dot(p.queries.row(q), p.keys.row(key)));
      }
      double z = 0.0;
      for (std::size_t u = 0; u < b; ++u) z += s[u] = std::exp(s[u] - mx);
      for (std::size_t u = 0; u < b; ++u) w(q, static_cast<std::size_t>(groups.index(g, static_cast<int>(u)))) = s[u] / z;
    }
  }
  return w;
}

}  // namespace

std::vector<AveragedLayer> ToyAttention::averaged() const {
  std::vector<AveragedLayer> out;
  for (std::size_t l = 0; l < kinds.size(); ++l) {
    Matrix mean = heads[l].front();
    for (std::size_t h = 1; h < heads[l].size(); ++h)
      for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += heads[l][h].data()[i];
    if (heads[l].size() > 1) {
      const double inv = 1.0 / static_cast<double>(heads[l].size());
      for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] *= inv;
    }
    out.push_back({kinds[l], std::move(mean)});
  }
  return out;
}

ToyAttention forward_weights(const ToyModel& model, const ToyLatent& latent) {
  check_latent(model, latent);
  ToyAttention out;
  out.kinds = model.config.pattern;
  for (std::size_t l = 0; l < out.kinds.size(); ++l) {
    out.heads.emplace_back();
    for (std::size_t h = 0; h < model.query_proj[l].size(); ++h)
      out.heads[l].push_back(attention_head(model, out.kinds[l], projections(model, latent, l, h)));
  }
  return out;
}

AttentionStack forward_attention(const ToyModel& model, const ToyLatent& latent) {
  const ToyAttention att = forward_weights(model, latent);
  const auto& cfg = model.config;
  AttentionStack stack;
  stack.layout = cfg.layout();
  for (int k = 0; k < cfg.text_tokens; ++k) stack.text_tokens.push_back("tok" + std::to_string(k));
  for (std::size_t l = 0; l < att.kinds.size(); ++l) {
    AttentionLayer layer;
    layer.name = "layer" + std::to_string(l) + "." + std::string(to_string(att.kinds[l]));
    layer.kind = att.kinds[l];
    layer.heads = static_cast<int>(att.heads[l].size());
    layer.query_tokens = static_cast<int>(att.heads[l].front().rows());
    layer.key_tokens = static_cast<int>(att.heads[l].front().cols());
    for (const auto& head : att.heads[l])
      for (double v : head.values()) layer.weights.push_back(static_cast<float>(v));
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

std::vector<double> backward_latent(const ToyModel& model, const ToyLatent& latent,
                                    std::span<const Matrix> sensitivities) {
  check_latent(model, latent);
  const auto& cfg = model.config;
  if (sensitivities.size() != cfg.pattern.size()) throw DimensionError("one sensitivity matrix per layer required");
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto n = static_cast<std::size_t>(latent.tokens);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::vector<double> grad(latent.values.size(), 0.0);

  for (std::size_t l = 0; l < cfg.pattern.size(); ++l) {
    const LayerKind kind = cfg.pattern[l];
    const Matrix& sens = sensitivities[l];
    const std::size_t keys = kind == LayerKind::cross ? static_cast<std::size_t>(cfg.text_tokens) : n;
    if (sens.rows() != n || sens.cols() != keys) throw DimensionError("sensitivity shape mismatch at layer " + std::to_string(l));
    bool any = false;
    for (double v : sens.values()) any = any || v != 0.0;
    if (!any) continue;

    const double head_scale = 1.0 / static_cast<double>(model.query_proj[l].size());
    for (std::size_t h = 0; h < model.query_proj[l].size(); ++h) {
      const Projections p = projections(model, latent, l, h);
      const Matrix w = attention_head(model, kind, p);
      // d loss / d score, row by row over each row's support
      Matrix d_q(n, d), d_k(kind == LayerKind::cross ? 0 : n, d);
      auto row_backward = [&](std::size_t q, auto key_of, std::size_t count) {
        double inner = 0.0;
        for (std::size_t u = 0; u < count; ++u) inner += w(q, key_of(u)) * sens(q, key_of(u));
        inner *= head_scale;
        for (std::size_t u = 0; u < count; ++u) {
          const std::size_t key = key_of(u);
          const double ds = w(q, key) * (head_scale * sens(q, key) - inner) * scale;
          if (ds == 0.0) continue;
          for (std::size_t a = 0; a < d; ++a) d_q(q, a) += ds * p.keys(key, a);
          if (kind != LayerKind::cross)
            for (std::size_t a = 0; a < d; ++a) d_k(key, a) += ds * p.queries(q, a);
        }
      };
      if (kind == LayerKind::cross) {
        for (std::size_t q = 0; q < n; ++q) row_backward(q, [](std::size_t u) { return u; }, keys);
      } else {
        const BlockPartition groups = self_groups(kind, cfg.layout());
        for (int g = 0; g < groups.count; ++g)
          for (int tq = 0; tq < groups.size; ++tq)
            row_backward(static_cast<std::size_t>(groups.index(g, tq)),
                         [&](std::size_t u) { return static_cast<std::size_t>(groups.index(g, static_cast<int>(u))); },
                         static_cast<std::size_t>(groups.size));
      }
      // x_t gets Wq^T d_q[t] + Wk^T d_k[t]
      const Matrix& wq = model.query_proj[l][h];
      const Matrix& wk = model.key_proj[l][h];
      for (std::size_t t = 0; t < n; ++t) {
        double* gx = grad.data() + t * d;
        for (std::size_t a = 0; a < d; ++a) {
          const double dq = d_q(t, a);
          const double dk = kind == LayerKind::cross ? 0.0 : d_k(t, a);
          if (dq == 0.0 && dk == 0.0) continue;
          for (std::size_t b = 0; b < d; ++b) gx[b] += wq(a, b) * dq + wk(a, b) * dk;
        }
      }
    }
  }
  return grad;
}

}  // namespace stflow
