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

#include "stflow/minmax_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stflow/kernels.hpp"

namespace stflow {

std::string_view to_string(FlowMode mode) { return mode == FlowMode::hard ? "hard" : "soft"; }
std::string_view to_string(GroupAgg agg) { return agg == GroupAgg::max ? "max" : "sum"; }

FlowMode parse_flow_mode(std::string_view s) {
  if (s == "hard") return FlowMode::hard;
  if (s == "soft") return FlowMode::soft;
  throw std::invalid_argument("unknown flow mode '" + std::string(s) + "'");
}

GroupAgg parse_group_agg(std::string_view s) {
  if (s == "max") return GroupAgg::max;
  if (s == "sum") return GroupAgg::sum;
  throw std::invalid_argument("unknown group aggregation '" + std::string(s) + "'");
}

void FlowConfig::validate() const {
  if (mode == FlowMode::soft && !(tau > 0.0)) throw std::invalid_argument("tau must be positive in soft mode");
}

double soft_max(std::span<const double> values, double tau) {
  if (values.empty()) throw std::invalid_argument("soft_max of an empty set");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp((v - m) / tau);
  return m + tau * std::log(sum);
}

double soft_min(std::span<const double> values, double tau) {
  std::vector<double> neg(values.size());
  std::transform(values.begin(), values.end(), neg.begin(), [](double v) { return -v; });
  return -soft_max(neg, tau);
}

double soft_min2(double a, double b, double tau) {
  return std::min(a, b) - tau * std::log1p(std::exp(-std::abs(a - b) / tau));
}

Matrix minmax_mul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("min-max product: inner dimensions differ");
  const auto& k = kernels::active();
  Matrix c(a.rows(), b.cols(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t r = 0; r < a.cols(); ++r) k.minmax_row(a(i, r), b.row(r).data(), out, b.cols());
  }
  return c;
}

MatrixBatch minmax_mul(const MatrixBatch& a, const MatrixBatch& b) {
  if (a.batch != b.batch) throw DimensionError("min-max product: batch sizes differ");
  if (a.cols != b.rows) throw DimensionError("min-max product: inner dimensions differ");
  MatrixBatch c(a.batch, a.rows, b.cols);
  for (std::size_t s = 0; s < a.batch; ++s) c.set_slice(s, minmax_mul(a.slice(s), b.slice(s)));
  return c;
}

namespace {

constexpr double kMinUsableSum = 1e-290;

double reference_element(const Matrix& a, const Matrix& b, std::size_t i, std::size_t j, double tau) {
  double m = -std::numeric_limits<double>::infinity();
  const std::size_t k = a.cols();
  std::vector<double> s(k);
  for (std::size_t r = 0; r < k; ++r) {
    s[r] = soft_min2(a(i, r), b(r, j), tau);
    m = std::max(m, s[r]);
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < k; ++r) sum += std::exp((s[r] - m) / tau);
  return m + tau * std::log(sum);
}

double max_of(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
}

bool usable(double s) { return std::isfinite(s) && s > kMinUsableSum; }

// out[j] = shift + tau * log(sum[j]), or the fallback where the sum is unusable.
template <typename Fallback>
void finish_row(const kernels::KernelTable& kt, const double* sum, double* out, std::size_t n, double shift,
                double tau, Fallback&& fallback) {
  bool all = true;
  for (std::size_t j = 0; j < n && all; ++j) all = usable(sum[j]);
  if (all) {
    kt.log_row(sum, out, n, shift, tau);
    return;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (usable(sum[j]))
      kt.log_row(sum + j, out + j, 1, shift, tau);
    else
      out[j] = fallback(j);
  }
}

// Every element uses the identity
//   exp(softmin(a, b) / tau) = 1 / (exp(-a / tau) + exp(-b / tau)),
// so with a common shift c,
//   C(i, j) = c + tau * log sum_r 1 / (alpha(i, r) + beta(r, j)),
//   alpha = exp((c - A) / tau), beta = exp((c - B) / tau).
// The exponentials are computed once per operand entry and the inner loop is
// add + divide. Elements whose sum under- or overflows are recomputed with
// the per-element log-sum-exp.

}  // namespace

Matrix soft_minmax_mul_reference(const Matrix& a, const Matrix& b, double tau) {
  if (a.cols() != b.rows()) throw DimensionError("soft min-max product: inner dimensions differ");
  check_tau(tau);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) = reference_element(a, b, i, j, tau);
  return c;
}

Matrix soft_minmax_mul(const Matrix& a, const Matrix& b, double tau) {
  if (a.cols() != b.rows()) throw DimensionError("soft min-max product: inner dimensions differ");
  check_tau(tau);
  const auto& kt = kernels::active();
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  if (k == 0 || m == 0 || n == 0) return c;
  const double shift = std::min(max_of(a.values()), max_of(b.values()));
  const double inv = 1.0 / tau;

  Matrix alpha(m, k), beta(k, n);
  kt.exp_row(a.data(), alpha.data(), m * k, shift, inv);
  kt.exp_row(b.data(), beta.data(), k * n, shift, inv);

  std::vector<double> sum(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t r = 0; r < k; ++r) kt.soft_row(alpha(i, r), beta.row(r).data(), sum.data(), n);
    finish_row(kt, sum.data(), c.row(i).data(), n, shift, tau,
               [&](std::size_t j) { return reference_element(a, b, i, j, tau); });
  }
  return c;
}

namespace {

std::vector<int> block_order(const BlockPartition& p) {
  std::vector<int> order(static_cast<std::size_t>(p.tokens()));
  for (int g = 0; g < p.count; ++g)
    for (int t = 0; t < p.size; ++t) order[static_cast<std::size_t>(g * p.size + t)] = p.index(g, t);
  return order;
}

// Diagonal blocks of `t`, block-major: blocks[g][t][u] = T(idx(g,t), idx(g,u)).
std::vector<double> gather_blocks(const Matrix& t, const BlockPartition& p, const std::vector<int>& order) {
  const auto b = static_cast<std::size_t>(p.size);
  std::vector<double> out(static_cast<std::size_t>(p.count) * b * b);
  for (std::size_t g = 0; g < static_cast<std::size_t>(p.count); ++g) {
    double* blk = out.data() + g * b * b;
    for (std::size_t r = 0; r < b; ++r) {
      const auto src = t.row(static_cast<std::size_t>(order[g * b + r]));
      for (std::size_t u = 0; u < b; ++u) blk[r * b + u] = src[static_cast<std::size_t>(order[g * b + u])];
    }
  }
  return out;
}

// Columns of x permuted into block-major order.
Matrix gather_columns(const Matrix& x, const std::vector<int>& order) {
  Matrix out(x.rows(), order.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t c = 0; c < order.size(); ++c) dst[c] = src[static_cast<std::size_t>(order[c])];
  }
  return out;
}

void check_fold_shapes(const Matrix& x, const TransferMatrix& t) {
  if (x.cols() != t.entries.rows()) throw DimensionError("fold: row width differs from transfer source count");
}

bool use_blocks(const TransferMatrix& t) {
  return t.blocks && t.blocks->count > 1 && t.entries.rows() == t.entries.cols() &&
         t.blocks->tokens() == static_cast<int>(t.entries.rows());
}

}  // namespace

Matrix fold_hard(const Matrix& x, const TransferMatrix& t) {
  check_fold_shapes(x, t);
  if (!use_blocks(t)) return minmax_mul(x, t.entries);

  const auto& kt = kernels::active();
  const BlockPartition& p = *t.blocks;
  const auto order = block_order(p);
  const auto blocks = gather_blocks(t.entries, p, order);
  const Matrix xb = gather_columns(x, order);
  const auto b = static_cast<std::size_t>(p.size);
  // Paths through out-of-block (zero) edges contribute min(x, 0) = 0.
  Matrix c(x.rows(), x.cols());
  std::vector<double> acc(b);
  for (std::size_t g = 0; g < static_cast<std::size_t>(p.count); ++g) {
    const double* blk = blocks.data() + g * b * b;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* xi = xb.row(i).data() + g * b;
      for (std::size_t r = 0; r < b; ++r) kt.minmax_row(xi[r], blk + r * b, acc.data(), b);
      auto out = c.row(i);
      for (std::size_t u = 0; u < b; ++u) out[static_cast<std::size_t>(order[g * b + u])] = acc[u];
    }
  }
  return c;
}

Matrix fold_soft(const Matrix& x, const TransferMatrix& t, double tau) {
  check_fold_shapes(x, t);
  check_tau(tau);
  if (!use_blocks(t)) return soft_minmax_mul(x, t.entries, tau);

  const auto& kt = kernels::active();
  const BlockPartition& p = *t.blocks;
  const auto order = block_order(p);
  auto blocks = gather_blocks(t.entries, p, order);
  Matrix xb = gather_columns(x, order);
  const auto b = static_cast<std::size_t>(p.size);
  const std::size_t m = x.rows(), n = x.cols();

  // Out-of-block entries are zero and enter through beta0.
  const double shift = std::min(max_of(xb.values()), std::max(0.0, max_of(blocks)));
  const double inv = 1.0 / tau;
  kt.exp_row(blocks.data(), blocks.data(), blocks.size(), shift, inv);
  kt.exp_row(xb.data(), xb.data(), m * n, shift, inv);
  double beta0;
  const double zero = 0.0;
  kt.exp_row(&zero, &beta0, 1, shift, inv);

  // zero_terms(i, g) = sum over r in block g of 1 / (alpha(i, r) + beta0)
  Matrix zero_terms(m, static_cast<std::size_t>(p.count));
  std::vector<double> zero_total(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = xb.row(i).data();
    for (std::size_t g = 0; g < static_cast<std::size_t>(p.count); ++g) {
      double s = 0.0;
      for (std::size_t r = 0; r < b; ++r) s += 1.0 / (ai[g * b + r] + beta0);
      zero_terms(i, g) = s;
      zero_total[i] += s;
    }
  }

  Matrix c(m, n);
  std::vector<double> acc(b), vals(b);
  for (std::size_t g = 0; g < static_cast<std::size_t>(p.count); ++g) {
    const double* blk = blocks.data() + g * b * b;
    const int* cols = order.data() + g * b;
    for (std::size_t i = 0; i < m; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* ai = xb.row(i).data() + g * b;
      for (std::size_t r = 0; r < b; ++r) kt.soft_row(ai[r], blk + r * b, acc.data(), b);
      const double outside = std::max(0.0, zero_total[i] - zero_terms(i, g));
      for (std::size_t u = 0; u < b; ++u) acc[u] += outside;
      finish_row(kt, acc.data(), vals.data(), b, shift, tau, [&](std::size_t u) {
        return reference_element(x, t.entries, i, static_cast<std::size_t>(cols[u]), tau);
      });
      auto out = c.row(i);
      for (std::size_t u = 0; u < b; ++u) out[static_cast<std::size_t>(cols[u])] = vals[u];
    }
  }
  return c;
}

namespace {

void check_tokens(const CapacityGraph& graph, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= graph.text_tokens) throw std::out_of_range("token index " + std::to_string(t) + " out of range");
}

// softmin(v, cap) = min(v, cap) - tau * log(1 + exp(-|v - cap| / tau)), in place
void soft_sink(const kernels::KernelTable& kt, Matrix& x, double cap, double tau) {
  std::vector<double> d(x.size());
  for (std::size_t idx = 0; idx < d.size(); ++idx) d[idx] = std::abs(x.data()[idx] - cap);
  kt.exp_row(d.data(), d.data(), d.size(), 0.0, 1.0 / tau);
  for (double& v : d) v = 1.0 + v;
  kt.log_row(d.data(), d.data(), d.size(), 0.0, tau);
  for (std::size_t idx = 0; idx < d.size(); ++idx) x.data()[idx] = std::min(x.data()[idx], cap) - d[idx];
}

double soft_max_row(const kernels::KernelTable& kt, std::span<const double> row, double tau,
                    std::vector<double>& scratch) {
  const double m = max_of(row);
  scratch.resize(row.size());
  kt.exp_row(row.data(), scratch.data(), row.size(), m, -1.0 / tau);
  double sum = 0.0;
  for (double v : scratch) sum += v;
  return m + tau * std::log(sum);
}

Matrix select_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(static_cast<std::size_t>(rows[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

AttributionResult path_flow(const CapacityGraph& graph, std::span<const int> tokens, const FlowConfig& cfg) {
  cfg.validate();
  AttributionResult result;
  result.method = std::string(to_string(cfg.mode));
  result.config = cfg;
  if (tokens.empty()) return result;
  check_tokens(graph, tokens);

  const bool soft = cfg.mode == FlowMode::soft;
  const double tau = cfg.tau;
  const double cap = graph.sink_capacity;
  const std::size_t m = tokens.size();
  const auto n = static_cast<std::size_t>(graph.video_tokens());

  const auto& kt = kernels::active();
  std::vector<Matrix> per_group;
  for (const auto& chain : group_chains(graph)) {
    Matrix x = select_rows(*chain.injection, tokens);
    for (const auto& t : chain.suffix) x = soft ? fold_soft(x, t, tau) : fold_hard(x, t);
    if (soft) {
      soft_sink(kt, x, cap, tau);
    } else {
      for (std::size_t idx = 0; idx < x.size(); ++idx) x.data()[idx] = std::min(x.data()[idx], cap);
    }
    per_group.push_back(std::move(x));
  }

  // a single group aggregates to itself under every rule
  Matrix agg = per_group.size() == 1 ? std::move(per_group.front()) : Matrix(m, n);
  std::vector<double> column(per_group.size());
  for (std::size_t idx = 0; per_group.size() > 1 && idx < m * n; ++idx) {
    for (std::size_t g = 0; g < per_group.size(); ++g) column[g] = per_group[g].data()[idx];
    double v;
    if (cfg.group_agg == GroupAgg::sum) {
      v = 0.0;
      for (double c : column) v += c;
    } else {
      v = soft ? soft_max(column, tau) : *std::max_element(column.begin(), column.end());
    }
    agg.data()[idx] = v;
  }

  std::vector<double> scratch;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = agg.row(i);
    result.scores[tokens[i]] = soft ? soft_max_row(kt, row, tau, scratch) : max_of(row);
    result.heatmaps[tokens[i]] = std::vector<double>(row.begin(), row.end());
  }
  return result;
}

FlowGradient path_flow_gradient(const CapacityGraph& graph, std::span<const int> tokens, const FlowConfig& cfg,
                                std::span<const double> upstream) {
  if (cfg.mode != FlowMode::soft) throw std::invalid_argument("hard flow is non-differentiable");
  cfg.validate();
  check_tokens(graph, tokens);
  if (upstream.size() != tokens.size()) throw DimensionError("one upstream sensitivity per token required");

  const double tau = cfg.tau;
  const double cap = graph.sink_capacity;
  const std::size_t m = tokens.size();
  const auto n = static_cast<std::size_t>(graph.video_tokens());

  FlowGradient grad;
  for (const auto& t : graph.video_chain) grad.video_chain.emplace_back(t.entries.rows(), t.entries.cols());
  for (const auto& inj : graph.injections) grad.injections.emplace_back(inj.entries.rows(), inj.entries.cols());
  if (m == 0) return grad;

  // Forward with the per-element evaluation, keeping every fold state.
  const auto chains = group_chains(graph);
  std::vector<std::vector<Matrix>> states(chains.size());
  std::vector<Matrix> sink_out(chains.size());
  for (std::size_t g = 0; g < chains.size(); ++g) {
    auto& xs = states[g];
    xs.push_back(select_rows(*chains[g].injection, tokens));
    for (const auto& t : chains[g].suffix) xs.push_back(soft_minmax_mul_reference(xs.back(), t.entries, tau));
    Matrix y = xs.back();
    for (std::size_t idx = 0; idx < y.size(); ++idx) y.data()[idx] = soft_min2(y.data()[idx], cap, tau);
    sink_out[g] = std::move(y);
  }
  Matrix agg(m, n);
  std::vector<double> column(chains.size());
  for (std::size_t idx = 0; idx < m * n; ++idx) {
    for (std::size_t g = 0; g < chains.size(); ++g) column[g] = sink_out[g].data()[idx];
    if (cfg.group_agg == GroupAgg::sum) {
      double v = 0.0;
      for (double c : column) v += c;
      agg.data()[idx] = v;
    } else {
      agg.data()[idx] = soft_max(column, tau);
    }
  }

  // dA_i / dagg(i, j) = exp((agg - A_i) / tau)
  Matrix d_agg(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double score = soft_max(agg.row(i), tau);
    for (std::size_t j = 0; j < n; ++j) d_agg(i, j) = upstream[i] * std::exp((agg(i, j) - score) / tau);
  }

  for (std::size_t g = 0; g < chains.size(); ++g) {
    const auto& xs = states[g];
    Matrix d_x(m, n);
    for (std::size_t idx = 0; idx < m * n; ++idx) {
      const double y = sink_out[g].data()[idx];
      const double w = cfg.group_agg == GroupAgg::sum ? 1.0 : std::exp((y - agg.data()[idx]) / tau);
      d_x.data()[idx] = d_agg.data()[idx] * w * std::exp((y - xs.back().data()[idx]) / tau);
    }
    for (std::size_t step = chains[g].suffix.size(); step-- > 0;) {
      const Matrix& in = xs[step];
      const Matrix& out = xs[step + 1];
      const Matrix& t = chains[g].suffix[step].entries;
      Matrix& d_t = grad.video_chain[static_cast<std::size_t>(chains[g].layer) + 1 + step];
      Matrix d_in(in.rows(), in.cols());
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) {
          const double upstream_ij = d_x(i, j);
          if (upstream_ij == 0.0) continue;
          const double c = out(i, j);
          for (std::size_t r = 0; r < t.rows(); ++r) {
            const double a = in(i, r), b = t(r, j);
            const double s = soft_min2(a, b, tau);
            const double weight = upstream_ij * std::exp((s - c) / tau);
            d_in(i, r) += weight * std::exp((s - a) / tau);
            d_t(r, j) += weight * std::exp((s - b) / tau);
          }
        }
      }
      d_x = std::move(d_in);
    }
    Matrix& d_inj = grad.injections[g];
    for (std::size_t i = 0; i < m; ++i) {
      auto dst = d_inj.row(static_cast<std::size_t>(tokens[i]));
      const auto src = d_x.row(i);
      for (std::size_t q = 0; q < n; ++q) dst[q] += src[q];
    }
  }
  return grad;
}

}  // namespace stflow
