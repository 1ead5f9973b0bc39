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
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "math_consts.hpp"
#include "stflow/kernels.hpp"

namespace stflow::kernels::scalar {

namespace {

using namespace detail;

double pow2(std::int64_t k) { return std::bit_cast<double>(static_cast<std::uint64_t>(k + 1023) << 52); }

double exp1(double t) {
  if (t != t) return t;
  if (t > kExpHi) return std::numeric_limits<double>::infinity();
  if (t < kExpLo) return 0.0;
  const double k = std::nearbyint(t * kLog2e);
  const double r = (t - k * kLn2Hi) - k * kLn2Lo;
  double p = kExpPoly[0];
  for (int i = 1; i < 12; ++i) p = p * r + kExpPoly[i];
  p = p * r + 1.0;
  p = p * r + 1.0;
  // split the scale so subnormal results stay representable
  const auto ki = static_cast<std::int32_t>(k);
  const std::int32_t a = ki >> 1;
  const std::int32_t b = ki - a;
  return (p * pow2(a)) * pow2(b);
}

double log1(double x) {
  const auto u = std::bit_cast<std::uint64_t>(x);
  double e = static_cast<double>(static_cast<std::int64_t>(u >> 52)) - 1023.0;
  double m = std::bit_cast<double>((u & 0x000FFFFFFFFFFFFFull) | 0x3FF0000000000000ull);
  if (m > kSqrt2) {
    m = m * 0.5;
    e = e + 1.0;
  }
  const double f = m - 1.0;
  const double s = f / (2.0 + f);
  const double z = s * s;
  double q = kLogPoly[0];
  for (int i = 1; i < 9; ++i) q = q * z + kLogPoly[i];
  q = q * z + 1.0;
  const double lm = (2.0 * s) * q;
  return e * kLn2Hi + (e * kLn2Lo + lm);
}

}  // namespace

void minmax_row(double a, const double* b, double* c, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] = std::max(c[j], std::min(a, b[j]));
}

void soft_row(double alpha, const double* beta, double* s, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) s[j] += 1.0 / (alpha + beta[j]);
}

void axpy_row(double a, const double* b, double* c, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
}

void exp_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  for (std::size_t j = 0; j < n; ++j) out[j] = exp1((shift - x[j]) * scale);
}

void log_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  for (std::size_t j = 0; j < n; ++j) out[j] = shift + scale * log1(x[j]);
}

}  // namespace stflow::kernels::scalar
