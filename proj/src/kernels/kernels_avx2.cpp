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

#include <immintrin.h>

#include <algorithm>
#include <cstdint>

#include "math_consts.hpp"
#include "stflow/kernels.hpp"

namespace stflow::kernels::avx2 {

// Operand order matters for bit-equality with std::min/std::max on ties of
// signed zeros; inputs here are non-negative capacities, so plain min/max
// instructions are used.

void minmax_row(double a, const double* b, double* c, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    __m256d c1 = _mm256_loadu_pd(c + j + 4);
    c0 = _mm256_max_pd(c0, _mm256_min_pd(va, _mm256_loadu_pd(b + j)));
    c1 = _mm256_max_pd(c1, _mm256_min_pd(va, _mm256_loadu_pd(b + j + 4)));
    _mm256_storeu_pd(c + j, c0);
    _mm256_storeu_pd(c + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    c0 = _mm256_max_pd(c0, _mm256_min_pd(va, _mm256_loadu_pd(b + j)));
    _mm256_storeu_pd(c + j, c0);
  }
  for (; j < n; ++j) c[j] = std::max(c[j], std::min(a, b[j]));
}

void soft_row(double alpha, const double* beta, double* s, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d d0 = _mm256_add_pd(va, _mm256_loadu_pd(beta + j));
    __m256d d1 = _mm256_add_pd(va, _mm256_loadu_pd(beta + j + 4));
    __m256d s0 = _mm256_add_pd(_mm256_loadu_pd(s + j), _mm256_div_pd(one, d0));
    __m256d s1 = _mm256_add_pd(_mm256_loadu_pd(s + j + 4), _mm256_div_pd(one, d1));
    _mm256_storeu_pd(s + j, s0);
    _mm256_storeu_pd(s + j + 4, s1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d d0 = _mm256_add_pd(va, _mm256_loadu_pd(beta + j));
    _mm256_storeu_pd(s + j, _mm256_add_pd(_mm256_loadu_pd(s + j), _mm256_div_pd(one, d0)));
  }
  for (; j < n; ++j) s[j] += 1.0 / (alpha + beta[j]);
}

void axpy_row(double a, const double* b, double* c, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d p0 = _mm256_mul_pd(va, _mm256_loadu_pd(b + j));
    __m256d p1 = _mm256_mul_pd(va, _mm256_loadu_pd(b + j + 4));
    _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), p0));
    _mm256_storeu_pd(c + j + 4, _mm256_add_pd(_mm256_loadu_pd(c + j + 4), p1));
  }
  for (; j + 4 <= n; j += 4) {
    __m256d p0 = _mm256_mul_pd(va, _mm256_loadu_pd(b + j));
    _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), p0));
  }
  for (; j < n; ++j) c[j] += a * b[j];
}

namespace {

using namespace detail;

__m256d pow2(__m128i k) {
  __m256i e = _mm256_add_epi64(_mm256_cvtepi32_epi64(k), _mm256_set1_epi64x(1023));
  return _mm256_castsi256_pd(_mm256_slli_epi64(e, 52));
}

__m256d exp4(__m256d t) {
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(t, _mm256_set1_pd(kLog2e)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d r = _mm256_sub_pd(_mm256_sub_pd(t, _mm256_mul_pd(k, _mm256_set1_pd(kLn2Hi))),
                                  _mm256_mul_pd(k, _mm256_set1_pd(kLn2Lo)));
  __m256d p = _mm256_set1_pd(kExpPoly[0]);
  for (int i = 1; i < 12; ++i) p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kExpPoly[i]));
  const __m256d one = _mm256_set1_pd(1.0);
  p = _mm256_add_pd(_mm256_mul_pd(p, r), one);
  p = _mm256_add_pd(_mm256_mul_pd(p, r), one);
  const __m128i ki = _mm256_cvtpd_epi32(k);
  const __m128i a = _mm_srai_epi32(ki, 1);
  const __m128i b = _mm_sub_epi32(ki, a);
  __m256d y = _mm256_mul_pd(_mm256_mul_pd(p, pow2(a)), pow2(b));
  y = _mm256_blendv_pd(y, _mm256_set1_pd(__builtin_inf()), _mm256_cmp_pd(t, _mm256_set1_pd(kExpHi), _CMP_GT_OQ));
  y = _mm256_blendv_pd(y, _mm256_setzero_pd(), _mm256_cmp_pd(t, _mm256_set1_pd(kExpLo), _CMP_LT_OQ));
  return y;
}

__m256d log4(__m256d x) {
  const __m256i u = _mm256_castpd_si256(x);
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(u, 52), magic)),
                            _mm256_castsi256_pd(magic));
  e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(u, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
                                                  _mm256_set1_epi64x(0x3FF0000000000000LL)));
  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(kSqrt2), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, _mm256_set1_pd(1.0)));
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d f = _mm256_sub_pd(m, one);
  const __m256d s = _mm256_div_pd(f, _mm256_add_pd(_mm256_set1_pd(2.0), f));
  const __m256d z = _mm256_mul_pd(s, s);
  __m256d q = _mm256_set1_pd(kLogPoly[0]);
  for (int i = 1; i < 9; ++i) q = _mm256_add_pd(_mm256_mul_pd(q, z), _mm256_set1_pd(kLogPoly[i]));
  q = _mm256_add_pd(_mm256_mul_pd(q, z), one);
  const __m256d lm = _mm256_mul_pd(_mm256_mul_pd(_mm256_set1_pd(2.0), s), q);
  return _mm256_add_pd(_mm256_mul_pd(e, _mm256_set1_pd(kLn2Hi)),
                       _mm256_add_pd(_mm256_mul_pd(e, _mm256_set1_pd(kLn2Lo)), lm));
}

}  // namespace

void exp_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  const __m256d vs = _mm256_set1_pd(shift);
  const __m256d vk = _mm256_set1_pd(scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d t = _mm256_mul_pd(_mm256_sub_pd(vs, _mm256_loadu_pd(x + j)), vk);
    _mm256_storeu_pd(out + j, exp4(t));
  }
  if (j < n) scalar::exp_row(x + j, out + j, n - j, shift, scale);
}

void log_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  const __m256d vs = _mm256_set1_pd(shift);
  const __m256d vk = _mm256_set1_pd(scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d l = log4(_mm256_loadu_pd(x + j));
    _mm256_storeu_pd(out + j, _mm256_add_pd(vs, _mm256_mul_pd(vk, l)));
  }
  if (j < n) scalar::log_row(x + j, out + j, n - j, shift, scale);
}

}  // namespace stflow::kernels::avx2
