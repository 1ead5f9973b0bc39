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

// Row kernels for the inner loops of min-max, soft min-max and rollout
// products. Each kernel has a scalar reference and, on x86-64, an AVX2
// variant; the active table is picked once at startup from CPUID and can be
// forced with STFLOW_SIMD=scalar|avx2. All variants produce bit-identical
// results: only lane-parallel IEEE add/mul/div/min/max/round are used, and
// the library is built with -ffp-contract=off. exp_row and log_row use our
// own polynomial evaluation (a few ulp from libm), not std::exp/std::log.

#include <cstddef>
#include <string_view>

namespace stflow::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// c[j] = max(c[j], min(a, b[j]))
using MinMaxRowFn = void (*)(double a, const double* b, double* c, std::size_t n);
/// s[j] += 1 / (alpha + beta[j])
using SoftRowFn = void (*)(double alpha, const double* beta, double* s, std::size_t n);
/// c[j] += a * b[j]
using AxpyRowFn = void (*)(double a, const double* b, double* c, std::size_t n);
/// out[j] = exp((shift - x[j]) * scale); overflow gives +inf, deep underflow 0
using ExpRowFn = void (*)(const double* x, double* out, std::size_t n, double shift, double scale);
/// out[j] = shift + scale * log(x[j]); x[j] must be positive, finite and normal
using LogRowFn = void (*)(const double* x, double* out, std::size_t n, double shift, double scale);

struct KernelTable {
  Isa isa;
  MinMaxRowFn minmax_row;
  SoftRowFn soft_row;
  AxpyRowFn axpy_row;
  ExpRowFn exp_row;
  LogRowFn log_row;
};

namespace scalar {
void minmax_row(double a, const double* b, double* c, std::size_t n);
void soft_row(double alpha, const double* beta, double* s, std::size_t n);
void axpy_row(double a, const double* b, double* c, std::size_t n);
void exp_row(const double* x, double* out, std::size_t n, double shift, double scale);
void log_row(const double* x, double* out, std::size_t n, double shift, double scale);
}  // namespace scalar

namespace avx2 {
void minmax_row(double a, const double* b, double* c, std::size_t n);
void soft_row(double alpha, const double* beta, double* s, std::size_t n);
void axpy_row(double a, const double* b, double* c, std::size_t n);
void exp_row(const double* x, double* out, std::size_t n, double shift, double scale);
void log_row(const double* x, double* out, std::size_t n, double shift, double scale);
}  // namespace avx2

/// True when the binary carries AVX2 kernels and the CPU supports them.
bool avx2_available();

/// Table for a specific ISA; throws std::runtime_error if unavailable.
const KernelTable& table(Isa isa);

/// Currently selected table.
const KernelTable& active();

/// Overrides the selection (tests and benchmarks). Throws if unavailable.
void select(Isa isa);

}  // namespace stflow::kernels
