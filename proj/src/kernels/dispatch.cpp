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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "stflow/kernels.hpp"

namespace stflow::kernels {

#ifndef STFLOW_HAVE_AVX2_KERNELS
// Non-x86 builds carry no AVX2 translation unit; keep the symbols linkable.
namespace avx2 {
void minmax_row(double a, const double* b, double* c, std::size_t n) { scalar::minmax_row(a, b, c, n); }
void soft_row(double alpha, const double* beta, double* s, std::size_t n) { scalar::soft_row(alpha, beta, s, n); }
void axpy_row(double a, const double* b, double* c, std::size_t n) { scalar::axpy_row(a, b, c, n); }
void exp_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  scalar::exp_row(x, out, n, shift, scale);
}
void log_row(const double* x, double* out, std::size_t n, double shift, double scale) {
  scalar::log_row(x, out, n, shift, scale);
}
}  // namespace avx2
#endif

namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::minmax_row, &scalar::soft_row, &scalar::axpy_row,
                              &scalar::exp_row, &scalar::log_row};
constexpr KernelTable kAvx2{Isa::avx2, &avx2::minmax_row, &avx2::soft_row, &avx2::axpy_row,
                            &avx2::exp_row, &avx2::log_row};

const KernelTable* initial_table() {
  if (const char* env = std::getenv("STFLOW_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && avx2_available()) return &kAvx2;
  }
  return avx2_available() ? &kAvx2 : &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(STFLOW_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok;
#else
  return false;
#endif
}

const KernelTable& table(Isa isa) {
  if (isa == Isa::scalar) return kScalar;
  if (!avx2_available()) throw std::runtime_error("AVX2 kernels unavailable on this host");
  return kAvx2;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_relaxed); }

}  // namespace stflow::kernels
