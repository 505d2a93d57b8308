// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <string>

namespace noisetag::kernels {

// Hot arithmetic loops (dot products, AXPY, small GEMMs) behind a dispatch
// table. kernels_scalar.cpp holds the reference implementations; on x86 an
// AVX2+FMA variant is compiled as well and selected at runtime when the CPU
// supports it. The two backends are equivalence-tested against each other.
//
// GEMM variants are row-major and accumulate into C (C += op(A) * op(B)):
//   gemm_nn: A is m x k, B is k x n
//   gemm_nt: A is m x k, B is n x k (B used transposed)
//   gemm_tn: A is k x m (A used transposed), B is k x n
struct Ops {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double* y, double a, const double* x, std::size_t n);  // y += a*x
  void (*add)(double* y, const double* x, std::size_t n);             // y += x
  void (*scale)(double* y, double a, std::size_t n);                  // y *= a
  double (*sum)(const double* x, std::size_t n);
  double (*sumsq)(const double* x, std::size_t n);
  double (*sumsq_shifted)(const double* x, double shift, std::size_t n);
  void (*affine)(double* dst, const double* src, double a, double b,
                 std::size_t n);  // dst = a*src + b
  void (*fma2_acc)(double* dst, const double* s1, double a1, const double* s2,
                   double a2, double c,
                   std::size_t n);  // dst += a1*s1 + a2*s2 + c
  void (*relu_fwd)(double* dst, const double* src, std::size_t n);
  void (*relu_bwd_acc)(double* dst, const double* x, const double* g,
                       std::size_t n);  // dst += g where x > 0
  void (*gemm_nn)(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k);
  void (*gemm_nt)(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k);
  void (*gemm_tn)(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k);
};

const Ops& scalar_ops();

/// True when this binary carries the AVX2 variant and the CPU supports
/// AVX2+FMA.
bool avx2_available();

/// The AVX2 dispatch table. Only valid to call through when
/// avx2_available() is true.
const Ops& avx2_ops();

/// The backend in use: AVX2 when available, scalar otherwise.
const Ops& active();

/// Force a backend by name ("auto", "scalar", "avx2"). Used by tests and the
/// CLI --backend flag. Throws if the requested backend cannot run here.
void force_backend(const std::string& name);

std::string active_backend_name();

}  // namespace noisetag::kernels
