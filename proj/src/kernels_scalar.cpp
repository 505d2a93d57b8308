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

// Scalar reference kernels. These define the semantics; the AVX2 variants in
// kernels_avx2.cpp must agree with them to tight tolerance.

#include <cstddef>

#include "noisetag/kernels.hpp"

namespace noisetag::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_scalar(double* y, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sumsq_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sumsq_shifted_scalar(const double* x, double shift, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - shift;
    s += d * d;
  }
  return s;
}

void affine_scalar(double* dst, const double* src, double a, double b,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a * src[i] + b;
}

void fma2_acc_scalar(double* dst, const double* s1, double a1,
                     const double* s2, double a2, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a1 * s1[i] + a2 * s2[i] + c;
}

void relu_fwd_scalar(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
}

void relu_bwd_acc_scalar(double* dst, const double* x, const double* g,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dst[i] += g[i];
  }
}

void gemm_nn_scalar(double* c, const double* a, const double* b, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_scalar(double* c, const double* a, const double* b, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      crow[j] += dot_scalar(arow, b + j * k, k);
    }
  }
}

void gemm_tn_scalar(double* c, const double* a, const double* b, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = a + l * m;
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{
      "scalar",
      dot_scalar,
      axpy_scalar,
      add_scalar,
      scale_scalar,
      sum_scalar,
      sumsq_scalar,
      sumsq_shifted_scalar,
      affine_scalar,
      fma2_acc_scalar,
      relu_fwd_scalar,
      relu_bwd_acc_scalar,
      gemm_nn_scalar,
      gemm_nt_scalar,
      gemm_tn_scalar,
  };
  return ops;
}

}  // namespace noisetag::kernels
