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

// AVX2+FMA kernel variants. This file is compiled with -mavx2 -mfma and must
// only be reached through the dispatcher, which checks CPU support first.

#include <immintrin.h>

#include <algorithm>
#include <cstddef>

#include "noisetag/kernels.hpp"

namespace noisetag::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(double* y, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void scale_avx2(double* y, double a, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), av));
  }
  for (; i < n; ++i) y[i] *= a;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  if (i + 4 <= n) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sumsq_shifted_avx2(const double* x, double shift, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), sv);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - shift;
    s += d * d;
  }
  return s;
}

void affine_avx2(double* dst, const double* src, double a, double b,
                 std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(src + i), bv));
  }
  for (; i < n; ++i) dst[i] = a * src[i] + b;
}

void fma2_acc_avx2(double* dst, const double* s1, double a1, const double* s2,
                   double a2, double c, std::size_t n) {
  const __m256d a1v = _mm256_set1_pd(a1);
  const __m256d a2v = _mm256_set1_pd(a2);
  const __m256d cv = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_add_pd(_mm256_loadu_pd(dst + i), cv);
    acc = _mm256_fmadd_pd(a1v, _mm256_loadu_pd(s1 + i), acc);
    acc = _mm256_fmadd_pd(a2v, _mm256_loadu_pd(s2 + i), acc);
    _mm256_storeu_pd(dst + i, acc);
  }
  for (; i < n; ++i) dst[i] += a1 * s1[i] + a2 * s2[i] + c;
}

void relu_fwd_avx2(double* dst, const double* src, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(src + i), zero));
  }
  for (; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
}

void relu_bwd_acc_avx2(double* dst, const double* x, const double* g,
                       std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask =
        _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(dst + i,
                     _mm256_add_pd(_mm256_loadu_pd(dst + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dst[i] += g[i];
  }
}

// crow[j] += a0*b0[j] + a1*b1[j] + a2*b2[j] + a3*b3[j]
inline void row_fma4(double* crow, double a0, const double* b0, double a1,
                     const double* b1, double a2, const double* b2, double a3,
                     const double* b3, std::size_t n) {
  const __m256d av0 = _mm256_set1_pd(a0);
  const __m256d av1 = _mm256_set1_pd(a1);
  const __m256d av2 = _mm256_set1_pd(a2);
  const __m256d av3 = _mm256_set1_pd(a3);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d cv = _mm256_loadu_pd(crow + j);
    cv = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b0 + j), cv);
    cv = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b1 + j), cv);
    cv = _mm256_fmadd_pd(av2, _mm256_loadu_pd(b2 + j), cv);
    cv = _mm256_fmadd_pd(av3, _mm256_loadu_pd(b3 + j), cv);
    _mm256_storeu_pd(crow + j, cv);
  }
  for (; j < n; ++j) {
    crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
  }
}

inline void row_fma1(double* crow, double a0, const double* b0,
                     std::size_t n) {
  const __m256d av0 = _mm256_set1_pd(a0);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d cv = _mm256_loadu_pd(crow + j);
    cv = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b0 + j), cv);
    _mm256_storeu_pd(crow + j, cv);
  }
  for (; j < n; ++j) crow[j] += a0 * b0[j];
}

// Wide outputs are processed in column tiles so each C row slice is loaded
// and stored once while the k loop runs over it.
constexpr std::size_t kColTile = 256;

// Two C rows x four k steps with hoisted broadcasts; the inner loop is
// FMA-bound rather than load-bound.
inline void rows2_fma4(double* c0, double* c1, const double* b0,
                       const double* b1, const double* b2, const double* b3,
                       double a00, double a01, double a02, double a03,
                       double a10, double a11, double a12, double a13,
                       std::size_t n) {
  const __m256d v00 = _mm256_set1_pd(a00), v01 = _mm256_set1_pd(a01);
  const __m256d v02 = _mm256_set1_pd(a02), v03 = _mm256_set1_pd(a03);
  const __m256d v10 = _mm256_set1_pd(a10), v11 = _mm256_set1_pd(a11);
  const __m256d v12 = _mm256_set1_pd(a12), v13 = _mm256_set1_pd(a13);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d cv0 = _mm256_loadu_pd(c0 + j);
    __m256d cv1 = _mm256_loadu_pd(c1 + j);
    __m256d bv = _mm256_loadu_pd(b0 + j);
    cv0 = _mm256_fmadd_pd(v00, bv, cv0);
    cv1 = _mm256_fmadd_pd(v10, bv, cv1);
    bv = _mm256_loadu_pd(b1 + j);
    cv0 = _mm256_fmadd_pd(v01, bv, cv0);
    cv1 = _mm256_fmadd_pd(v11, bv, cv1);
    bv = _mm256_loadu_pd(b2 + j);
    cv0 = _mm256_fmadd_pd(v02, bv, cv0);
    cv1 = _mm256_fmadd_pd(v12, bv, cv1);
    bv = _mm256_loadu_pd(b3 + j);
    cv0 = _mm256_fmadd_pd(v03, bv, cv0);
    cv1 = _mm256_fmadd_pd(v13, bv, cv1);
    _mm256_storeu_pd(c0 + j, cv0);
    _mm256_storeu_pd(c1 + j, cv1);
  }
  for (; j < n; ++j) {
    c0[j] += a00 * b0[j] + a01 * b1[j] + a02 * b2[j] + a03 * b3[j];
    c1[j] += a10 * b0[j] + a11 * b1[j] + a12 * b2[j] + a13 * b3[j];
  }
}

void gemm_nn_avx2(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k) {
  for (std::size_t n0 = 0; n0 < n; n0 += kColTile) {
    const std::size_t nt = std::min(kColTile, n - n0);
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      double* c0 = c + i * n + n0;
      double* c1 = c0 + n;
      const double* a0 = a + i * k;
      const double* a1 = a0 + k;
      std::size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        rows2_fma4(c0, c1, b + (l + 0) * n + n0, b + (l + 1) * n + n0,
                   b + (l + 2) * n + n0, b + (l + 3) * n + n0, a0[l],
                   a0[l + 1], a0[l + 2], a0[l + 3], a1[l], a1[l + 1],
                   a1[l + 2], a1[l + 3], nt);
      }
      for (; l < k; ++l) {
        const double* brow = b + l * n + n0;
        row_fma1(c0, a0[l], brow, nt);
        row_fma1(c1, a1[l], brow, nt);
      }
    }
    if (i < m) {
      double* crow = c + i * n + n0;
      const double* arow = a + i * k;
      std::size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        row_fma4(crow, arow[l], b + l * n + n0, arow[l + 1],
                 b + (l + 1) * n + n0, arow[l + 2], b + (l + 2) * n + n0,
                 arow[l + 3], b + (l + 3) * n + n0, nt);
      }
      for (; l < k; ++l) row_fma1(crow, arow[l], b + l * n + n0, nt);
    }
  }
}

void gemm_nt_avx2(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * k;
      const double* b1 = b + (j + 1) * k;
      const double* b2 = b + (j + 2) * k;
      const double* b3 = b + (j + 3) * k;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      __m256d acc2 = _mm256_setzero_pd();
      __m256d acc3 = _mm256_setzero_pd();
      std::size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        const __m256d av = _mm256_loadu_pd(arow + l);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + l), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + l), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + l), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + l), acc3);
      }
      double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (; l < k; ++l) {
        const double av = arow[l];
        s0 += av * b0[l];
        s1 += av * b1[l];
        s2 += av * b2[l];
        s3 += av * b3[l];
      }
      crow[j + 0] += s0;
      crow[j + 1] += s1;
      crow[j + 2] += s2;
      crow[j + 3] += s3;
    }
    for (; j < n; ++j) crow[j] += dot_avx2(arow, b + j * k, k);
  }
}

void gemm_tn_avx2(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t n, std::size_t k) {
  for (std::size_t n0 = 0; n0 < n; n0 += kColTile) {
    const std::size_t nt = std::min(kColTile, n - n0);
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      double* c0 = c + i * n + n0;
      double* c1 = c0 + n;
      std::size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        rows2_fma4(c0, c1, b + (l + 0) * n + n0, b + (l + 1) * n + n0,
                   b + (l + 2) * n + n0, b + (l + 3) * n + n0,
                   a[(l + 0) * m + i], a[(l + 1) * m + i], a[(l + 2) * m + i],
                   a[(l + 3) * m + i], a[(l + 0) * m + i + 1],
                   a[(l + 1) * m + i + 1], a[(l + 2) * m + i + 1],
                   a[(l + 3) * m + i + 1], nt);
      }
      for (; l < k; ++l) {
        const double* brow = b + l * n + n0;
        row_fma1(c0, a[l * m + i], brow, nt);
        row_fma1(c1, a[l * m + i + 1], brow, nt);
      }
    }
    if (i < m) {
      double* crow = c + i * n + n0;
      std::size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        row_fma4(crow, a[(l + 0) * m + i], b + (l + 0) * n + n0,
                 a[(l + 1) * m + i], b + (l + 1) * n + n0,
                 a[(l + 2) * m + i], b + (l + 2) * n + n0,
                 a[(l + 3) * m + i], b + (l + 3) * n + n0, nt);
      }
      for (; l < k; ++l) row_fma1(crow, a[l * m + i], b + l * n + n0, nt);
    }
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{
      "avx2",
      dot_avx2,
      axpy_avx2,
      add_avx2,
      scale_avx2,
      sum_avx2,
      sumsq_avx2,
      sumsq_shifted_avx2,
      affine_avx2,
      fma2_acc_avx2,
      relu_fwd_avx2,
      relu_bwd_acc_avx2,
      gemm_nn_avx2,
      gemm_nt_avx2,
      gemm_tn_avx2,
  };
  return ops;
}

}  // namespace noisetag::kernels
