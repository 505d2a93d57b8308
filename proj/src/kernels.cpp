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

// Runtime backend selection for the arithmetic kernels.

#include <atomic>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "noisetag/error.hpp"
#include "noisetag/kernels.hpp"

namespace noisetag::kernels {
namespace {

#ifdef __GLIBC__
// Training allocates and frees multi-megabyte activation buffers every
// step. With the default mmap threshold glibc hands those pages back to the
// kernel on free, so every step re-pays page-fault zeroing; keeping large
// blocks on the heap removes that cost.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

std::atomic<const Ops*> g_active{nullptr};

const Ops* select_default() {
#ifndef NOISETAG_NO_AVX2
  if (avx2_available()) return &avx2_ops();
#endif
  return &scalar_ops();
}

}  // namespace

bool avx2_available() {
#ifdef NOISETAG_NO_AVX2
  return false;
#else
#if defined(__x86_64__) || defined(__i386__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
#endif
}

#ifdef NOISETAG_NO_AVX2
const Ops& avx2_ops() {
  throw UsageError("avx2 backend not compiled into this binary");
}
#endif

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (ops == nullptr) {
    ops = select_default();
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

void force_backend(const std::string& name) {
  if (name == "auto") {
    g_active.store(select_default(), std::memory_order_release);
  } else if (name == "scalar") {
    g_active.store(&scalar_ops(), std::memory_order_release);
  } else if (name == "avx2") {
    if (!avx2_available()) {
      throw UsageError("avx2 backend requested but not supported on this CPU");
    }
    g_active.store(&avx2_ops(), std::memory_order_release);
  } else {
    throw UsageError("unknown kernel backend: " + name);
  }
}

std::string active_backend_name() { return active().name; }

}  // namespace noisetag::kernels
