// Copyright 2026 The uemb Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uemb/kernels.hpp"

#include <algorithm>
#include <vector>

namespace uemb::kernels {

// Wider vector units where the CPU has them. The library is built with
// -ffp-contract=off, so every clone rounds each product and sum separately
// and all of them return the same bits.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define UEMB_KERNEL __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define UEMB_KERNEL
#endif

UEMB_KERNEL
void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

UEMB_KERNEL
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  // Accumulating over a transposed copy of B keeps every element's sum in
  // p order (same bits as a per-element dot product) but vectorizes over j.
  thread_local std::vector<double> bt;
  thread_local std::vector<double> acc;
  bt.resize(k * n);
  acc.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = B[j * k + p];
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    double* crow = C + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
  }
}

UEMB_KERNEL
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = B + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      double* crow = C + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace uemb::kernels
