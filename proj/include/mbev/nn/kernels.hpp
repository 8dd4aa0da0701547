// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace mbev::nn {

// Row-major accumulate kernels. Loop orders chosen so the innermost loop is
// contiguous and autovectorizes; no blocking, matrices here are small.

// y[m,n] += a[m,k] * b[k,n]
template <class S>
void mm_nn_acc(const S* a, const S* b, S* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    S* yr = y + size_t(i) * n;
    const S* ar = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const S av = ar[p];
      const S* br = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) yr[j] += av * br[j];
    }
  }
}

// y[m,n] += a[m,k] * b[n,k]^T
template <class S>
void mm_nt_acc(const S* a, const S* b, S* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* ar = a + size_t(i) * k;
    S* yr = y + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* br = b + size_t(j) * k;
      S acc = 0;
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      yr[j] += acc;
    }
  }
}

// y[k,n] += a[m,k]^T * b[m,n]
template <class S>
void mm_tn_acc(const S* a, const S* b, S* y, int m, int k, int n) {
  for (int p = 0; p < m; ++p) {
    const S* ar = a + size_t(p) * k;
    const S* br = b + size_t(p) * n;
    for (int i = 0; i < k; ++i) {
      const S av = ar[i];
      S* yr = y + size_t(i) * n;
      for (int j = 0; j < n; ++j) yr[j] += av * br[j];
    }
  }
}

}  // namespace mbev::nn
