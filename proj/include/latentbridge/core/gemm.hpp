// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace lb {

// C[M,N] = A[M,K] * B[K,N] (+= when accumulate). ikj order vectorizes well on
// the inner j loop; every output element is produced by one sequential
// accumulation, so results are bit-reproducible.
template <class S>
void gemm(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        S* ci = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = S(0);
        const S* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const S aip = ai[p];
            if (aip == S(0)) continue;
            const S* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C[M,N] = A^T[M,K] * B[K,N] where A is stored [K,M].
template <class S>
void gemm_at(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        S* ci = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = S(0);
        for (int p = 0; p < k; ++p) {
            const S aip = a[static_cast<size_t>(p) * m + i];
            if (aip == S(0)) continue;
            const S* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C[M,N] = A[M,K] * B^T[K,N] where B is stored [N,K].
template <class S>
void gemm_bt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        const S* ai = a + static_cast<size_t>(i) * k;
        S* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* bj = b + static_cast<size_t>(j) * k;
            S acc = S(0);
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

// Same contract as gemm_bt but transposes B into scratch first so the inner
// loop is an elementwise accumulation the compiler can vectorize. Pays off
// when k is large (conv weight gradients reduce over every output pixel).
template <class S>
void gemm_bt_large(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate,
                   std::vector<S>& scratch) {
    scratch.assign(static_cast<size_t>(k) * n, S(0));
    for (int j = 0; j < n; ++j) {
        const S* bj = b + static_cast<size_t>(j) * k;
        for (int p = 0; p < k; ++p) scratch[static_cast<size_t>(p) * n + j] = bj[p];
    }
    gemm(a, scratch.data(), c, m, k, n, accumulate);
}

}  // namespace lb
