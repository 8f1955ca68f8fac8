#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense kernels behind the tensor ops. Every kernel exists twice: a serial
// reference under kernels::serial and an OpenMP version under kernels::par.
// The public entry points dispatch on the runtime flag. Both paths compute
// per-output-element sums in the same order, so results are bit-identical
// regardless of thread count; parallelism is only ever over independent
// output elements.

namespace sfd::kernels {

void set_parallel(bool on);
bool parallel_enabled();
int thread_count();

namespace detail {

// C(m x n) = A(m x k) * B(k x n), row-major. ikj loop: the j loop writes
// independent elements and vectorizes under strict FP semantics.
template <class T>
inline void gemm_row(int i, int n, int k, const T* a, const T* b, T* c, bool acc) {
    T* crow = c + static_cast<int64_t>(i) * n;
    if (!acc) std::memset(crow, 0, sizeof(T) * static_cast<size_t>(n));
    const T* arow = a + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
        const T aik = arow[kk];
        const T* brow = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
}

// C(m x n) = A(k x m)^T * B(k x n)
template <class T>
inline void gemm_tn_row(int i, int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    T* crow = c + static_cast<int64_t>(i) * n;
    if (!acc) std::memset(crow, 0, sizeof(T) * static_cast<size_t>(n));
    for (int kk = 0; kk < k; ++kk) {
        const T aik = a[static_cast<int64_t>(kk) * m + i];
        const T* brow = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
}

// writes bt(k x n) = b(n x k)^T; row i of bt gathers column i of b
template <class T>
inline void transpose_row(int i, int n, int k, const T* b, T* bt) {
    T* row = bt + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] = b[static_cast<int64_t>(j) * k + i];
}

}  // namespace detail

namespace serial {

template <class T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    for (int i = 0; i < m; ++i) detail::gemm_row(i, n, k, a, b, c, acc);
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    for (int i = 0; i < m; ++i) detail::gemm_tn_row(i, m, n, k, a, b, c, acc);
}

// C(m x n) = A(m x k) * B(n x k)^T. B is transposed into scratch once so the
// multiply runs the same vector-friendly ikj inner loop as gemm; the copies
// do not change any summation order.
template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    std::vector<T> bt(static_cast<size_t>(k) * n);
    for (int i = 0; i < k; ++i) detail::transpose_row(i, n, k, b, bt.data());
    for (int i = 0; i < m; ++i) detail::gemm_row(i, n, k, a, bt.data(), c, acc);
}

}  // namespace serial

namespace par {

template <class T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) detail::gemm_row(i, n, k, a, b, c, acc);
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) detail::gemm_tn_row(i, m, n, k, a, b, c, acc);
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    std::vector<T> bt(static_cast<size_t>(k) * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < k; ++i) detail::transpose_row(i, n, k, b, bt.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) detail::gemm_row(i, n, k, a, bt.data(), c, acc);
}

}  // namespace par

template <class T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    if (parallel_enabled())
        par::gemm(m, n, k, a, b, c, acc);
    else
        serial::gemm(m, n, k, a, b, c, acc);
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    if (parallel_enabled())
        par::gemm_tn(m, n, k, a, b, c, acc);
    else
        serial::gemm_tn(m, n, k, a, b, c, acc);
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool acc = false) {
    if (parallel_enabled())
        par::gemm_nt(m, n, k, a, b, c, acc);
    else
        serial::gemm_nt(m, n, k, a, b, c, acc);
}

// Deterministic elementwise parallelism: each index is computed exactly once,
// by exactly one thread, with no cross-index reduction.
template <class F>
void parallel_for(int64_t n, F&& fn) {
#ifdef _OPENMP
    if (parallel_enabled() && n >= 4096) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace sfd::kernels
