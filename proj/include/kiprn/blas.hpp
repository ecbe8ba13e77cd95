#pragma once

#include <cstdint>

namespace kiprn::blas {

// Row-major C[M,N] = alpha * op(A) * op(B) + beta * C.
// op is transpose when trans_a / trans_b is set; A and B are dense row-major
// with leading dimensions equal to their row widths.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// Applies the KIPRN_THREADS env cap (0 or unset = library default). Called
// once lazily before the first gemm.
void apply_thread_cap();

}  // namespace kiprn::blas
