#include "kiprn/blas.hpp"

#include <cblas.h>

#include <cstdlib>
#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace kiprn::blas {

namespace {
std::once_flag g_cap_once;
}

void apply_thread_cap() {
  std::call_once(g_cap_once, [] {
    if (const char* env = std::getenv("KIPRN_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) openblas_set_num_threads(n);
    }
  });
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  apply_thread_cap();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  apply_thread_cap();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
}

}  // namespace kiprn::blas
