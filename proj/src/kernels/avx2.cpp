// Compiled with -mavx2 -mfma on x86-64; reached only through table_for(),
// which checks the CPU first.

#include "kernels_internal.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace promptsens::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

inline __m256d abs_pd(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double l1_norm(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
  double out = hsum(acc);
  for (; i < n; ++i) out += std::fabs(x[i]);
  return out;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double out = hsum(acc);
  for (; i < n; ++i) out += x[i];
  return out;
}

double sum_sq_dev(const double* x, std::size_t n, double mean) {
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vm);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    out += d * d;
  }
  return out;
}

}  // namespace promptsens::kernels::avx2

namespace promptsens::kernels::detail {
const KernelTable* avx2_table() {
  static const KernelTable table{avx2::dot, avx2::axpy, avx2::l1_norm, avx2::sum, avx2::sum_sq_dev};
  return &table;
}
}  // namespace promptsens::kernels::detail

#else

namespace promptsens::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace promptsens::kernels::detail

#endif
