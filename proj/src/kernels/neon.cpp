// AdvSIMD is baseline on AArch64, so no runtime probe is needed there.

#include "kernels_internal.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace promptsens::kernels::neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double l1_norm(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vabsq_f64(vld1q_f64(x + i)));
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += std::fabs(x[i]);
  return out;
}

double sum(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += x[i];
  return out;
}

double sum_sq_dev(const double* x, std::size_t n, double mean) {
  const float64x2_t vm = vdupq_n_f64(mean);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vm);
    acc = vfmaq_f64(acc, d, d);
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    out += d * d;
  }
  return out;
}

}  // namespace promptsens::kernels::neon

namespace promptsens::kernels::detail {
const KernelTable* neon_table() {
  static const KernelTable table{neon::dot, neon::axpy, neon::l1_norm, neon::sum, neon::sum_sq_dev};
  return &table;
}
}  // namespace promptsens::kernels::detail

#else

namespace promptsens::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace promptsens::kernels::detail

#endif
