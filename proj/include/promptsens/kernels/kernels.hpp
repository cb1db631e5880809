#pragma once

// Numeric inner loops shared by the tiny reference LM, saliency and the
// dispersion statistics. Every kernel has a scalar reference; vector variants
// (AVX2+FMA on x86-64, NEON on AArch64) are picked once at runtime and must
// agree with the scalar path up to floating-point reassociation.

#include <cstddef>
#include <span>
#include <string_view>

namespace promptsens::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*l1_norm)(const double* x, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // sum_i (x[i] - mean)^2
  double (*sum_sq_dev)(const double* x, std::size_t n, double mean);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double l1_norm(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double sum_sq_dev(const double* x, std::size_t n, double mean);
}  // namespace scalar

// Returns nullptr when the ISA is not compiled in or not supported by the CPU.
const KernelTable* table_for(Isa isa);

// Best supported table. PROMPTSENS_KERNELS=scalar|avx2|neon overrides the
// choice (falls back to scalar when the requested ISA is unavailable).
const KernelTable& active();
Isa active_isa();

// Convenience wrappers over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double l1_norm(std::span<const double> x);
double sum(std::span<const double> x);
double sum_sq_dev(std::span<const double> x, double mean);

// y = W x for row-major W (rows x cols).
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
// y += W^T x for row-major W (rows x cols); x has `rows` entries.
void matvec_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                  std::span<const double> x, std::span<double> y);

}  // namespace promptsens::kernels
