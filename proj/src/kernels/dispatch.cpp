#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "promptsens/error.hpp"

namespace promptsens::kernels {
namespace {

const KernelTable kScalarTable{scalar::dot, scalar::axpy, scalar::l1_norm, scalar::sum, scalar::sum_sq_dev};

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Selection {
  const KernelTable* table;
  Isa isa;
};

Selection select() {
  const char* env = std::getenv("PROMPTSENS_KERNELS");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return {&kScalarTable, Isa::scalar};
  if (want == "avx2" || want == "auto") {
    if (const KernelTable* t = table_for(Isa::avx2)) return {t, Isa::avx2};
  }
  if (want == "neon" || want == "auto") {
    if (const KernelTable* t = table_for(Isa::neon)) return {t, Isa::neon};
  }
  return {&kScalarTable, Isa::scalar};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw InvalidArgument("kernels: length mismatch");
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &kScalarTable;
    case Isa::avx2: return cpu_has_avx2() ? detail::avx2_table() : nullptr;
    case Isa::neon: return detail::neon_table();
  }
  return nullptr;
}

const KernelTable& active() { return *selection().table; }
Isa active_isa() { return selection().isa; }

double dot(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same(x.size(), y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

double l1_norm(std::span<const double> x) { return active().l1_norm(x.data(), x.size()); }
double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
double sum_sq_dev(std::span<const double> x, double mean) {
  return active().sum_sq_dev(x.data(), x.size(), mean);
}

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  check_same(w.size(), rows * cols);
  check_same(x.size(), cols);
  check_same(y.size(), rows);
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) y[r] = k.dot(w.data() + r * cols, x.data(), cols);
}

void matvec_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                  std::span<const double> x, std::span<double> y) {
  check_same(w.size(), rows * cols);
  check_same(x.size(), rows);
  check_same(y.size(), cols);
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) k.axpy(x[r], w.data() + r * cols, y.data(), cols);
}

}  // namespace promptsens::kernels
