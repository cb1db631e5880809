#include "promptsens/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptsens/error.hpp"

namespace promptsens {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete beta: x must lie in [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw InvalidArgument("t distribution: df must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw EstimationError("pearson: series lengths differ");
  const std::size_t n = xs.size();
  if (n < 3) throw EstimationError("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw EstimationError("pearson: a series has zero variance");
  PearsonResult res;
  res.n = n;
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::abs(res.r) == 1.0) {
    res.p = std::numeric_limits<double>::denorm_min();
  } else {
    const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    res.p = std::max(student_t_two_sided_p(t, df), std::numeric_limits<double>::denorm_min());
  }
  return res;
}

}  // namespace promptsens
