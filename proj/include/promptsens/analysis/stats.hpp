#pragma once

#include <cstddef>
#include <span>

namespace promptsens {

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-sided
  std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided t-test p-value on n - 2
/// degrees of freedom. |r| = 1 yields the smallest positive double as p.
/// Throws EstimationError on length mismatch, n < 3 or a constant series.
PearsonResult pearson(std::span<const double> xs, std::span<const double> ys);

// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace promptsens
