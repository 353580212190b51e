#pragma once

namespace biasaudit::special {

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

/// Survival function P(F >= f) of the F distribution.
double f_survival(double f, double df1, double df2);

/// ln(n!) for non-negative integer n.
double log_factorial(unsigned long n);

}  // namespace biasaudit::special
