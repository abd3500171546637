#pragma once

namespace uqfuse {

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with df degrees of freedom (df may be
/// fractional, as from Welch-Satterthwaite).
double student_t_two_sided_p(double t, double df);

/// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);

}  // namespace uqfuse
