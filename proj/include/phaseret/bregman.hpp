#pragma once

#include "phaseret/types.hpp"

namespace phaseret {

// Quartic-plus-quadratic entropy kernel and its Bregman machinery. The kernel
// is fixed: psi(x) = ||x||^4/4 + ||x||^2/2, which is 1-strongly convex and
// makes the phase-retrieval objective relatively smooth.

/// psi(x) = ||x||^4/4 + ||x||^2/2. Nonnegative, zero only at x = 0.
double entropy_value(const RealSignal& x);

/// grad psi(x) = (||x||^2 + 1) x.
RealSignal entropy_gradient(const RealSignal& x);

/// Bregman divergence D_psi(x, u) = psi(x) - psi(u) - <grad psi(u), x - u>.
/// Computed from the definition, not a simplified polynomial, so identity
/// tests against it are non-circular. Throws on dimension mismatch.
double bregman_entropy(const RealSignal& x, const RealSignal& u);

/// Unique real positive root of t^3 c + t - 1 = 0 for c >= 0. The root lies
/// in (0, 1]; residual satisfies |t^3 c + t - 1| <= 1e-12 * max(1, c).
/// Safeguarded Newton on [0, 1] starting from t = 1. Throws for c < 0 or
/// non-finite c.
double solve_mirror_cubic(double c);

struct MirrorStepResult {
  RealSignal next_point;  ///< t* p, where p = grad psi(x) - gamma * grad
  double t_star;          ///< root in (0, 1]
  double p_norm_sq;       ///< ||p||^2
};

/// One mirror step: inverts grad psi at p = grad psi(x) - gamma * grad in
/// closed form via the cubic root. Satisfies grad psi(next) = p up to the
/// cubic solve tolerance; gamma = 0 returns x itself.
MirrorStepResult mirror_step(const RealSignal& x, const RealSignal& grad,
                             double gamma);

}  // namespace phaseret
