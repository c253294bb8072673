#include "phaseret/bregman.hpp"

#include <cmath>
#include <stdexcept>

namespace phaseret {

double entropy_value(const RealSignal& x) {
  const double nsq = x.squaredNorm();
  return 0.25 * nsq * nsq + 0.5 * nsq;
}

RealSignal entropy_gradient(const RealSignal& x) {
  return (x.squaredNorm() + 1.0) * x;
}

double bregman_entropy(const RealSignal& x, const RealSignal& u) {
  if (x.size() != u.size())
    throw std::invalid_argument("bregman_entropy: dimension mismatch");
  return entropy_value(x) - entropy_value(u) -
         entropy_gradient(u).dot(x - u);
}

double solve_mirror_cubic(double c) {
  if (!std::isfinite(c) || c < 0.0)
    throw std::invalid_argument("solve_mirror_cubic: c must be finite and >= 0");
  if (c == 0.0) return 1.0;

  const auto residual = [c](double t) { return t * t * t * c + t - 1.0; };

  // phi is strictly increasing on [0,1] with phi(0) = -1 and phi(1) = c >= 0,
  // so Newton from t = 1 with a bisection bracket cannot escape. Iterated to
  // the floating-point fixed point; the residual contract
  // |t^3 c + t - 1| <= 1e-12 max(1, c) follows with a wide margin.
  double lo = 0.0, hi = 1.0;
  double t = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double phi = residual(t);
    if (phi == 0.0) break;
    if (phi > 0.0)
      hi = t;
    else
      lo = t;
    if (hi - lo <= 1e-16 * hi) break;
    const double dphi = 3.0 * c * t * t + 1.0;
    double next = t - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) break;
    t = next;
  }
  return t;
}

MirrorStepResult mirror_step(const RealSignal& x, const RealSignal& grad,
                             double gamma) {
  if (x.size() != grad.size())
    throw std::invalid_argument("mirror_step: dimension mismatch");
  if (!x.allFinite() || !grad.allFinite() || !std::isfinite(gamma))
    throw std::invalid_argument("mirror_step: non-finite input");

  RealSignal p = entropy_gradient(x) - gamma * grad;
  const double p_norm_sq = p.squaredNorm();
  const double t_star = solve_mirror_cubic(p_norm_sq);
  p *= t_star;
  return MirrorStepResult{std::move(p), t_star, p_norm_sq};
}

}  // namespace phaseret
