#pragma once

#include <optional>

#include "phaseret/measurements.hpp"
#include "phaseret/types.hpp"

namespace phaseret {

/// Measurement model plus intensity data; the optional ground truth is for
/// metrics only and must be consistent with y (noiseless contract).
struct ProblemInstance {
  Model model;
  RealSignal y;
  std::optional<RealSignal> truth;

  Index n() const { return model_n(model); }
  Index m() const { return model_m(model); }
};

/// Builds the noiseless instance y = |A truth|^2.
ProblemInstance make_instance(Model model, RealSignal truth);

/// Validating constructor for externally supplied data; checks sizes and,
/// when truth is present, that intensities(model, truth) reproduces y.
ProblemInstance make_instance_with_data(Model model, RealSignal y,
                                        std::optional<RealSignal> truth);

/// f(x) = (1/4m) sum_r (y[r] - |(Ax)[r]|^2)^2.
double f_value(const ProblemInstance& p, const RealSignal& x);

/// grad f(x) = (1/m) Re(A* ((|Ax|^2 - y) .* Ax)), matrix-free so Gaussian
/// and CDP share the implementation.
RealSignal f_gradient(const ProblemInstance& p, const RealSignal& x);

/// f and gradient from a single operator application pair.
double f_value_and_gradient(const ProblemInstance& p, const RealSignal& x,
                            RealSignal& grad);

/// Hessian action on real signals: (1/m) Re(A* ((3|Ax|^2 - y) .* Av)) for
/// real rows; complex (CDP) rows carry the extra rank-one curvature term
/// 2 (Re(a a^*) x)(Re(a a^*) x)^T per row. Validated against gradient finite
/// differences for both models.
RealSignal hessian_vecprod(const ProblemInstance& p, const RealSignal& x,
                           const RealSignal& v);

/// Caches the measurement image of the last evaluated point so a solver can
/// finish the gradient with a single adjoint application instead of paying a
/// second forward pass.
class Evaluator {
 public:
  explicit Evaluator(const ProblemInstance& p) : p_(&p) {}

  /// f(x); one forward application, caches Ax and the residual weights.
  double value_at(const RealSignal& x);

  /// Gradient at the point last passed to value_at; one adjoint application.
  RealSignal gradient_of_cached() const;

 private:
  const ProblemInstance* p_;
  std::variant<RealSignal, ComplexSignal> z_;
  RealSignal s_;  // |Ax|^2 - y
};

struct SmoothnessInfo {
  double L_global;  ///< (3/m) sum_r ||a_r||^4
  double gamma_for(double kappa) const { return (1.0 - kappa) / L_global; }
};

/// Global relative-smoothness constant of f with respect to the entropy
/// kernel: L = (3/m) sum_r ||a_r||^4, measurement-independent.
SmoothnessInfo relative_smoothness_bound(const ProblemInstance& p);

/// D_f(x, u) = f(x) - f(u) - <grad f(u), x - u>. May be negative (f is
/// non-convex); bounded above by L_global * D_psi(x, u).
double bregman_f(const ProblemInstance& p, const RealSignal& x,
                 const RealSignal& u);

/// min(||x - truth||, ||x + truth||): distance to the sign pair.
double dist_to_truth(const RealSignal& x, const RealSignal& truth);

/// dist_to_truth / ||truth||; throws if truth is zero.
double relative_error(const RealSignal& x, const RealSignal& truth);

/// E[grad^2 f(x)] = 3(2 x x^T + ||x||^2 I) - 2 truth truth^T - ||truth||^2 I
/// under the Gaussian model. Dense, test-surface only; guarded to n <= 64.
Eigen::MatrixXd expected_hessian_gaussian(const RealSignal& x,
                                          const RealSignal& truth);

}  // namespace phaseret
