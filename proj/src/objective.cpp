#include "phaseret/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <type_traits>

namespace phaseret {

namespace {

// Real weights against Ax work elementwise for real (Gaussian) and complex
// (CDP) measurement images alike.
template <class Vec>
Vec weighted(const Vec& z, const RealSignal& w) {
  return (z.array() * w.array().template cast<typename Vec::Scalar>()).matrix();
}

template <class ModelT>
double f_grad_impl(const ModelT& model, const RealSignal& y,
                   const RealSignal& x, RealSignal* grad) {
  const auto z = model.apply(x);
  const RealSignal s = z.cwiseAbs2() - y;
  const double f = 0.25 * s.squaredNorm() / double(model.m());
  if (grad) *grad = model.adjoint_real(weighted(z, s)) / double(model.m());
  return f;
}

// Hessian of f on real signals. With real rows the per-row curvature
// collapses to (3 (a^T x)^2 - y) a a^T. Complex rows (CDP) keep two terms:
// (|a^* x|^2 - y) Re(a a^*) + 2 (Re(a a^*) x)(Re(a a^*) x)^T, both evaluated
// through a single adjoint.
template <class ModelT>
RealSignal hess_impl(const ModelT& model, const RealSignal& y,
                     const RealSignal& x, const RealSignal& v) {
  const auto zx = model.apply(x);
  const auto zv = model.apply(v);
  using Vec = std::decay_t<decltype(zx)>;
  if constexpr (std::is_same_v<Vec, RealSignal>) {
    const RealSignal c = 3.0 * zx.cwiseAbs2() - y;
    return model.adjoint_real(c.cwiseProduct(zv)) / double(model.m());
  } else {
    const RealSignal s = zx.cwiseAbs2() - y;
    const RealSignal u = (zx.array() * zv.array().conjugate()).real();
    const ComplexSignal w = weighted(zv, s) + 2.0 * weighted(zx, u);
    return model.adjoint_real(w) / double(model.m());
  }
}

}  // namespace

ProblemInstance make_instance(Model model, RealSignal truth) {
  RealSignal y = intensities(model, truth);
  return ProblemInstance{std::move(model), std::move(y), std::move(truth)};
}

ProblemInstance make_instance_with_data(Model model, RealSignal y,
                                        std::optional<RealSignal> truth) {
  if (y.size() != model_m(model))
    throw std::invalid_argument("ProblemInstance: y length != m");
  if ((y.array() < 0.0).any() || !y.allFinite())
    throw std::invalid_argument("ProblemInstance: intensities must be finite and >= 0");
  if (truth) {
    if (truth->size() != model_n(model))
      throw std::invalid_argument("ProblemInstance: truth length != n");
    const RealSignal check = intensities(model, *truth);
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    if ((check - y).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument("ProblemInstance: y inconsistent with truth (noiseless contract)");
  }
  return ProblemInstance{std::move(model), std::move(y), std::move(truth)};
}

double f_value(const ProblemInstance& p, const RealSignal& x) {
  if (x.size() != p.n())
    throw std::invalid_argument("f_value: dimension mismatch");
  return std::visit(
      [&](const auto& m) { return f_grad_impl(m, p.y, x, nullptr); }, p.model);
}

RealSignal f_gradient(const ProblemInstance& p, const RealSignal& x) {
  RealSignal grad;
  f_value_and_gradient(p, x, grad);
  return grad;
}

double f_value_and_gradient(const ProblemInstance& p, const RealSignal& x,
                            RealSignal& grad) {
  if (x.size() != p.n())
    throw std::invalid_argument("f_gradient: dimension mismatch");
  return std::visit(
      [&](const auto& m) { return f_grad_impl(m, p.y, x, &grad); }, p.model);
}

RealSignal hessian_vecprod(const ProblemInstance& p, const RealSignal& x,
                           const RealSignal& v) {
  if (x.size() != p.n() || v.size() != p.n())
    throw std::invalid_argument("hessian_vecprod: dimension mismatch");
  return std::visit([&](const auto& m) { return hess_impl(m, p.y, x, v); },
                    p.model);
}

double Evaluator::value_at(const RealSignal& x) {
  if (x.size() != p_->n())
    throw std::invalid_argument("Evaluator::value_at: dimension mismatch");
  return std::visit(
      [&](const auto& model) {
        auto z = model.apply(x);
        s_ = z.cwiseAbs2() - p_->y;
        const double f = 0.25 * s_.squaredNorm() / double(model.m());
        z_ = std::move(z);
        return f;
      },
      p_->model);
}

RealSignal Evaluator::gradient_of_cached() const {
  return std::visit(
      [&](const auto& model) -> RealSignal {
        using M = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<M, GaussianModel>) {
          return model.adjoint_real(std::get<RealSignal>(z_).cwiseProduct(s_)) /
                 double(model.m());
        } else {
          const auto& z = std::get<ComplexSignal>(z_);
          return model.adjoint_real(weighted(z, s_)) / double(model.m());
        }
      },
      p_->model);
}

SmoothnessInfo relative_smoothness_bound(const ProblemInstance& p) {
  const RealSignal norms = model_row_norms_sq(p.model);
  return SmoothnessInfo{3.0 * norms.squaredNorm() / double(p.m())};
}

double bregman_f(const ProblemInstance& p, const RealSignal& x,
                 const RealSignal& u) {
  RealSignal grad_u;
  const double fu = f_value_and_gradient(p, u, grad_u);
  return f_value(p, x) - fu - grad_u.dot(x - u);
}

double dist_to_truth(const RealSignal& x, const RealSignal& truth) {
  if (x.size() != truth.size())
    throw std::invalid_argument("dist_to_truth: dimension mismatch");
  return std::min((x - truth).norm(), (x + truth).norm());
}

double relative_error(const RealSignal& x, const RealSignal& truth) {
  const double norm_truth = truth.norm();
  if (norm_truth == 0.0)
    throw std::invalid_argument("relative_error: zero truth norm");
  return dist_to_truth(x, truth) / norm_truth;
}

Eigen::MatrixXd expected_hessian_gaussian(const RealSignal& x,
                                          const RealSignal& truth) {
  const Index n = x.size();
  if (truth.size() != n)
    throw std::invalid_argument("expected_hessian_gaussian: dimension mismatch");
  if (n > 64)
    throw std::invalid_argument("expected_hessian_gaussian: dense form limited to n <= 64");
  Eigen::MatrixXd h = 6.0 * x * x.transpose() - 2.0 * truth * truth.transpose();
  h.diagonal().array() += 3.0 * x.squaredNorm() - truth.squaredNorm();
  return h;
}

}  // namespace phaseret
