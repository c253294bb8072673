#include "phaseret/init.hpp"

#include <cmath>
#include <stdexcept>

#include "phaseret/rng.hpp"

namespace phaseret {

SpectralResult spectral_init(const ProblemInstance& p,
                             const SpectralConfig& cfg) {
  if (cfg.power_iters_max < 1 || cfg.power_tol <= 0.0)
    throw std::invalid_argument("spectral_init: bad config");

  const Index n = p.n();
  const double m = double(p.m());
  const RealSignal norms = model_row_norms_sq(p.model);
  const double norms_sum = norms.sum();
  const double lambda_sq = norms_sum > 0.0 ? double(n) * p.y.sum() / norms_sum : 0.0;
  const double lambda = std::sqrt(std::max(0.0, lambda_sq));

  const auto matvec = [&](const RealSignal& v) -> RealSignal {
    return std::visit(
        [&](const auto& model) -> RealSignal {
          const auto zv = model.apply(v);
          return model.adjoint_real(
                     (zv.array() *
                      p.y.array().template cast<typename std::decay_t<decltype(zv)>::Scalar>())
                         .matrix()) /
                 m;
        },
        p.model);
  };

  Xoshiro256pp rng(cfg.seed);
  RealSignal v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();

  bool converged = false;
  int iters = 0;
  for (; iters < cfg.power_iters_max; ++iters) {
    RealSignal w = matvec(v);
    const double wn = w.norm();
    if (wn == 0.0) break;  // Y = 0 (all-zero data); any direction is "top"
    w /= wn;
    const double rotation = std::min((w - v).norm(), (w + v).norm());
    v = w;
    if (rotation <= cfg.power_tol) {
      converged = true;
      ++iters;
      break;
    }
  }

  return SpectralResult{lambda * v, lambda, iters, converged};
}

RealSignal random_init(Index n, double scale, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_init: n must be >= 1");
  Xoshiro256pp rng(seed);
  RealSignal x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.uniform(-scale, scale);
  return x;
}

double eta1(double rho) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("eta1: rho must lie in (0, 1)");
  return std::sqrt(2.0 - 2.0 * std::sqrt(1.0 - rho)) + 0.5 * rho;
}

}  // namespace phaseret
