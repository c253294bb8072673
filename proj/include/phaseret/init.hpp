#pragma once

#include <cstdint>

#include "phaseret/objective.hpp"

namespace phaseret {

struct SpectralConfig {
  int power_iters_max = 200;
  double power_tol = 1e-8;  ///< sign-aligned rotation between iterates
  std::uint64_t seed = 0;   ///< power-method start vector
};

struct SpectralResult {
  RealSignal x0;      ///< lambda * v, v the dominant eigenvector estimate
  double lambda;      ///< scale: lambda^2 = n sum_r y[r] / sum_r ||a_r||^2
  int iterations;
  bool converged;     ///< false on rotation-test timeout (near-tied spectrum)
};

/// Spectral initialization: power iteration on the matrix-free operator
/// v -> (1/m) Re(A* (y .* A v)), output rescaled to ||x0|| = lambda. On
/// non-convergence the best iterate is returned with converged = false;
/// both signs of x0 are equally valid.
SpectralResult spectral_init(const ProblemInstance& p,
                             const SpectralConfig& cfg = {});

/// Entries i.i.d. uniform on [-scale, scale] from the seeded stream.
RealSignal random_init(Index n, double scale, std::uint64_t seed);

/// Spectral-quality radius eta1(rho) = sqrt(2 - 2 sqrt(1 - rho)) + rho / 2,
/// strictly increasing on (0, 1). Throws outside (0, 1).
double eta1(double rho);

}  // namespace phaseret
