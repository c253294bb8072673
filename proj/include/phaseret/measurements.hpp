#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "phaseret/types.hpp"

namespace phaseret {

namespace detail {
class DftPlan;  // FFTW wrapper, defined in measurements.cpp
}

/// Dense i.i.d. standard normal sensing matrix. Desk scale only: the m x n
/// matrix is stored explicitly.
struct GaussianModel {
  Eigen::MatrixXd rows;  ///< m x n, row r is the sensing vector a_r^T
  std::uint64_t seed = 0;

  Index n() const { return rows.cols(); }
  Index m() const { return rows.rows(); }

  RealSignal apply(const RealSignal& x) const;
  RealSignal adjoint_real(const RealSignal& w) const;
  RealSignal row_norms_sq() const;
};

/// Coded diffraction patterns: P ternary masks, measurements are the
/// unnormalized DFT (kernel e^{-i 2 pi j l / n}) of each masked signal,
/// m = n * P. Matrix-free via FFT; 2D signals use the 2D DFT over (h, w)
/// with row-major flattening. Immutable after construction.
struct CdpModel {
  Eigen::MatrixXd masks;  ///< n x P, column p is the pattern d_p in {-1,0,1}
  std::uint64_t seed = 0;
  std::optional<std::pair<Index, Index>> grid_shape;  ///< (h, w), h*w = n
  std::shared_ptr<const detail::DftPlan> plan;

  Index n() const { return masks.rows(); }
  Index num_masks() const { return masks.cols(); }
  Index m() const { return n() * num_masks(); }

  /// Measurement r = p*n + j is the j-th DFT entry of mask p.
  ComplexSignal apply(const RealSignal& x) const;
  /// Re(A* w): per mask, unnormalized inverse kernel e^{+i 2 pi j l / n}
  /// followed by the mask, real part taken last.
  RealSignal adjoint_real(const ComplexSignal& w) const;
  RealSignal row_norms_sq() const;
};

using Model = std::variant<GaussianModel, CdpModel>;

/// Seeded i.i.d. N(0,1) model; entries are generated row-major from the
/// xoshiro256++ stream, so a seed reproduces the matrix bit-for-bit.
GaussianModel make_gaussian(Index n, Index m, std::uint64_t seed);

/// Wraps an explicit sensing matrix (tests and tiny hand-built instances).
GaussianModel gaussian_from_matrix(Eigen::MatrixXd rows);

/// Seeded ternary mask bank: entries -1, 0, +1 with probabilities
/// 1/4, 1/2, 1/4, drawn mask-major from the stream.
CdpModel make_cdp(Index n, Index P, std::uint64_t seed,
                  std::optional<std::pair<Index, Index>> grid_shape = {});

Index model_n(const Model& model);
Index model_m(const Model& model);
RealSignal model_row_norms_sq(const Model& model);

/// y[r] = |(A x)[r]|^2; nonnegative by construction.
RealSignal intensities(const Model& model, const RealSignal& x);

/// JSON descriptor (kind, sizes, seed, grid shape) sufficient to rebuild the
/// model from scratch; experiments are replayable from config alone.
nlohmann::json model_descriptor(const Model& model);
Model model_from_descriptor(const nlohmann::json& doc);

}  // namespace phaseret
