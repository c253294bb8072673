#include "phaseret/measurements.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "phaseret/rng.hpp"

namespace phaseret {

namespace detail {

namespace {
// FFTW plan creation/destruction mutates global planner state and is not
// thread-safe; executions through the new-array interface are.
std::mutex& planner_mutex() {
  static std::mutex mtx;
  return mtx;
}
}  // namespace

class DftPlan {
 public:
  // 1D plan when h == 1, otherwise a 2D plan over (h, w) row-major.
  // FFTW_UNALIGNED lets us execute on any caller buffer.
  DftPlan(Index h, Index w) : size_(h * w) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    std::vector<std::complex<double>> scratch(size_);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (h == 1 || w == 1) {
      forward_ = fftw_plan_dft_1d(int(size_), buf, buf, FFTW_FORWARD, flags);
      backward_ = fftw_plan_dft_1d(int(size_), buf, buf, FFTW_BACKWARD, flags);
    } else {
      forward_ = fftw_plan_dft_2d(int(h), int(w), buf, buf, FFTW_FORWARD, flags);
      backward_ = fftw_plan_dft_2d(int(h), int(w), buf, buf, FFTW_BACKWARD, flags);
    }
    if (!forward_ || !backward_) throw std::runtime_error("FFTW planning failed");
  }

  ~DftPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  DftPlan(const DftPlan&) = delete;
  DftPlan& operator=(const DftPlan&) = delete;

  // In-place unnormalized transforms, kernel e^{-i 2 pi j l / n} forward.
  void forward(std::complex<double>* buf) const {
    auto* c = reinterpret_cast<fftw_complex*>(buf);
    fftw_execute_dft(forward_, c, c);
  }
  void backward(std::complex<double>* buf) const {
    auto* c = reinterpret_cast<fftw_complex*>(buf);
    fftw_execute_dft(backward_, c, c);
  }

 private:
  Index size_;
  fftw_plan forward_;
  fftw_plan backward_;
};

}  // namespace detail

RealSignal GaussianModel::apply(const RealSignal& x) const {
  if (x.size() != n())
    throw std::invalid_argument("GaussianModel::apply: dimension mismatch");
  return rows * x;
}

RealSignal GaussianModel::adjoint_real(const RealSignal& w) const {
  if (w.size() != m())
    throw std::invalid_argument("GaussianModel::adjoint_real: dimension mismatch");
  return rows.transpose() * w;
}

RealSignal GaussianModel::row_norms_sq() const {
  return rows.rowwise().squaredNorm();
}

ComplexSignal CdpModel::apply(const RealSignal& x) const {
  if (x.size() != n())
    throw std::invalid_argument("CdpModel::apply: dimension mismatch");
  ComplexSignal out(m());
  ComplexSignal buf(n());
  for (Index p = 0; p < num_masks(); ++p) {
    buf.real() = masks.col(p).cwiseProduct(x);
    buf.imag().setZero();
    plan->forward(buf.data());
    out.segment(p * n(), n()) = buf;
  }
  return out;
}

RealSignal CdpModel::adjoint_real(const ComplexSignal& w) const {
  if (w.size() != m())
    throw std::invalid_argument("CdpModel::adjoint_real: dimension mismatch");
  RealSignal out = RealSignal::Zero(n());
  ComplexSignal buf(n());
  for (Index p = 0; p < num_masks(); ++p) {
    buf = w.segment(p * n(), n());
    plan->backward(buf.data());
    out += masks.col(p).cwiseProduct(buf.real());
  }
  return out;
}

RealSignal CdpModel::row_norms_sq() const {
  // Row (j, p) of F D_p has squared norm sum_l d_p[l]^2, independent of j.
  RealSignal out(m());
  for (Index p = 0; p < num_masks(); ++p)
    out.segment(p * n(), n()).setConstant(masks.col(p).squaredNorm());
  return out;
}

GaussianModel make_gaussian(Index n, Index m, std::uint64_t seed) {
  if (n < 1 || m < 1)
    throw std::invalid_argument("make_gaussian: sizes must be positive");
  GaussianModel model;
  model.seed = seed;
  model.rows.resize(m, n);
  Xoshiro256pp rng(seed);
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < n; ++c) model.rows(r, c) = rng.normal();
  return model;
}

GaussianModel gaussian_from_matrix(Eigen::MatrixXd rows) {
  if (rows.rows() < 1 || rows.cols() < 1)
    throw std::invalid_argument("gaussian_from_matrix: empty matrix");
  GaussianModel model;
  model.rows = std::move(rows);
  return model;
}

CdpModel make_cdp(Index n, Index P, std::uint64_t seed,
                  std::optional<std::pair<Index, Index>> grid_shape) {
  if (n < 1 || P < 1)
    throw std::invalid_argument("make_cdp: sizes must be positive");
  if (grid_shape && grid_shape->first * grid_shape->second != n)
    throw std::invalid_argument("make_cdp: grid shape does not match n");
  CdpModel model;
  model.seed = seed;
  model.grid_shape = grid_shape;
  model.masks.resize(n, P);
  Xoshiro256pp rng(seed);
  for (Index p = 0; p < P; ++p) {
    for (Index l = 0; l < n; ++l) {
      const double u = rng.uniform01();
      model.masks(l, p) = u < 0.25 ? -1.0 : (u < 0.75 ? 0.0 : 1.0);
    }
  }
  const Index h = grid_shape ? grid_shape->first : Index(1);
  const Index w = grid_shape ? grid_shape->second : n;
  model.plan = std::make_shared<detail::DftPlan>(h, w);
  return model;
}

Index model_n(const Model& model) {
  return std::visit([](const auto& m) { return m.n(); }, model);
}

Index model_m(const Model& model) {
  return std::visit([](const auto& m) { return m.m(); }, model);
}

RealSignal model_row_norms_sq(const Model& model) {
  return std::visit([](const auto& m) { return m.row_norms_sq(); }, model);
}

RealSignal intensities(const Model& model, const RealSignal& x) {
  return std::visit(
      [&x](const auto& m) -> RealSignal { return m.apply(x).cwiseAbs2(); },
      model);
}

nlohmann::json model_descriptor(const Model& model) {
  nlohmann::json doc;
  if (const auto* g = std::get_if<GaussianModel>(&model)) {
    doc["kind"] = "gaussian";
    doc["n"] = g->n();
    doc["m"] = g->m();
    doc["seed"] = g->seed;
  } else {
    const auto& c = std::get<CdpModel>(model);
    doc["kind"] = "cdp";
    doc["n"] = c.n();
    doc["P"] = c.num_masks();
    doc["seed"] = c.seed;
    if (c.grid_shape)
      doc["grid_shape"] = {c.grid_shape->first, c.grid_shape->second};
  }
  return doc;
}

Model model_from_descriptor(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "gaussian") {
    return make_gaussian(doc.at("n").get<Index>(), doc.at("m").get<Index>(),
                         doc.at("seed").get<std::uint64_t>());
  }
  if (kind == "cdp") {
    std::optional<std::pair<Index, Index>> grid;
    if (doc.contains("grid_shape")) {
      grid = std::make_pair(doc["grid_shape"][0].get<Index>(),
                            doc["grid_shape"][1].get<Index>());
    }
    return make_cdp(doc.at("n").get<Index>(), doc.at("P").get<Index>(),
                    doc.at("seed").get<std::uint64_t>(), grid);
  }
  throw std::invalid_argument("model_from_descriptor: unknown kind " + kind);
}

}  // namespace phaseret
