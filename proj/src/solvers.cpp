#include "phaseret/solvers.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "phaseret/bregman.hpp"

namespace phaseret {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double rel_err_or_nan(const ProblemInstance& p, const RealSignal& x) {
  return p.truth ? relative_error(x, *p.truth) : kNaN;
}

// Slack for the descent and backtracking verifications; scaled to the
// objective so it stays meaningful both far from and near the solution.
double check_slack(double f_scale) { return 1e-12 * std::max(1.0, f_scale); }

struct Candidate {
  RealSignal x;
  double f = 0.0;
  double d_f = 0.0;    // D_f(x, x_k)
  double d_psi = 0.0;  // D_psi(x, x_k)
};

Candidate make_candidate(Evaluator& eval, const RealSignal& x, double fx,
                         const RealSignal& gx, double gamma) {
  Candidate cand;
  cand.x = mirror_step(x, gx, gamma).next_point;
  cand.f = eval.value_at(cand.x);
  cand.d_f = cand.f - fx - gx.dot(cand.x - x);
  cand.d_psi = bregman_entropy(cand.x, x);
  return cand;
}

bool stalled_step(const RealSignal& x_new, const RealSignal& x_old) {
  return (x_new - x_old).norm() <= 1e-13 * (1.0 + x_old.norm());
}

}  // namespace

std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged_grad: return "converged_grad";
    case SolverStatus::converged_error: return "converged_error";
    case SolverStatus::max_iters: return "max_iters";
    case SolverStatus::stalled: return "stalled";
  }
  return "unknown";
}

double SolverTrace::final_rel_err() const {
  return rows.empty() ? kNaN : rows.back().rel_err;
}

SolverTrace mirror_descent(const ProblemInstance& p, const RealSignal& x0,
                           const SolverParams& params) {
  if (x0.size() != p.n())
    throw std::invalid_argument("mirror_descent: x0 length != n");
  if (!(params.kappa > 0.0 && params.kappa < 1.0) || params.xi < 1.0)
    throw std::invalid_argument("mirror_descent: kappa in (0,1), xi >= 1 required");
  if (params.step_mode == StepMode::constant && !(params.gamma > 0.0))
    throw std::invalid_argument("mirror_descent: constant mode needs gamma > 0");

  const bool backtracking = params.step_mode == StepMode::backtracking;
  double L = params.L0 ? *params.L0
                       : relative_smoothness_bound(p).L_global;
  if (!backtracking) L = (1.0 - params.kappa) / params.gamma;
  const double L_floor = params.L_floor ? *params.L_floor : 1e-8 * L;

  SolverTrace trace;
  Evaluator eval(p);
  RealSignal x = x0;
  double fx = eval.value_at(x);
  RealSignal gx = eval.gradient_of_cached();

  const auto record = [&](int iter, double gamma, int backtracks) {
    trace.rows.push_back(TraceRow{iter, fx, gx.norm(), L, gamma, backtracks,
                                  rel_err_or_nan(p, x)});
    if (params.record_iterates) trace.iterates.push_back(x);
  };
  record(0, (1.0 - params.kappa) / L, 0);

  for (int k = 0;; ++k) {
    if (gx.norm() <= params.grad_tol) {
      trace.status = SolverStatus::converged_grad;
      break;
    }
    if (p.truth && trace.rows.back().rel_err < params.success_tol) {
      trace.status = SolverStatus::converged_error;
      break;
    }
    // Divergence guard: a constant step larger than the instance's local
    // relative-smoothness bound can blow the quartic up; stop well before
    // ||p||^2 = ||grad psi - gamma grad f||^2 can overflow.
    if (!std::isfinite(fx) || !gx.allFinite() || x.squaredNorm() > 1e60) {
      trace.diverged = true;
      trace.status = SolverStatus::stalled;
      break;
    }
    if (k >= params.max_iters) {
      trace.status = SolverStatus::max_iters;
      break;
    }

    double gamma = params.gamma;
    Candidate cand;
    int backtracks = 0;
    bool cand_is_cached = true;  // evaluator cache matches cand.x

    if (!backtracking) {
      cand = make_candidate(eval, x, fx, gx, gamma);
    } else if (params.xi == 1.0) {
      gamma = (1.0 - params.kappa) / L;
      cand = make_candidate(eval, x, fx, gx, gamma);
    } else {
      // Optimistically shrink L_k until the relative-smoothness test breaks,
      // then back off one xi multiply; the previous (passing) candidate is
      // reused instead of being recomputed.
      Candidate prev;
      bool have_prev = false;
      bool violated = false;
      while (true) {
        L /= params.xi;
        gamma = (1.0 - params.kappa) / L;
        cand = make_candidate(eval, x, fx, gx, gamma);
        ++backtracks;
        if (cand.d_f > L * cand.d_psi) {
          violated = true;
          break;
        }
        if (L <= L_floor || backtracks >= params.inner_max) break;
        prev = std::move(cand);
        have_prev = true;
      }
      if (violated) {
        L *= params.xi;
        gamma = (1.0 - params.kappa) / L;
        if (have_prev) {
          cand = std::move(prev);
          cand_is_cached = false;
        } else {
          cand = make_candidate(eval, x, fx, gx, gamma);
        }
        // A warm-started L_k can be too small for the new pair even after
        // the back-off; grow until the accepted pair passes the test, which
        // the global constant guarantees to terminate.
        int grows = 0;
        while (cand.d_f > L * cand.d_psi + check_slack(fx) &&
               grows < params.inner_max) {
          L *= params.xi;
          gamma = (1.0 - params.kappa) / L;
          cand = make_candidate(eval, x, fx, gx, gamma);
          cand_is_cached = true;
          ++grows;
          ++backtracks;
        }
      }
      // else: safeguard exit with a candidate that already passes.
    }

    const double L_accepted = (1.0 - params.kappa) / gamma;
    if (cand.d_f > L_accepted * cand.d_psi + check_slack(fx))
      ++trace.backtrack_violations;
    if (cand.f > fx + check_slack(fx)) ++trace.descent_violations;

    if (!std::isfinite(cand.f)) {
      trace.diverged = true;
      trace.status = SolverStatus::stalled;
      break;
    }
    const bool stall = stalled_step(cand.x, x);

    x = std::move(cand.x);
    fx = cand.f;
    if (!cand_is_cached) eval.value_at(x);
    gx = eval.gradient_of_cached();
    record(k + 1, gamma, backtracks);

    if (stall) {
      trace.status = SolverStatus::stalled;
      break;
    }
  }

  trace.x_final = std::move(x);
  return trace;
}

SolverTrace wirtinger_flow(const ProblemInstance& p, const RealSignal& x0,
                           const SolverParams& params,
                           const WfSchedule& schedule) {
  if (x0.size() != p.n())
    throw std::invalid_argument("wirtinger_flow: x0 length != n");
  const double x0_norm_sq = x0.squaredNorm();
  if (x0_norm_sq == 0.0)
    throw std::invalid_argument("wirtinger_flow: x0 must be nonzero");

  SolverTrace trace;
  RealSignal x = x0;
  RealSignal gx;
  double fx = f_value_and_gradient(p, x, gx);
  const double f_initial = fx;

  const auto record = [&](int iter, double step) {
    trace.rows.push_back(
        TraceRow{iter, fx, gx.norm(), 0.0, step, 0, rel_err_or_nan(p, x)});
    if (params.record_iterates) trace.iterates.push_back(x);
  };
  record(0, 0.0);

  for (int k = 0;; ++k) {
    if (gx.norm() <= params.grad_tol) {
      trace.status = SolverStatus::converged_grad;
      break;
    }
    if (p.truth && trace.rows.back().rel_err < params.success_tol) {
      trace.status = SolverStatus::converged_error;
      break;
    }
    if (!std::isfinite(fx) || fx > 1e6 * std::max(f_initial, 1e-300)) {
      trace.diverged = true;
      trace.status = SolverStatus::stalled;
      break;
    }
    if (k >= params.max_iters) {
      trace.status = SolverStatus::max_iters;
      break;
    }

    // Ramp indexed from 1: mu_0 would be a zero step.
    const double mu = std::min(1.0 - std::exp(-double(k + 1) / schedule.k0),
                               schedule.mu_max);
    const double step = mu / x0_norm_sq;
    const RealSignal x_new = x - step * gx;
    const bool stall = stalled_step(x_new, x);

    x = x_new;
    fx = f_value_and_gradient(p, x, gx);
    record(k + 1, step);

    if (stall) {
      trace.status = SolverStatus::stalled;
      break;
    }
  }

  trace.x_final = std::move(x);
  return trace;
}

namespace {

// g(x) = (1/m) sum |y - |Ax|^2| and its Polyak subgradient
// v = (2/m) Re(A* (sign(|Ax|^2 - y) .* Ax)), with sign(0) = 0.
template <class ModelT>
double polyak_value_and_subgrad(const ModelT& model, const RealSignal& y,
                                const RealSignal& x, RealSignal& subgrad) {
  const auto z = model.apply(x);
  const RealSignal s = z.cwiseAbs2() - y;
  const RealSignal sign = s.array().sign();
  using Scalar = typename std::decay_t<decltype(z)>::Scalar;
  subgrad = 2.0 *
            model.adjoint_real(
                (z.array() * sign.array().template cast<Scalar>()).matrix()) /
            double(model.m());
  return s.lpNorm<1>() / double(model.m());
}

}  // namespace

SolverTrace polyak_subgradient(const ProblemInstance& p, const RealSignal& x0,
                               const SolverParams& params) {
  if (x0.size() != p.n())
    throw std::invalid_argument("polyak_subgradient: x0 length != n");

  SolverTrace trace;
  RealSignal x = x0;
  RealSignal v;
  double g = std::visit(
      [&](const auto& m) { return polyak_value_and_subgrad(m, p.y, x, v); },
      p.model);

  const auto record = [&](int iter, double step) {
    trace.rows.push_back(
        TraceRow{iter, g, v.norm(), 0.0, step, 0, rel_err_or_nan(p, x)});
    if (params.record_iterates) trace.iterates.push_back(x);
  };
  record(0, 0.0);

  for (int k = 0;; ++k) {
    if (g <= params.grad_tol) {
      trace.status = SolverStatus::converged_grad;
      break;
    }
    if (p.truth && trace.rows.back().rel_err < params.success_tol) {
      trace.status = SolverStatus::converged_error;
      break;
    }
    const double v_norm_sq = v.squaredNorm();
    if (v_norm_sq == 0.0 || !std::isfinite(g)) {
      // Zero subgradient away from the minimum: no usable direction.
      trace.diverged = !std::isfinite(g);
      trace.status = SolverStatus::stalled;
      break;
    }
    if (k >= params.max_iters) {
      trace.status = SolverStatus::max_iters;
      break;
    }

    const double step = g / v_norm_sq;  // Polyak step, min g = 0
    const RealSignal x_new = x - step * v;
    const bool stall = stalled_step(x_new, x);

    x = x_new;
    g = std::visit(
        [&](const auto& m) { return polyak_value_and_subgrad(m, p.y, x, v); },
        p.model);
    record(k + 1, step);

    if (stall) {
      trace.status = SolverStatus::stalled;
      break;
    }
  }

  trace.x_final = std::move(x);
  return trace;
}

RatePrediction predict_rate_gaussian(double kappa, double lambda,
                                     double varrho, double norm_truth) {
  if (!(kappa > 0.0 && kappa < 1.0))
    throw std::invalid_argument("predict_rate: kappa must lie in (0,1)");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("predict_rate: lambda must lie in (0,1)");
  if (!(norm_truth > 0.0))
    throw std::invalid_argument("predict_rate: norm_truth must be positive");
  const double t_sq = norm_truth * norm_truth;
  const double lo = std::min(t_sq, 1.0);
  const double hi = std::max(t_sq / 3.0, 1.0);
  if (!(varrho >= 0.0 && varrho < lambda * lo / (2.0 * hi)))
    throw std::invalid_argument("predict_rate: varrho out of admissible range");

  RatePrediction pred;
  pred.source = "gaussian";
  pred.kappa = kappa;
  pred.norm_truth = norm_truth;
  pred.lambda = lambda;
  pred.varrho = varrho;
  pred.nu = (1.0 - kappa) * (lambda * lo - varrho * hi) / (3.0 + varrho * hi);
  return pred;
}

RatePrediction predict_rate_cdp(double kappa, double delta, double norm_truth,
                                std::optional<double> L_i) {
  if (!(kappa > 0.0 && kappa < 1.0))
    throw std::invalid_argument("predict_rate: kappa must lie in (0,1)");
  if (!(norm_truth > 0.0))
    throw std::invalid_argument("predict_rate: norm_truth must be positive");
  const double lo = std::min(norm_truth * norm_truth, 1.0);
  if (!(delta >= 0.0 && delta < lo / 2.0))
    throw std::invalid_argument("predict_rate: delta out of admissible range");
  const double L = L_i ? *L_i : 2.0 * (1.0 + delta) * (1.0 + delta);
  if (!(L > 0.0)) throw std::invalid_argument("predict_rate: L_i must be positive");

  RatePrediction pred;
  pred.source = "cdp";
  pred.kappa = kappa;
  pred.norm_truth = norm_truth;
  pred.delta = delta;
  pred.L_i = L;
  pred.nu = (1.0 - kappa) * (lo - 2.0 * delta) / ((1.0 + delta) * L);
  return pred;
}

double theta_bound(double norm_truth, double rho) {
  return 6.0 * norm_truth * norm_truth + 6.0 * rho * rho + 1.0;
}

DescentCheckReport verify_descent_inequality(const ProblemInstance& p,
                                             const SolverTrace& trace,
                                             double kappa) {
  if (!p.truth)
    throw std::invalid_argument("verify_descent_inequality: truth required");
  if (trace.iterates.size() != trace.rows.size() || trace.iterates.empty())
    throw std::invalid_argument(
        "verify_descent_inequality: trace must be recorded with record_iterates");

  const RealSignal& t = *p.truth;
  DescentCheckReport report;
  for (std::size_t k = 0; k + 1 < trace.iterates.size(); ++k) {
    const RealSignal& xk = trace.iterates[k];
    const RealSignal& xk1 = trace.iterates[k + 1];
    const double gamma = trace.rows[k + 1].gamma;
    const double lhs =
        bregman_entropy(t, xk1) + gamma * trace.rows[k + 1].f;
    const double rhs = bregman_entropy(t, xk) -
                       kappa * bregman_entropy(xk1, xk) -
                       gamma * bregman_f(p, t, xk);
    const double slack =
        1e-10 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
    const bool ok = lhs <= rhs + slack;
    report.holds.push_back(ok);
    if (!ok) ++report.violations;
  }
  return report;
}

void write_trace_csv(const SolverTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err\n";
  char buf[256];
  for (const auto& row : trace.rows) {
    const int len = std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d,",
                                  row.iter, row.f, row.grad_norm, row.L,
                                  row.gamma, row.backtracks);
    out.write(buf, len);
    if (std::isfinite(row.rel_err)) {
      const int l2 = std::snprintf(buf, sizeof buf, "%.17g", row.rel_err);
      out.write(buf, l2);
    }
    out.put('\n');
  }
}

void write_status_json(const SolverTrace& trace, const std::string& path,
                       const std::string& extra_json) {
  nlohmann::json doc;
  doc["status"] = to_string(trace.status);
  doc["iterations"] = trace.rows.empty() ? 0 : trace.rows.back().iter;
  doc["final_f"] = trace.final_f();
  doc["final_grad_norm"] = trace.rows.empty() ? 0.0 : trace.rows.back().grad_norm;
  if (std::isfinite(trace.final_rel_err()))
    doc["final_rel_err"] = trace.final_rel_err();
  else
    doc["final_rel_err"] = nullptr;
  doc["descent_violations"] = trace.descent_violations;
  doc["backtrack_violations"] = trace.backtrack_violations;
  doc["diverged"] = trace.diverged;
  doc["spectral_warning"] = trace.spectral_warning;
  doc.update(nlohmann::json::parse(extra_json));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_status_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace phaseret
