#pragma once

#include <optional>
#include <string>
#include <vector>

#include "phaseret/objective.hpp"

namespace phaseret {

enum class StepMode { backtracking, constant };

enum class SolverStatus {
  converged_grad,   ///< ||grad f|| <= grad_tol
  converged_error,  ///< relative error below success_tol (truth known)
  max_iters,
  stalled,          ///< step collapsed, zero subgradient, or divergence
};

std::string to_string(SolverStatus s);

struct SolverParams {
  double kappa = 0.01;             ///< step safety margin in (0, 1)
  double xi = 2.0;                 ///< backtracking ratio >= 1
  std::optional<double> L0;        ///< default: global relative smoothness bound
  StepMode step_mode = StepMode::backtracking;
  double gamma = 0.0;              ///< step size in constant mode
  int max_iters = 600;
  double grad_tol = 1e-12;         ///< near-exact criticality stop
  double success_tol = 1e-5;       ///< relative-error stop when truth known
  std::optional<double> L_floor;   ///< default 1e-8 * L0
  int inner_max = 64;              ///< hard cap on inner loop moves
  bool record_iterates = false;    ///< keep x_k for a posteriori checks
};

struct TraceRow {
  int iter;
  double f;
  double grad_norm;
  double L;          ///< (1 - kappa) / gamma; 0 where not meaningful (wf, polyak)
  double gamma;
  int backtracks;
  double rel_err;    ///< NaN when truth unknown
};

struct SolverTrace {
  std::vector<TraceRow> rows;  ///< rows[0] is the initial point
  SolverStatus status = SolverStatus::max_iters;
  bool diverged = false;       ///< iterates blew up or f became non-finite;
                               ///< reported with status = stalled
  bool spectral_warning = false;  ///< set by callers that seed from a
                                  ///< non-converged spectral start

  // Runtime verification counters; both must stay at zero for mirror descent.
  int descent_violations = 0;    ///< f increased beyond 1e-12 relative
  int backtrack_violations = 0;  ///< accepted step failed D_f <= L_k D_psi

  RealSignal x_final;
  std::vector<RealSignal> iterates;  ///< filled when record_iterates

  double final_f() const { return rows.empty() ? 0.0 : rows.back().f; }
  double final_rel_err() const;
};

/// Mirror descent with backtracking. Each outer iteration optimistically
/// divides L_k by xi until the relative-smoothness test
/// D_f(x+, x) <= L_k D_psi(x+, x) breaks, backs off one xi multiply and takes
/// the step; L_k warm-starts across iterations. If the warm-started L_k is
/// itself too small at the new pair, it keeps growing by xi until the test
/// passes, so every accepted step satisfies the test. Constant mode skips the
/// search and uses gamma as given (L_k = (1 - kappa) / gamma in the trace).
SolverTrace mirror_descent(const ProblemInstance& p, const RealSignal& x0,
                           const SolverParams& params);

struct WfSchedule {
  double k0 = 330.0;  ///< mu_k = min(1 - exp(-k / k0), mu_max), ramp from k = 1
  double mu_max = 0.4;
};

/// Wirtinger-flow baseline: x+ = x - (mu_k / ||x0||^2) grad f(x), sharing
/// f_gradient with mirror descent. Declares a stall when f exceeds 1e6 times
/// its initial value.
SolverTrace wirtinger_flow(const ProblemInstance& p, const RealSignal& x0,
                           const SolverParams& params,
                           const WfSchedule& schedule = {});

/// Polyak subgradient baseline on g(x) = (1/m) sum_r |y[r] - |a_r^* x|^2|,
/// step x+ = x - (g(x) / ||v||^2) v with the sign-0-at-ties subgradient
/// selection. Uses min g = 0 (noiseless). The trace's f column records g.
SolverTrace polyak_subgradient(const ProblemInstance& p, const RealSignal& x0,
                               const SolverParams& params);

struct RatePrediction {
  double nu;                   ///< predicted linear factor: dist^2 shrinks by (1 - nu)
  std::string source;          ///< "gaussian" or "cdp"
  double kappa, norm_truth;
  double lambda = 0.0, varrho = 0.0;  ///< Gaussian inputs
  double delta = 0.0, L_i = 0.0;      ///< CDP inputs
};

/// nu = (1-kappa)(lambda min(||t||^2,1) - varrho max(||t||^2/3,1))
///      / (3 + varrho max(||t||^2/3,1)). Throws outside the admissible range
/// varrho < lambda min(||t||^2,1) / (2 max(||t||^2/3,1)).
RatePrediction predict_rate_gaussian(double kappa, double lambda,
                                     double varrho, double norm_truth);

/// nu_i = (1-kappa)(min(||t||^2,1) - 2 delta) / ((1+delta) L_i); L_i
/// defaults to the local estimate 2(1+delta)^2. Requires
/// delta < min(||t||^2,1) / 2.
RatePrediction predict_rate_cdp(double kappa, double delta, double norm_truth,
                                std::optional<double> L_i = {});

/// sup bound on ||hess psi|| over a ball of radius rho around the truth:
/// 6 ||truth||^2 + 6 rho^2 + 1.
double theta_bound(double norm_truth, double rho);

struct DescentCheckReport {
  std::vector<bool> holds;  ///< one entry per accepted step
  int violations = 0;
  bool all_hold() const { return violations == 0; }
};

/// A posteriori check of the per-step bound at u = truth:
///   D_psi(t, x_{k+1}) + gamma_k f(x_{k+1})
///     <= D_psi(t, x_k) - kappa D_psi(x_{k+1}, x_k) - gamma_k D_f(t, x_k).
/// Requires a trace recorded with record_iterates and a known truth.
DescentCheckReport verify_descent_inequality(const ProblemInstance& p,
                                             const SolverTrace& trace,
                                             double kappa);

/// Trace CSV: header iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err; one row
/// per iteration, rel_err empty when truth is unknown.
void write_trace_csv(const SolverTrace& trace, const std::string& path);

/// Status sidecar JSON (status, final values, violation counters) merged with
/// caller-provided extra fields.
void write_status_json(const SolverTrace& trace, const std::string& path,
                       const std::string& extra_json = "{}");

}  // namespace phaseret
