#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "phaseret/init.hpp"
#include "phaseret/solvers.hpp"

namespace phaseret {

/// Everything needed to replay an experiment: model family and sizes,
/// algorithm, initialization, step policy and the master seed. Serializes
/// losslessly to JSON; the CLI mirrors these fields as flags.
struct ExperimentConfig {
  std::string model_kind = "gaussian";  // gaussian | cdp
  Index n = 128;
  Index m = 0;            ///< 0: derive as ceil(m_mult * n * log^m_logpow(n))
  double m_mult = 2.0;
  int m_logpow = 3;
  Index P = 0;            ///< 0: derive as ceil(P_mult * log^P_logpow(n))
  double P_mult = 7.0;
  int P_logpow = 3;
  std::string log_base = "e";  // e | 2 | 10
  Index grid_h = 0, grid_w = 0;  ///< both > 0 selects the 2D CDP setup

  std::string algorithm = "md";  // md | wf | polyak
  std::string init = "random";   // random | spectral
  std::string step_mode = "backtracking";  // backtracking | constant
  double gamma = 0.0;
  double kappa = 0.01;
  double xi = 2.0;
  int max_iters = 600;
  double success_tol = 1e-5;
  double grad_tol = 1e-12;
  double init_scale = 0.0;  ///< 0: auto sqrt(3/n) * ||truth||
  double smoothing = 0.0;   ///< surface2d field smoothing length (pixels)

  std::uint64_t master_seed = 1;
  int trials = 100;
  int jobs = 0;  ///< 0: hardware concurrency
  std::string out_dir = "out";

  std::vector<Index> n_list;      ///< phase-diagram n grid
  std::vector<Index> m_list;      ///< absolute m (or P) grid
  std::vector<double> m_over_n;   ///< alternative: ratios, m = ratio * n

  Index resolved_m() const;
  Index resolved_P() const;
  SolverParams solver_params() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// One seeded trial: model + truth + init + solve. Used by the single-run
/// commands, the phase diagrams and the acceptance experiments.
struct TrialOutcome {
  SolverTrace trace;
  RealSignal truth;
  RealSignal x0;
  bool success = false;            ///< final relative error < success_tol
  bool spectral_converged = true;  ///< power-method rotation test status
};

/// Runs one trial of the configured experiment at (n, m-or-P). Sub-streams
/// for the model, truth, initializer and power method derive from trial_seed.
/// record_iterates keeps the iterate sequence for a posteriori checks.
TrialOutcome run_trial(const ExperimentConfig& cfg, Index n, Index m_or_P,
                       std::uint64_t trial_seed, bool record_iterates = false);

/// Seed for trial `trial` of diagram cell `cell` under a master seed.
std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t cell,
                         std::uint64_t trial);

/// Runs fn(0..count-1) across `jobs` worker threads (serial when jobs <= 1).
/// Results must be written to pre-sized, index-disjoint storage.
void parallel_for(int jobs, int count, const std::function<void(int)>& fn);

/// Least-squares fit of log(rel_err^2) over the largest trailing segment
/// with R^2 >= 0.99 (at least 5 points, negative slope).
struct RateFitResult {
  bool has_segment = false;
  int start = 0;            ///< first iteration of the fitted segment
  int length = 0;
  double slope = 0.0;       ///< per-iteration change of log(rel_err^2)
  double factor = 1.0;      ///< exp(slope): per-iteration factor of rel_err^2
  double r2 = 0.0;
};
RateFitResult fit_rate(const std::vector<double>& rel_err);

int cmd_recover(const ExperimentConfig& cfg);
int cmd_phase_diagram(const ExperimentConfig& cfg);
int cmd_surface2d(const ExperimentConfig& cfg);

struct RateFitParams {
  std::string kind = "gaussian";  // gaussian | cdp
  double kappa = 0.01;
  double lambda = 0.9;   // gaussian
  double varrho = 0.1;   // gaussian
  double delta = 0.1;    // cdp
  double L_i = 0.0;      // cdp; 0: default local estimate
  double norm_truth = 1.0;
  std::string out_path;  // empty: stdout only
};
int cmd_rate_fit(const std::string& trace_csv, const RateFitParams& params);

/// Built-in invariant battery (adjoint identities, oracle agreements, descent
/// checks on a small instance). Returns true when everything holds.
bool run_selftest(bool verbose = true);

}  // namespace phaseret
