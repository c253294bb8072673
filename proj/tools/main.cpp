// Command-line front end: single-run recovery, phase-transition diagrams,
// 2D surface recovery, rate-fit diagnostics and the invariant selftest.

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "phaseret/experiments.hpp"

namespace {

using phaseret::ExperimentConfig;

// Exit codes: 0 success, 1 config error, 2 runtime failure, 3 selftest fail.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSelftest = 3;

void add_common_flags(CLI::App* cmd, ExperimentConfig& cfg,
                      std::string& config_path) {
  cmd->add_option("--config", config_path,
                  "JSON config file; its fields override the flags");
  cmd->add_option("--model", cfg.model_kind, "gaussian | cdp");
  cmd->add_option("--n", cfg.n, "signal dimension");
  cmd->add_option("--m", cfg.m, "measurement count (0: derive from rule)");
  cmd->add_option("--m-mult", cfg.m_mult, "m rule multiplier");
  cmd->add_option("--m-logpow", cfg.m_logpow, "m rule log power");
  cmd->add_option("--p-masks", cfg.P, "CDP mask count (0: derive from rule)");
  cmd->add_option("--p-mult", cfg.P_mult, "P rule multiplier");
  cmd->add_option("--p-logpow", cfg.P_logpow, "P rule log power");
  cmd->add_option("--log-base", cfg.log_base, "log base for size rules: e|2|10");
  cmd->add_option("--algorithm", cfg.algorithm, "md | wf | polyak");
  cmd->add_option("--init", cfg.init, "random | spectral");
  cmd->add_option("--step-mode", cfg.step_mode, "backtracking | constant");
  cmd->add_option("--gamma", cfg.gamma, "constant step size");
  cmd->add_option("--kappa", cfg.kappa, "step safety margin in (0,1)");
  cmd->add_option("--xi", cfg.xi, "backtracking ratio >= 1");
  cmd->add_option("--max-iters", cfg.max_iters, "iteration budget");
  cmd->add_option("--success-tol", cfg.success_tol, "relative-error success threshold");
  cmd->add_option("--grad-tol", cfg.grad_tol, "gradient-norm stop");
  cmd->add_option("--init-scale", cfg.init_scale,
                  "uniform init half-width (0: auto sqrt(3/n)*||truth||)");
  cmd->add_option("--seed", cfg.master_seed, "master seed");
  cmd->add_option("--trials", cfg.trials, "Monte Carlo trials per cell");
  cmd->add_option("--jobs", cfg.jobs, "parallel trial workers (0: all cores)");
  cmd->add_option("--out", cfg.out_dir, "output directory");
}

ExperimentConfig finalize_config(const ExperimentConfig& flags,
                                 const std::string& config_path) {
  if (config_path.empty()) return flags;
  std::ifstream in(config_path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + config_path);
  nlohmann::json doc = nlohmann::json::parse(in);
  // Start from the flag values, then let the file override field by field.
  nlohmann::json merged = phaseret::config_to_json(flags);
  merged.update(doc);
  return phaseret::config_from_json(merged);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase retrieval via mirror descent: solvers and experiments"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path;

  auto* recover = app.add_subcommand(
      "recover", "single signal recovery; writes trace.csv + status.json");
  add_common_flags(recover, cfg, config_path);

  auto* diagram = app.add_subcommand(
      "phase-diagram", "Monte Carlo success rates over an (n, m) grid");
  add_common_flags(diagram, cfg, config_path);
  diagram->add_option("--n-list", cfg.n_list, "diagram n values");
  diagram->add_option("--m-list", cfg.m_list, "diagram m (or P) values");
  diagram->add_option("--m-over-n", cfg.m_over_n, "diagram m/n ratios");

  auto* surface = app.add_subcommand(
      "surface2d", "2D surface recovery from CDP measurements");
  add_common_flags(surface, cfg, config_path);
  surface->add_option("--height", cfg.grid_h, "grid height");
  surface->add_option("--width", cfg.grid_w, "grid width");
  surface->add_option("--smoothing", cfg.smoothing,
                      "truth field smoothing length in pixels (0: white noise)");

  auto* ratefit = app.add_subcommand(
      "rate-fit", "fit the linear tail of a trace against the predicted rate");
  std::string trace_path;
  phaseret::RateFitParams fit_params;
  ratefit->add_option("trace", trace_path, "trace CSV with a rel_err column")
      ->required();
  ratefit->add_option("--kind", fit_params.kind, "gaussian | cdp");
  ratefit->add_option("--kappa", fit_params.kappa, "kappa used in the run");
  ratefit->add_option("--lambda", fit_params.lambda, "gaussian rate parameter");
  ratefit->add_option("--varrho", fit_params.varrho, "gaussian concentration");
  ratefit->add_option("--delta", fit_params.delta, "cdp concentration");
  ratefit->add_option("--L-i", fit_params.L_i,
                      "cdp local smoothness (0: default estimate)");
  ratefit->add_option("--norm-truth", fit_params.norm_truth, "||truth||");
  ratefit->add_option("--out", fit_params.out_path, "also write report here");

  auto* selftest =
      app.add_subcommand("selftest", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (recover->parsed())
      return phaseret::cmd_recover(finalize_config(cfg, config_path));
    if (diagram->parsed())
      return phaseret::cmd_phase_diagram(finalize_config(cfg, config_path));
    if (surface->parsed()) {
      ExperimentConfig scfg = finalize_config(cfg, config_path);
      scfg.model_kind = "cdp";
      return phaseret::cmd_surface2d(scfg);
    }
    if (ratefit->parsed()) return phaseret::cmd_rate_fit(trace_path, fit_params);
    if (selftest->parsed())
      return phaseret::run_selftest() ? kExitOk : kExitSelftest;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
