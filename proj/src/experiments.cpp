#include "phaseret/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "phaseret/bregman.hpp"
#include "phaseret/rng.hpp"

namespace phaseret {

namespace {

namespace fs = std::filesystem;

double log_in_base(double x, const std::string& base) {
  if (base == "e") return std::log(x);
  if (base == "2") return std::log2(x);
  if (base == "10") return std::log10(x);
  throw std::invalid_argument("log_base must be one of e, 2, 10");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_rate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Seed sub-stream tags within one trial.
constexpr std::uint64_t kStreamModel = 1;
constexpr std::uint64_t kStreamTruth = 2;
constexpr std::uint64_t kStreamInit = 3;
constexpr std::uint64_t kStreamPower = 4;

RealSignal unit_gaussian_direction(Index n, std::uint64_t seed) {
  Xoshiro256pp rng(seed);
  RealSignal x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.normal();
  const double norm = x.norm();
  return norm > 0.0 ? RealSignal(x / norm) : x;
}

}  // namespace

Index ExperimentConfig::resolved_m() const {
  if (m > 0) return m;
  const double logn = log_in_base(double(n), log_base);
  return Index(std::ceil(m_mult * double(n) * std::pow(logn, m_logpow)));
}

Index ExperimentConfig::resolved_P() const {
  if (P > 0) return P;
  const double logn = log_in_base(double(n), log_base);
  return Index(std::ceil(P_mult * std::pow(logn, P_logpow)));
}

SolverParams ExperimentConfig::solver_params() const {
  SolverParams params;
  params.kappa = kappa;
  params.xi = xi;
  params.max_iters = max_iters;
  params.success_tol = success_tol;
  params.grad_tol = grad_tol;
  if (step_mode == "constant") {
    params.step_mode = StepMode::constant;
    params.gamma = gamma;
  } else if (step_mode == "backtracking") {
    params.step_mode = StepMode::backtracking;
  } else {
    throw std::invalid_argument("step_mode must be backtracking or constant");
  }
  return params;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["model_kind"] = c.model_kind;
  j["n"] = c.n;
  j["m"] = c.m;
  j["m_mult"] = c.m_mult;
  j["m_logpow"] = c.m_logpow;
  j["P"] = c.P;
  j["P_mult"] = c.P_mult;
  j["P_logpow"] = c.P_logpow;
  j["log_base"] = c.log_base;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["algorithm"] = c.algorithm;
  j["init"] = c.init;
  j["step_mode"] = c.step_mode;
  j["gamma"] = c.gamma;
  j["kappa"] = c.kappa;
  j["xi"] = c.xi;
  j["max_iters"] = c.max_iters;
  j["success_tol"] = c.success_tol;
  j["grad_tol"] = c.grad_tol;
  j["init_scale"] = c.init_scale;
  j["smoothing"] = c.smoothing;
  j["master_seed"] = c.master_seed;
  j["trials"] = c.trials;
  j["jobs"] = c.jobs;
  j["out_dir"] = c.out_dir;
  j["n_list"] = c.n_list;
  j["m_list"] = c.m_list;
  j["m_over_n"] = c.m_over_n;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("model_kind", c.model_kind);
  get("n", c.n);
  get("m", c.m);
  get("m_mult", c.m_mult);
  get("m_logpow", c.m_logpow);
  get("P", c.P);
  get("P_mult", c.P_mult);
  get("P_logpow", c.P_logpow);
  get("log_base", c.log_base);
  get("grid_h", c.grid_h);
  get("grid_w", c.grid_w);
  get("algorithm", c.algorithm);
  get("init", c.init);
  get("step_mode", c.step_mode);
  get("gamma", c.gamma);
  get("kappa", c.kappa);
  get("xi", c.xi);
  get("max_iters", c.max_iters);
  get("success_tol", c.success_tol);
  get("grad_tol", c.grad_tol);
  get("init_scale", c.init_scale);
  get("smoothing", c.smoothing);
  get("master_seed", c.master_seed);
  get("trials", c.trials);
  get("jobs", c.jobs);
  get("out_dir", c.out_dir);
  get("n_list", c.n_list);
  get("m_list", c.m_list);
  get("m_over_n", c.m_over_n);
  return c;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t cell,
                         std::uint64_t trial) {
  return derive_seed(master_seed, {cell, trial});
}

TrialOutcome run_trial(const ExperimentConfig& cfg, Index n, Index m_or_P,
                       std::uint64_t trial_seed_value, bool record_iterates) {
  const bool is_cdp = cfg.model_kind == "cdp";
  const bool is_grid = cfg.grid_h > 0 && cfg.grid_w > 0;
  if (is_grid && cfg.grid_h * cfg.grid_w != n)
    throw std::invalid_argument("run_trial: grid shape does not match n");

  const std::uint64_t model_seed = derive_seed(trial_seed_value, {kStreamModel});
  const std::uint64_t truth_seed = derive_seed(trial_seed_value, {kStreamTruth});
  const std::uint64_t init_seed = derive_seed(trial_seed_value, {kStreamInit});
  const std::uint64_t power_seed = derive_seed(trial_seed_value, {kStreamPower});

  Model model = is_cdp
                    ? Model(make_cdp(n, m_or_P, model_seed,
                                     is_grid ? std::make_optional(std::make_pair(
                                                   cfg.grid_h, cfg.grid_w))
                                             : std::nullopt))
                    : Model(make_gaussian(n, m_or_P, model_seed));

  // 1D experiments use a unit-norm truth; the 2D surface keeps raw N(0,1)
  // pixels (optionally smoothed) as the random field.
  RealSignal truth;
  if (is_grid) {
    Xoshiro256pp rng(truth_seed);
    truth.resize(n);
    for (Index i = 0; i < n; ++i) truth[i] = rng.normal();
    if (cfg.smoothing > 0.0) {
      // Periodic separable Gaussian blur; cosmetic option for the field's
      // correlation length, renormalized to keep the original energy.
      const double sigma = cfg.smoothing;
      const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
      std::vector<double> kernel(2 * radius + 1);
      double ksum = 0.0;
      for (int t = -radius; t <= radius; ++t)
        ksum += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
      for (auto& kv : kernel) kv /= ksum;
      const auto blur_axis = [&](const RealSignal& in, Index rows, Index cols,
                                 bool along_cols) {
        RealSignal out = RealSignal::Zero(in.size());
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
              Index cc = along_cols ? (c + t % cols + cols) % cols : c;
              Index rr = along_cols ? r : (r + t % rows + rows) % rows;
              acc += kernel[t + radius] * in[rr * cols + cc];
            }
            out[r * cols + c] = acc;
          }
        return out;
      };
      const double energy = truth.norm();
      truth = blur_axis(truth, cfg.grid_h, cfg.grid_w, true);
      truth = blur_axis(truth, cfg.grid_h, cfg.grid_w, false);
      if (truth.norm() > 0.0) truth *= energy / truth.norm();
    }
  } else {
    truth = unit_gaussian_direction(n, truth_seed);
  }

  ProblemInstance instance = make_instance(std::move(model), truth);

  TrialOutcome outcome;
  outcome.truth = truth;

  if (cfg.init == "spectral") {
    SpectralConfig scfg;
    scfg.seed = power_seed;
    const SpectralResult sr = spectral_init(instance, scfg);
    outcome.x0 = sr.x0;
    outcome.spectral_converged = sr.converged;
  } else if (cfg.init == "random") {
    const double scale = cfg.init_scale > 0.0
                             ? cfg.init_scale
                             : std::sqrt(3.0 / double(n)) * truth.norm();
    outcome.x0 = random_init(n, scale, init_seed);
  } else {
    throw std::invalid_argument("init must be random or spectral");
  }

  SolverParams params = cfg.solver_params();
  params.record_iterates = record_iterates;

  if (cfg.algorithm == "md") {
    outcome.trace = mirror_descent(instance, outcome.x0, params);
  } else if (cfg.algorithm == "wf") {
    outcome.trace = wirtinger_flow(instance, outcome.x0, params);
  } else if (cfg.algorithm == "polyak") {
    outcome.trace = polyak_subgradient(instance, outcome.x0, params);
  } else {
    throw std::invalid_argument("algorithm must be md, wf or polyak");
  }
  outcome.trace.spectral_warning = !outcome.spectral_converged;
  outcome.success = outcome.trace.final_rel_err() < cfg.success_tol;
  return outcome;
}

void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = int(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(count);  // drain remaining work
      }
    });
  }
  for (auto& worker : workers) worker.join();
  if (first_error) std::rethrow_exception(first_error);
}

RateFitResult fit_rate(const std::vector<double>& rel_err) {
  // Usable range: the longest trailing run of finite, positive errors.
  int begin = int(rel_err.size());
  while (begin > 0 && std::isfinite(rel_err[begin - 1]) &&
         rel_err[begin - 1] > 0.0)
    --begin;

  const int end = int(rel_err.size());
  const int usable = end - begin;
  RateFitResult result;
  constexpr int kMinLen = 5;
  if (usable < kMinLen) return result;

  std::vector<double> ylog(usable);
  for (int i = 0; i < usable; ++i)
    ylog[i] = 2.0 * std::log(rel_err[begin + i]);

  // Cumulative sums from the tail make every suffix fit O(1); pick the
  // longest suffix (smallest start) with R^2 >= 0.99 and negative slope.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  int len = 0;
  for (int s = usable - 1; s >= 0; --s) {
    const double xi = double(s);
    const double yi = ylog[s];
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    sxy += xi * yi;
    syy += yi * yi;
    ++len;
    if (len < kMinLen) continue;
    const double denom = len * sxx - sx * sx;
    if (denom <= 0.0) continue;
    const double slope = (len * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / len;
    const double ss_tot = syy - sy * sy / len;
    if (ss_tot <= 1e-12 * len) continue;  // flat segment: nothing to fit
    const double ss_res =
        syy + slope * slope * sxx + len * intercept * intercept -
        2.0 * (slope * sxy + intercept * sy - slope * intercept * sx);
    const double r2 = 1.0 - std::max(0.0, ss_res) / ss_tot;
    if (r2 >= 0.99 && slope < 0.0) {
      result.has_segment = true;
      result.start = begin + s;
      result.length = len;
      result.slope = slope;
      result.factor = std::exp(slope);
      result.r2 = r2;
    }
  }
  return result;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

void write_grid_csv(const std::string& path, const RealSignal& flat, Index h,
                    Index w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (c) out.put(',');
      out << fmt_double(flat[r * w + c]);
    }
    out.put('\n');
  }
}

nlohmann::json run_summary_json(const ExperimentConfig& cfg, Index n,
                                Index m_or_P, const TrialOutcome& outcome) {
  nlohmann::json extra;
  extra["config"] = config_to_json(cfg);
  extra["resolved_n"] = n;
  extra[cfg.model_kind == "cdp" ? "resolved_P" : "resolved_m"] = m_or_P;
  extra["success"] = outcome.success;
  extra["spectral_converged"] = outcome.spectral_converged;
  return extra;
}

}  // namespace

int cmd_recover(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const Index n = cfg.grid_h > 0 && cfg.grid_w > 0 ? cfg.grid_h * cfg.grid_w
                                                   : cfg.n;
  const Index m_or_P =
      cfg.model_kind == "cdp" ? cfg.resolved_P() : cfg.resolved_m();

  const TrialOutcome outcome =
      run_trial(cfg, n, m_or_P, trial_seed(cfg.master_seed, 0, 0));

  write_text(cfg.out_dir + "/config.json", config_to_json(cfg).dump(2) + "\n");
  write_trace_csv(outcome.trace, cfg.out_dir + "/trace.csv");
  write_status_json(outcome.trace, cfg.out_dir + "/status.json",
                    run_summary_json(cfg, n, m_or_P, outcome).dump());
  std::printf("recover: status=%s final_rel_err=%.3e iterations=%d\n",
              to_string(outcome.trace.status).c_str(),
              outcome.trace.final_rel_err(),
              outcome.trace.rows.empty() ? 0 : outcome.trace.rows.back().iter);
  return 0;
}

namespace {

struct DiagramCellKey {
  Index n;
  Index m_or_P;
};

std::string diagram_row(const ExperimentConfig& cfg, const DiagramCellKey& key,
                        int trials, int successes) {
  std::ostringstream row;
  row << key.n << ',' << key.m_or_P << ',' << trials << ',' << successes << ','
      << fmt_rate(trials > 0 ? double(successes) / double(trials) : 0.0) << ','
      << cfg.algorithm << ',' << cfg.init << ',' << cfg.master_seed;
  return row.str();
}

}  // namespace

int cmd_phase_diagram(const ExperimentConfig& cfg) {
  if (cfg.n_list.empty() || (cfg.m_list.empty() && cfg.m_over_n.empty()))
    throw std::invalid_argument("phase-diagram: n_list and m grid required");
  if (cfg.trials < 1)
    throw std::invalid_argument("phase-diagram: trials must be >= 1");
  ensure_dir(cfg.out_dir);

  // Cell grid in deterministic row-major order: n outer, m inner.
  std::vector<DiagramCellKey> cells;
  for (const Index n : cfg.n_list) {
    if (!cfg.m_list.empty()) {
      for (const Index m : cfg.m_list) cells.push_back({n, m});
    } else {
      for (const double ratio : cfg.m_over_n)
        cells.push_back({n, Index(std::llround(ratio * double(n)))});
    }
  }

  const std::string csv_path = cfg.out_dir + "/phase_diagram.csv";
  const std::string resume_path = csv_path + ".resume.json";
  const std::string header =
      "n,m,trials,successes,success_rate,algorithm,init,master_seed";

  // Completed rows survive interruption in the resume marker; a rerun with
  // the identical config continues after the last finished cell.
  std::vector<std::string> done_rows;
  if (fs::exists(resume_path)) {
    std::ifstream in(resume_path);
    nlohmann::json marker = nlohmann::json::parse(in);
    if (marker.at("config") == config_to_json(cfg))
      done_rows = marker.at("rows").get<std::vector<std::string>>();
  }

  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  csv << header << '\n';
  for (const auto& row : done_rows) csv << row << '\n';
  csv.flush();

  for (std::size_t cell_idx = done_rows.size(); cell_idx < cells.size();
       ++cell_idx) {
    const DiagramCellKey key = cells[cell_idx];
    int successes = 0;
    if (key.m_or_P > 0) {
      std::vector<uint8_t> ok(cfg.trials, 0);
      parallel_for(cfg.jobs, cfg.trials, [&](int t) {
        const TrialOutcome outcome = run_trial(
            cfg, key.n, key.m_or_P,
            trial_seed(cfg.master_seed, cell_idx, std::uint64_t(t)));
        ok[t] = outcome.success ? 1 : 0;
      });
      for (const uint8_t s : ok) successes += s;
    }
    // m = 0: no measurements, nothing can succeed.

    done_rows.push_back(diagram_row(cfg, key, cfg.trials, successes));
    csv << done_rows.back() << '\n';
    csv.flush();

    nlohmann::json marker;
    marker["config"] = config_to_json(cfg);
    marker["rows"] = done_rows;
    write_text(resume_path, marker.dump() + "\n");
  }

  fs::remove(resume_path);
  std::printf("phase-diagram: %zu cells -> %s\n", cells.size(),
              csv_path.c_str());
  return 0;
}

int cmd_surface2d(const ExperimentConfig& cfg) {
  if (cfg.grid_h < 1 || cfg.grid_w < 1)
    throw std::invalid_argument("surface2d: grid shape required");
  if (cfg.grid_h * cfg.grid_w > (Index(1) << 20))
    throw std::invalid_argument("surface2d: grid larger than 2^20 pixels");
  if (cfg.model_kind != "cdp")
    throw std::invalid_argument("surface2d: requires the cdp model");
  ensure_dir(cfg.out_dir);

  const Index n = cfg.grid_h * cfg.grid_w;
  const Index P = cfg.resolved_P();
  const TrialOutcome outcome =
      run_trial(cfg, n, P, trial_seed(cfg.master_seed, 0, 0));

  write_text(cfg.out_dir + "/config.json", config_to_json(cfg).dump(2) + "\n");
  write_grid_csv(cfg.out_dir + "/truth.csv", outcome.truth, cfg.grid_h,
                 cfg.grid_w);
  write_grid_csv(cfg.out_dir + "/recovered.csv", outcome.trace.x_final,
                 cfg.grid_h, cfg.grid_w);
  write_trace_csv(outcome.trace, cfg.out_dir + "/trace.csv");
  write_status_json(outcome.trace, cfg.out_dir + "/status.json",
                    run_summary_json(cfg, n, P, outcome).dump());
  std::printf("surface2d: status=%s final_rel_err=%.3e\n",
              to_string(outcome.trace.status).c_str(),
              outcome.trace.final_rel_err());
  return 0;
}

int cmd_rate_fit(const std::string& trace_csv, const RateFitParams& params) {
  std::ifstream in(trace_csv);
  if (!in) throw std::runtime_error("rate-fit: cannot open " + trace_csv);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("rate-fit: empty trace file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  int rel_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "rel_err") rel_col = int(i);
  if (rel_col < 0) throw std::runtime_error("rate-fit: no rel_err column");

  std::vector<double> rel_err;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    int col = 0;
    double value = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(ss, field, ',')) {
      if (col == rel_col && !field.empty()) value = std::stod(field);
      ++col;
    }
    rel_err.push_back(value);
  }

  const RateFitResult fit = fit_rate(rel_err);

  RatePrediction pred =
      params.kind == "cdp"
          ? predict_rate_cdp(params.kappa, params.delta, params.norm_truth,
                             params.L_i > 0.0 ? std::optional<double>(params.L_i)
                                              : std::nullopt)
          : predict_rate_gaussian(params.kappa, params.lambda, params.varrho,
                                  params.norm_truth);

  nlohmann::json report;
  report["trace"] = trace_csv;
  report["rows"] = rel_err.size();
  report["has_segment"] = fit.has_segment;
  if (fit.has_segment) {
    report["segment_start"] = fit.start;
    report["segment_length"] = fit.length;
    report["fitted_factor"] = fit.factor;
    report["fitted_slope"] = fit.slope;
    report["r2"] = fit.r2;
    report["predicted_nu"] = pred.nu;
    report["predicted_factor"] = 1.0 - pred.nu;
    // The theory gives an upper bound on the decay factor; allow it to be
    // loose by 50% in log scale.
    report["within_bound"] =
        fit.slope <= 0.5 * std::log(1.0 - pred.nu);
  } else {
    report["note"] = "no linear segment";
    report["predicted_nu"] = pred.nu;
  }

  const std::string text = report.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!params.out_path.empty()) write_text(params.out_path, text);
  return 0;
}

namespace {

bool check(bool ok, const char* what, bool verbose, bool& all_ok) {
  if (verbose) std::printf("  [%s] %s\n", ok ? "ok" : "FAIL", what);
  all_ok = all_ok && ok;
  return ok;
}

}  // namespace

bool run_selftest(bool verbose) {
  bool all_ok = true;
  Xoshiro256pp rng(20240901);

  // Cubic root residuals across fourteen decades.
  {
    bool ok = true;
    for (int e = -6; e <= 8; ++e) {
      const double c = std::pow(10.0, e);
      const double t = solve_mirror_cubic(c);
      ok = ok && t > 0.0 && t <= 1.0 &&
           std::abs(t * t * t * c + t - 1.0) <= 1e-12 * std::max(1.0, c);
    }
    check(ok, "mirror cubic residuals", verbose, all_ok);
  }

  // Bregman three-point identity on random triples.
  {
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      RealSignal x(6), u(6), z(6);
      for (Index i = 0; i < 6; ++i) {
        x[i] = rng.normal();
        u[i] = rng.normal();
        z[i] = rng.normal();
      }
      const double lhs =
          bregman_entropy(x, z) - bregman_entropy(x, u) - bregman_entropy(u, z);
      const double rhs = (entropy_gradient(u) - entropy_gradient(z)).dot(x - u);
      ok = ok && std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs));
    }
    check(ok, "three-point identity", verbose, all_ok);
  }

  // Adjoint identity and intensity consistency for both models.
  {
    const auto gm = make_gaussian(8, 24, 7);
    const auto cm = make_cdp(8, 3, 9);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      RealSignal x(8), wg(24);
      for (Index i = 0; i < 8; ++i) x[i] = rng.normal();
      for (Index i = 0; i < 24; ++i) wg[i] = rng.normal();
      ComplexSignal wc(24);
      for (Index i = 0; i < 24; ++i)
        wc[i] = std::complex<double>(rng.normal(), rng.normal());
      const double lhs_g = gm.apply(x).dot(wg);
      const double rhs_g = x.dot(gm.adjoint_real(wg));
      ok = ok && std::abs(lhs_g - rhs_g) <= 1e-10 * std::max(1.0, std::abs(lhs_g));
      const double lhs_c = cm.apply(x).dot(wc).real();
      const double rhs_c = x.dot(cm.adjoint_real(wc));
      ok = ok && std::abs(lhs_c - rhs_c) <= 1e-10 * std::max(1.0, std::abs(lhs_c));
    }
    check(ok, "adjoint identities", verbose, all_ok);
  }

  // Finite-difference gradient agreement on a small Gaussian instance.
  {
    const auto model = make_gaussian(12, 60, 11);
    const RealSignal truth = unit_gaussian_direction(12, 13);
    const ProblemInstance inst = make_instance(model, truth);
    bool ok = true;
    for (int trial = 0; trial < 5; ++trial) {
      RealSignal x(12), d(12);
      for (Index i = 0; i < 12; ++i) {
        x[i] = rng.normal();
        d[i] = rng.normal();
      }
      d.normalize();
      const double h = 1e-5 * (1.0 + x.norm());
      const double fd =
          (f_value(inst, x + h * d) - f_value(inst, x - h * d)) / (2.0 * h);
      const double an = f_gradient(inst, x).dot(d);
      ok = ok && std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an));
    }
    check(ok, "gradient finite differences", verbose, all_ok);
  }

  // Descent and backtracking invariants on a small spectral-init run.
  {
    const auto model = make_gaussian(16, 256, 17);
    const RealSignal truth = unit_gaussian_direction(16, 19);
    const ProblemInstance inst = make_instance(model, truth);
    SpectralConfig scfg;
    scfg.seed = 23;
    const auto spec = spectral_init(inst, scfg);
    SolverParams params;
    params.max_iters = 400;
    const SolverTrace trace = mirror_descent(inst, spec.x0, params);
    const bool recovered = trace.final_rel_err() < 1e-5;
    check(recovered, "mirror descent recovery (n=16 Gaussian)", verbose, all_ok);
    check(trace.descent_violations == 0 && trace.backtrack_violations == 0,
          "descent/backtracking invariants", verbose, all_ok);
  }

  // Ternary mask histogram within 3 sigma of (1/4, 1/2, 1/4).
  {
    const auto cm = make_cdp(1000, 100, 29);
    const double total = 1000.0 * 100.0;
    const Index minus = (cm.masks.array() == -1.0).count();
    const Index zero = (cm.masks.array() == 0.0).count();
    const Index plus = (cm.masks.array() == 1.0).count();
    const auto within = [total](Index count, double prob) {
      const double sigma = std::sqrt(total * prob * (1.0 - prob));
      return std::abs(double(count) - total * prob) <= 3.0 * sigma;
    };
    check(within(minus, 0.25) && within(zero, 0.5) && within(plus, 0.25) &&
              minus + zero + plus == Index(total),
          "ternary mask histogram", verbose, all_ok);
  }

  if (verbose)
    std::printf("selftest: %s\n", all_ok ? "all checks passed" : "FAILURES");
  return all_ok;
}

}  // namespace phaseret
