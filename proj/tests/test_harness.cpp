#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "phaseret/experiments.hpp"

using namespace phaseret;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("experiment config round-trips losslessly through JSON") {
  ExperimentConfig cfg;
  cfg.model_kind = "cdp";
  cfg.n = 48;
  cfg.P = 9;
  cfg.algorithm = "polyak";
  cfg.init = "spectral";
  cfg.step_mode = "constant";
  cfg.gamma = 0.123456789012345;
  cfg.master_seed = 0xdeadbeefcafe;
  cfg.n_list = {16, 32};
  cfg.m_over_n = {2.0, 4.0};
  cfg.out_dir = "somewhere";

  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("size rules honour the configured log base") {
  ExperimentConfig cfg;
  cfg.n = 128;
  cfg.m_mult = 2.0;
  cfg.m_logpow = 3;
  cfg.log_base = "e";
  CHECK(cfg.resolved_m() == Index(std::ceil(2.0 * 128.0 * std::pow(std::log(128.0), 3))));
  cfg.log_base = "2";
  CHECK(cfg.resolved_m() == Index(std::ceil(2.0 * 128.0 * 343.0)));  // log2 = 7
  cfg.log_base = "10";
  cfg.m_logpow = 1;
  CHECK(cfg.resolved_m() == Index(std::ceil(2.0 * 128.0 * std::log10(128.0))));
  cfg.m = 777;
  CHECK(cfg.resolved_m() == 777);

  ExperimentConfig pcfg;
  pcfg.n = 128;
  CHECK(pcfg.resolved_P() == Index(std::ceil(7.0 * std::pow(std::log(128.0), 3))));
}

TEST_CASE("trial seeds derive deterministically and spread") {
  const auto a = trial_seed(1, 0, 0);
  CHECK(a == trial_seed(1, 0, 0));
  CHECK(a != trial_seed(1, 0, 1));
  CHECK(a != trial_seed(1, 1, 0));
  CHECK(a != trial_seed(2, 0, 0));
}

TEST_CASE("rate fit: synthetic geometric trace is recovered exactly") {
  std::vector<double> rel_err;
  for (int k = 0; k < 40; ++k) rel_err.push_back(std::pow(0.5, k));
  const auto fit = fit_rate(rel_err);
  REQUIRE(fit.has_segment);
  CHECK(fit.start == 0);
  CHECK(fit.length == 40);
  CHECK(fit.factor == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("rate fit: constant and too-short traces give no segment") {
  CHECK_FALSE(fit_rate(std::vector<double>(30, 0.37)).has_segment);
  CHECK_FALSE(fit_rate({0.5, 0.25, 0.125}).has_segment);
  CHECK_FALSE(fit_rate({}).has_segment);

  // Increasing trace: slope positive, rejected.
  std::vector<double> rising;
  for (int k = 0; k < 20; ++k) rising.push_back(0.01 * std::pow(1.5, k));
  CHECK_FALSE(fit_rate(rising).has_segment);
}

TEST_CASE("rate fit: picks the trailing linear segment after a plateau") {
  std::vector<double> rel_err;
  for (int k = 0; k < 15; ++k) rel_err.push_back(0.9 + 0.001 * ((k % 3) - 1));
  for (int k = 0; k < 30; ++k) rel_err.push_back(0.9 * std::pow(0.7, k));
  const auto fit = fit_rate(rel_err);
  REQUIRE(fit.has_segment);
  CHECK(fit.start >= 10);
  CHECK(fit.start <= 16);
  CHECK(fit.factor == doctest::Approx(0.49).epsilon(0.05));
}

TEST_CASE("cmd_recover writes a replayable artifact set") {
  TempDir dir("phaseret_recover_test");
  ExperimentConfig cfg;
  cfg.n = 24;
  cfg.m = 480;
  cfg.algorithm = "md";
  cfg.init = "spectral";
  cfg.max_iters = 400;
  cfg.master_seed = 77;
  cfg.out_dir = dir.str();

  CHECK(cmd_recover(cfg) == 0);

  const std::string trace = slurp(dir.str() + "/trace.csv");
  CHECK(trace.rfind("iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err\n", 0) == 0);

  const auto status = nlohmann::json::parse(slurp(dir.str() + "/status.json"));
  CHECK(status["success"] == true);
  CHECK(status["final_rel_err"].get<double>() < 1e-5);
  CHECK(status["descent_violations"] == 0);
  CHECK(status["backtrack_violations"] == 0);

  const auto echoed = nlohmann::json::parse(slurp(dir.str() + "/config.json"));
  CHECK(config_to_json(config_from_json(echoed)) == config_to_json(cfg));

  SUBCASE("max_iters = 0 leaves only the initial point") {
    cfg.max_iters = 0;
    cfg.out_dir = dir.str() + "/zero";
    CHECK(cmd_recover(cfg) == 0);
    const std::string t0 = slurp(cfg.out_dir + "/trace.csv");
    CHECK(std::count(t0.begin(), t0.end(), '\n') == 2);  // header + row 0
    const auto s0 = nlohmann::json::parse(slurp(cfg.out_dir + "/status.json"));
    CHECK(s0["status"] == "max_iters");
  }
}

TEST_CASE("cmd_phase_diagram: zero-measurement column, determinism, resume") {
  TempDir dir("phaseret_diagram_test");
  ExperimentConfig cfg;
  cfg.model_kind = "gaussian";
  cfg.algorithm = "md";
  cfg.init = "spectral";
  cfg.trials = 6;
  cfg.jobs = 2;
  cfg.max_iters = 300;
  cfg.master_seed = 99;
  cfg.n_list = {8};
  cfg.m_list = {0, 16, 64};
  cfg.out_dir = dir.str();

  CHECK(cmd_phase_diagram(cfg) == 0);
  const std::string first = slurp(dir.str() + "/phase_diagram.csv");

  // Header plus one row per cell; the m = 0 column cannot succeed.
  std::istringstream ss(first);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "n,m,trials,successes,success_rate,algorithm,init,master_seed");
  std::getline(ss, line);
  CHECK(line == "8,0,6,0,0,md,spectral,99");
  std::getline(ss, line);
  CHECK(line.rfind("8,16,6,", 0) == 0);
  std::getline(ss, line);
  CHECK(line.rfind("8,64,6,", 0) == 0);
  // Plenty of measurements: every trial must recover.
  CHECK(line.find(",6,1,") != std::string::npos);

  SUBCASE("identical master seed reproduces identical bytes") {
    ExperimentConfig cfg2 = cfg;
    cfg2.out_dir = dir.str() + "/again";
    CHECK(cmd_phase_diagram(cfg2) == 0);
    CHECK(slurp(cfg2.out_dir + "/phase_diagram.csv") == first);
  }

  SUBCASE("resume marker lets a rerun keep finished cells") {
    ExperimentConfig cfg3 = cfg;
    cfg3.out_dir = dir.str() + "/resumed";
    // Fabricate an interrupted run: only the first cell was flushed.
    std::filesystem::create_directories(cfg3.out_dir);
    nlohmann::json marker;
    marker["config"] = config_to_json(cfg3);
    marker["rows"] = {std::string("8,0,6,0,0,md,spectral,99")};
    std::ofstream mk(cfg3.out_dir + "/phase_diagram.csv.resume.json");
    mk << marker.dump();
    mk.close();

    CHECK(cmd_phase_diagram(cfg3) == 0);
    CHECK(slurp(cfg3.out_dir + "/phase_diagram.csv") == first);
    CHECK_FALSE(std::filesystem::exists(cfg3.out_dir +
                                        "/phase_diagram.csv.resume.json"));
  }
}

TEST_CASE("cmd_surface2d: small grid recovery with sign-aligned match") {
  TempDir dir("phaseret_surface_test");
  ExperimentConfig cfg;
  cfg.model_kind = "cdp";
  cfg.grid_h = 8;
  cfg.grid_w = 8;
  cfg.P = 40;
  cfg.init = "random";
  cfg.max_iters = 800;
  cfg.master_seed = 5;
  cfg.out_dir = dir.str();

  CHECK(cmd_surface2d(cfg) == 0);

  const auto status = nlohmann::json::parse(slurp(dir.str() + "/status.json"));
  CHECK(status["final_rel_err"].get<double>() < 1e-5);

  // Reconstruction matches the truth up to a global sign, pixelwise.
  const auto read_grid = [&](const std::string& name) {
    std::vector<double> values;
    std::istringstream ss(slurp(dir.str() + "/" + name));
    std::string line, field;
    while (std::getline(ss, line)) {
      std::istringstream ls(line);
      while (std::getline(ls, field, ',')) values.push_back(std::stod(field));
    }
    return values;
  };
  const auto truth = read_grid("truth.csv");
  const auto recon = read_grid("recovered.csv");
  REQUIRE(truth.size() == 64);
  REQUIRE(recon.size() == 64);
  double max_abs = 0.0, plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(truth[i]));
    plus = std::max(plus, std::abs(recon[i] - truth[i]));
    minus = std::max(minus, std::abs(recon[i] + truth[i]));
  }
  CHECK(std::min(plus, minus) <= 1e-4 * max_abs);

  SUBCASE("rejects oversized grids") {
    cfg.grid_h = 2048;
    cfg.grid_w = 2048;
    CHECK_THROWS_AS(cmd_surface2d(cfg), std::invalid_argument);
  }
}

TEST_CASE("cmd_rate_fit consumes a trace file end to end") {
  TempDir dir("phaseret_ratefit_test");
  const std::string trace_path = dir.str() + "/trace.csv";
  {
    std::ofstream out(trace_path);
    out << "iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err\n";
    for (int k = 0; k < 30; ++k)
      out << k << ",0,0,3,0.33,0," << std::pow(0.6, k) << "\n";
  }
  RateFitParams params;
  params.kind = "gaussian";
  params.out_path = dir.str() + "/report.json";
  CHECK(cmd_rate_fit(trace_path, params) == 0);
  const auto report = nlohmann::json::parse(slurp(params.out_path));
  CHECK(report["has_segment"] == true);
  CHECK(report["fitted_factor"].get<double>() == doctest::Approx(0.36).epsilon(1e-6));
  CHECK(report["predicted_nu"].get<double>() ==
        doctest::Approx(0.99 * 0.8 / 3.1).epsilon(1e-12));

  SUBCASE("constant trace reports no linear segment") {
    const std::string flat_path = dir.str() + "/flat.csv";
    std::ofstream out(flat_path);
    out << "iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err\n";
    for (int k = 0; k < 30; ++k) out << k << ",1,1,3,0.33,0,0.5\n";
    out.close();
    RateFitParams p2;
    CHECK(cmd_rate_fit(flat_path, p2) == 0);
  }
}

TEST_CASE("selftest battery passes") { CHECK(run_selftest(false)); }
