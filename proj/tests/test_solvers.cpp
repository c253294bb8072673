#include <cmath>
#include <cstdio>
#include <fstream>

#include <doctest.h>

#include "oracles.hpp"
#include "phaseret/bregman.hpp"
#include "phaseret/init.hpp"
#include "phaseret/rng.hpp"
#include "phaseret/solvers.hpp"

using namespace phaseret;

namespace {

RealSignal unit_vec(Xoshiro256pp& rng, Index n) {
  RealSignal x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.normal();
  x.normalize();
  return x;
}

ProblemInstance gaussian_instance(Index n, Index m, std::uint64_t seed) {
  Xoshiro256pp rng(seed ^ 0xabcdef);
  return make_instance(make_gaussian(n, m, seed), unit_vec(rng, n));
}

void check_md_invariants(const SolverTrace& trace) {
  CHECK(trace.descent_violations == 0);
  CHECK(trace.backtrack_violations == 0);
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    CHECK(trace.rows[k].f <=
          trace.rows[k - 1].f + 1e-12 * std::max(1.0, trace.rows[k - 1].f));
  }
}

}  // namespace

TEST_CASE("mirror descent: starting at the truth stops immediately") {
  const auto inst = gaussian_instance(16, 128, 1);
  SolverParams params;
  const auto trace = mirror_descent(inst, *inst.truth, params);
  CHECK(trace.status == SolverStatus::converged_grad);
  CHECK(trace.rows.size() == 1);
  CHECK(trace.rows[0].iter == 0);
  CHECK(trace.final_rel_err() == 0.0);
}

TEST_CASE("mirror descent: max_iters = 0 records only the initial point") {
  const auto inst = gaussian_instance(8, 64, 2);
  SolverParams params;
  params.max_iters = 0;
  const auto trace = mirror_descent(inst, random_init(8, 0.5, 3), params);
  CHECK(trace.rows.size() == 1);
  CHECK(trace.status == SolverStatus::max_iters);
}

TEST_CASE("mirror descent: backtracking recovery with clean invariants") {
  const auto inst = gaussian_instance(32, 640, 4);
  SpectralConfig scfg;
  scfg.seed = 5;
  const auto spec = spectral_init(inst, scfg);
  SolverParams params;
  params.max_iters = 500;
  params.record_iterates = true;
  const auto trace = mirror_descent(inst, spec.x0, params);

  CHECK(trace.status == SolverStatus::converged_error);
  CHECK(trace.final_rel_err() < 1e-5);
  check_md_invariants(trace);

  const double L0 = relative_smoothness_bound(inst).L_global;
  const double L_floor = 1e-8 * L0;
  for (const auto& row : trace.rows) {
    CHECK(row.L <= L0 * params.xi);
    CHECK(row.L >= L_floor / params.xi);
    CHECK(row.backtracks <= params.inner_max + 1);
  }

  // Lemma-style per-step bound at u = truth holds along the whole run.
  const auto report = verify_descent_inequality(inst, trace, params.kappa);
  CHECK(report.all_hold());
}

TEST_CASE("mirror descent: paper's Gaussian regime, constant step") {
  // n = 128, m = ceil(2 n ln^3 n), gamma = 0.99/3, uniform random init.
  const Index n = 128;
  const Index m = Index(std::ceil(2.0 * n * std::pow(std::log(double(n)), 3)));
  const auto inst = gaussian_instance(n, m, 6);
  SolverParams params;
  params.step_mode = StepMode::constant;
  params.gamma = 0.99 / 3.0;
  params.max_iters = 600;
  const RealSignal x0 = random_init(n, std::sqrt(3.0 / double(n)), 7);
  const auto trace = mirror_descent(inst, x0, params);

  CHECK(trace.final_rel_err() < 1e-5);
  check_md_invariants(trace);
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    CHECK(trace.rows[k].gamma == params.gamma);
    CHECK(trace.rows[k].L == doctest::Approx((1.0 - params.kappa) / params.gamma));
  }
}

TEST_CASE("mirror descent: CDP regime with spectral init, constant step") {
  const Index n = 64;
  const Index P = Index(std::ceil(7.0 * std::pow(std::log(double(n)), 3)));
  Xoshiro256pp rng(8);
  const auto inst = make_instance(make_cdp(n, P, 9), unit_vec(rng, n));
  SpectralConfig scfg;
  scfg.seed = 10;
  const auto spec = spectral_init(inst, scfg);
  SolverParams params;
  params.step_mode = StepMode::constant;
  params.gamma = 0.99 / 2.0;
  params.max_iters = 600;
  const auto trace = mirror_descent(inst, spec.x0, params);

  CHECK(trace.final_rel_err() < 1e-5);
  check_md_invariants(trace);
}

TEST_CASE("mirror descent: determinism of constant-step traces") {
  const auto inst = gaussian_instance(16, 160, 11);
  SolverParams params;
  params.step_mode = StepMode::constant;
  params.gamma = 0.99 / 3.0;
  params.max_iters = 50;
  const RealSignal x0 = random_init(16, 0.4, 12);
  const auto a = mirror_descent(inst, x0, params);
  const auto b = mirror_descent(inst, x0, params);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].f == b.rows[k].f);
    CHECK(a.rows[k].grad_norm == b.rows[k].grad_norm);
    CHECK(a.rows[k].rel_err == b.rows[k].rel_err);
  }
}

TEST_CASE("mirror descent: near-critical points barely move") {
  // 1-strong convexity of the kernel bounds the fixed-point residual by
  // gamma * ||grad f|| (plus cubic-solve tolerance).
  const auto inst = gaussian_instance(12, 120, 13);
  Xoshiro256pp rng(14);
  for (int t = 0; t < 20; ++t) {
    RealSignal x(12);
    for (Index i = 0; i < 12; ++i) x[i] = rng.normal();
    const RealSignal g = f_gradient(inst, x);
    const double gamma = 0.05;
    const auto step = mirror_step(x, g, gamma);
    CHECK((step.next_point - x).norm() <=
          gamma * g.norm() + 1e-9 * (1.0 + x.norm()));
  }
}

TEST_CASE("wirtinger flow") {
  const auto inst = gaussian_instance(16, 256, 15);

  SUBCASE("stationary at the truth") {
    SolverParams params;
    const auto trace = wirtinger_flow(inst, *inst.truth, params);
    CHECK(trace.status == SolverStatus::converged_grad);
    CHECK(trace.rows.size() == 1);
  }

  SUBCASE("one step equals the explicit update, sharing f_gradient") {
    SolverParams params;
    params.max_iters = 1;
    params.success_tol = 0.0;
    const RealSignal x0 = random_init(16, 0.5, 16);
    const auto trace = wirtinger_flow(inst, x0, params);
    REQUIRE(trace.rows.size() == 2);
    const double mu1 = std::min(1.0 - std::exp(-1.0 / 330.0), 0.4);
    const RealSignal expected =
        x0 - (mu1 / x0.squaredNorm()) * f_gradient(inst, x0);
    CHECK((trace.x_final - expected).norm() <= 1e-14 * (1.0 + expected.norm()));
  }

  SUBCASE("rejects zero start") {
    SolverParams params;
    CHECK_THROWS_AS(wirtinger_flow(inst, RealSignal::Zero(16), params),
                    std::invalid_argument);
  }
}

TEST_CASE("wirtinger flow vs mirror descent: paired success rates") {
  // Spectral init, n = 64, m = ceil(4 n ln n); WF success within 15 points
  // of MD on the same seeds.
  const Index n = 64;
  const Index m = Index(std::ceil(4.0 * n * std::log(double(n))));
  int md_ok = 0, wf_ok = 0;
  const int trials = 30;
  for (int t = 0; t < trials; ++t) {
    const auto inst = gaussian_instance(n, m, 3000 + t);
    SpectralConfig scfg;
    scfg.seed = 400 + t;
    const auto spec = spectral_init(inst, scfg);

    SolverParams md_params;
    md_params.max_iters = 600;
    if (mirror_descent(inst, spec.x0, md_params).final_rel_err() < 1e-5) ++md_ok;

    SolverParams wf_params;
    wf_params.max_iters = 2500;
    if (wirtinger_flow(inst, spec.x0, wf_params).final_rel_err() < 1e-5) ++wf_ok;
  }
  CHECK(double(wf_ok) >= double(md_ok) - 0.15 * trials);
}

TEST_CASE("polyak subgradient") {
  const auto inst = gaussian_instance(16, 256, 17);

  SUBCASE("terminates at the truth with zero objective") {
    SolverParams params;
    const auto trace = polyak_subgradient(inst, *inst.truth, params);
    CHECK(trace.status == SolverStatus::converged_grad);
    CHECK(trace.rows.size() == 1);
    CHECK(trace.rows[0].f == 0.0);
  }

  SUBCASE("recovers from spectral init") {
    SpectralConfig scfg;
    scfg.seed = 18;
    const auto spec = spectral_init(inst, scfg);
    SolverParams params;
    params.max_iters = 2000;
    const auto trace = polyak_subgradient(inst, spec.x0, params);
    CHECK(trace.final_rel_err() < 1e-5);
  }

  SUBCASE("non-inferiority against mirror descent on a small column") {
    const Index n = 64;
    const int trials = 25;
    for (const Index m : {3 * n, 5 * n}) {
      int md_ok = 0, polyak_ok = 0;
      for (int t = 0; t < trials; ++t) {
        const auto inst2 = gaussian_instance(n, m, 5000 + t);
        SpectralConfig scfg;
        scfg.seed = 600 + t;
        const auto spec = spectral_init(inst2, scfg);
        SolverParams params;
        params.max_iters = 1000;
        if (mirror_descent(inst2, spec.x0, params).final_rel_err() < 1e-5)
          ++md_ok;
        if (polyak_subgradient(inst2, spec.x0, params).final_rel_err() < 1e-5)
          ++polyak_ok;
      }
      CHECK(double(polyak_ok) >= double(md_ok) - 0.10 * trials);
    }
  }
}

TEST_CASE("rate prediction formulas and ranges") {
  SUBCASE("gaussian at unit truth norm") {
    const auto pred = predict_rate_gaussian(0.01, 0.9, 0.1, 1.0);
    CHECK(pred.nu == doctest::Approx(0.99 * 0.8 / 3.1).epsilon(1e-12));
    CHECK(pred.nu > 0.0);
    CHECK(pred.nu < 1.0);
  }

  SUBCASE("cdp with explicit local constant") {
    const auto pred = predict_rate_cdp(0.01, 0.0, 1.0, 2.0);
    CHECK(pred.nu == doctest::Approx((1.0 - 0.01) / 2.0).epsilon(1e-12));
  }

  SUBCASE("cdp default local estimate") {
    const auto pred = predict_rate_cdp(0.01, 0.1, 1.0);
    CHECK(pred.nu == doctest::Approx(0.99 * 0.8 / (1.1 * 2.0 * 1.1 * 1.1)).epsilon(1e-12));
  }

  SUBCASE("out-of-range parameters are rejected") {
    CHECK_THROWS_AS(predict_rate_gaussian(0.0, 0.9, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(predict_rate_gaussian(0.01, 0.9, 0.9, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(predict_rate_cdp(0.01, 0.6, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(predict_rate_cdp(0.01, 0.1, 0.0), std::invalid_argument);
  }

  SUBCASE("theta bound dominates the exact supremum") {
    for (double rho : {0.1, 0.5, 1.0}) {
      for (double norm_truth : {0.5, 1.0, 2.0}) {
        const double exact = 3.0 * (norm_truth + rho) * (norm_truth + rho) + 1.0;
        CHECK(theta_bound(norm_truth, rho) >= exact);
      }
    }
  }
}

TEST_CASE("descent inequality verification") {
  const auto inst = gaussian_instance(24, 480, 19);

  SUBCASE("holds along a constant-step run") {
    SolverParams params;
    params.step_mode = StepMode::constant;
    params.gamma = 0.99 / 3.0;
    params.max_iters = 300;
    params.record_iterates = true;
    const RealSignal x0 = random_init(24, std::sqrt(3.0 / 24.0), 20);
    const auto trace = mirror_descent(inst, x0, params);
    REQUIRE(trace.final_rel_err() < 1e-5);
    const auto report = verify_descent_inequality(inst, trace, params.kappa);
    CHECK(report.all_hold());
    CHECK(report.holds.size() == trace.rows.size() - 1);
  }

  SUBCASE("flags an overlong step injected past the backtracking test") {
    SolverParams params;
    params.step_mode = StepMode::constant;
    params.gamma = 20.0;  // far beyond (1 - kappa) / L
    params.max_iters = 40;
    params.record_iterates = true;
    const RealSignal x0 = random_init(24, std::sqrt(3.0 / 24.0), 21);
    const auto trace = mirror_descent(inst, x0, params);
    const auto report = verify_descent_inequality(inst, trace, params.kappa);
    CHECK(report.violations >= 1);
  }

  SUBCASE("requires recorded iterates") {
    SolverParams params;
    params.max_iters = 5;
    const auto trace = mirror_descent(inst, random_init(24, 0.3, 22), params);
    CHECK_THROWS_AS(verify_descent_inequality(inst, trace, params.kappa),
                    std::invalid_argument);
  }
}

TEST_CASE("trace CSV and status JSON round out the run artifacts") {
  const auto inst = gaussian_instance(8, 80, 23);
  SolverParams params;
  params.max_iters = 20;
  const auto trace = mirror_descent(inst, random_init(8, 0.5, 24), params);

  const std::string csv_path = "test_trace_out.csv";
  write_trace_csv(trace, csv_path);
  std::ifstream in(csv_path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,f,grad_norm,L_k,gamma_k,backtracks,rel_err");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == int(trace.rows.size()));

  const std::string json_path = "test_status_out.json";
  write_status_json(trace, json_path, "{\"tag\":42}");
  std::ifstream jin(json_path);
  std::string all((std::istreambuf_iterator<char>(jin)),
                  std::istreambuf_iterator<char>());
  CHECK(all.find("\"tag\": 42") != std::string::npos);
  CHECK(all.find("\"status\"") != std::string::npos);
  std::remove(csv_path.c_str());
  std::remove(json_path.c_str());
}
