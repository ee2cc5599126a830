// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gridmc/certificate.hpp"
#include "gridmc/completion.hpp"
#include "gridmc/experiment.hpp"
#include "gridmc/linflow.hpp"
#include "support.hpp"

using namespace gridmc;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0 means no runtime limit
  std::function<Verdict()> check;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Default feeder, scada mask at 50%, 1% noise.
ExperimentConfig base_config() {
  ExperimentConfig c;
  c.certify = false;
  return c;
}

ExperimentConfig estimation_config() {
  ExperimentConfig c = base_config();
  c.areas = 5;
  c.time_steps = 5;
  c.runs = 5;
  c.admm.rank = 2;
  c.admm.mu = 100.0;
  c.admm.nu = 100.0;
  c.admm.gamma = 10.0;
  c.admm.lambda = 10.0;
  c.admm.max_iters = 500;
  return c;
}

ExperimentConfig default_mu_config(double tol) {
  ExperimentConfig c = base_config();
  c.areas = 5;
  c.admm.rank = 2;
  c.admm.gamma = 3.0;
  c.admm.lambda = 10.0;
  c.admm.tol = tol;
  c.admm.max_iters = 3000;
  return c;
}

// Decentralized outcomes collected by the estimation criteria for the ledger check.
std::vector<std::pair<std::string, RunOutcome>> g_outcomes;

void keep_outcomes(const std::string& label, const ExperimentResult& r) {
  for (const auto& o : r.runs) g_outcomes.emplace_back(label, o);
}

Verdict adjoint_identity() {
  FeederSpec spec;
  spec.time_steps = 2;
  const Feeder f = generate_radial_feeder(spec);
  const CMatrix v = solve_exact_flow_series(f.network, f.loads);
  const RMatrix m = build_matrix(v, f.loads.s).data;
  const auto mask = sample_mask(m.rows(), m.cols(), 0.5, MaskPolicy::scada, 1);
  const auto part = partition_contiguous(f.network, 3);
  const auto maps = build_area_maps(truncate_model(build_linear_model(f.network, 2), part));
  const auto op = build_B_d(mask, m, maps, 10.0, 1.0);
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const RMatrix x = test::random_matrix(op.m, op.n, rng);
    const RVector z = test::random_matrix(op.size(), 1, rng).col(0);
    const double rhs = (x.array() * apply_B_adjoint(op, z).array()).sum();
    worst = std::max(worst, std::abs(apply_B(op, x).dot(z) - rhs) / (1.0 + std::abs(rhs)));
  }
  return {worst <= 1e-10, fmt("max scaled gap %.3g", worst)};
}

Verdict nuclear_norm_characterization() {
  std::mt19937_64 rng(22);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Index m = 2 + static_cast<Index>(rng() % 29);
    const Index n = 2 + static_cast<Index>(rng() % 29);
    const Index r = 1 + static_cast<Index>(rng() % std::min<Index>(5, std::min(m, n)));
    const RMatrix x = test::random_low_rank(m, n, r, rng);
    const FactorPair fp = init_factors(x, full_mask(m, n), r, 1);
    worst = std::max(worst, std::abs(0.5 * (fp.u.squaredNorm() + fp.v.squaredNorm()) - sv_spectrum(x).sum()));
  }
  return {worst <= 1e-8, fmt("max gap %.3g", worst)};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(33);
  CompletionProblem p;
  const RMatrix truth = test::random_low_rank(20, 15, 3, rng);
  p.m = truth;
  p.mask = sample_mask(20, 15, 0.5, MaskPolicy::uniform, 34);
  p.partition = AreaPartition::single(15);
  AdmmConfig cfg;
  cfg.mu = 50.0;
  cfg.nu = 0.0;
  cfg.max_iters = 20000;
  cfg.tol = 1e-12;
  const auto res = run_centralized(p, cfg);
  const RMatrix oracle = svt_oracle(p.m, p.mask, 50.0);
  const double f_oracle = nuclear_objective(oracle, p.m, p.mask, 50.0);
  const double f_fact = objective_factored(res.factors.u, res.factors.v, p.m, p.mask, {}, 50.0, 0.0);
  const double rmse_fact = (res.x - truth).norm();
  const double rmse_oracle = (oracle - truth).norm();
  const double obj_gap = std::abs(f_fact - f_oracle) / f_oracle;
  const double rmse_gap = std::abs(rmse_fact - rmse_oracle) / rmse_oracle;
  return {obj_gap <= 1e-3 && rmse_gap <= 0.05,
          fmt("objective gap %.3g", obj_gap) + fmt(", rmse gap %.3g", rmse_gap)};
}

Verdict single_area_equivalence() {
  ExperimentConfig c = base_config();
  const auto inst = prepare_instance(c, 0);
  AdmmConfig cfg;
  cfg.max_iters = 100;
  RunOptions opt;
  opt.stop_on_tol = false;
  std::vector<RMatrix> a, b;
  run_decentralized(inst.problem, cfg, opt, [&](int, const RMatrix& x) { a.push_back(x); });
  run_centralized(inst.problem, cfg, opt, [&](int, const RMatrix& x) { b.push_back(x); });
  if (a.size() != 100 || b.size() != 100) return {false, "iteration count differs from 100"};
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, (a[k] - b[k]).norm());
  return {worst <= 1e-10, fmt("max iterate gap %.3g", worst)};
}

Verdict truncation_metric() {
  const Feeder f = generate_radial_feeder(FeederSpec{});
  const auto model = build_linear_model(f.network, 1);
  const double single = truncation_error(model, truncate_model(model, AreaPartition::single(model.n_phases())));
  const double four = truncation_error(model, truncate_model(model, partition_contiguous(f.network, 4)));
  return {single == 0.0 && four > 0.0 && four < 0.15, fmt("single %.3g", single) + fmt(", 4 areas %.4f", four)};
}

Verdict decentralized_load_flow() {
  FeederSpec spec;
  const Feeder f = generate_radial_feeder(spec);
  const auto model = build_linear_model(f.network, 1);
  const auto part = partition_contiguous(f.network, 3);
  const auto tm = truncate_model(model, part);
  const Index p = model.n_phases();
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> load(-0.04, 0.0);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    RMatrix h(2 * p, 1);
    for (Index i = 0; i < 2 * p; ++i) h(i, 0) = load(rng);
    MessageBus bus(3, part.neighbors());
    const auto dist = assemble(decentralized_flow(tm, h, bus), p);
    const auto dense = predict(tm.model, h);
    worst = std::max(worst, (dist.v - dense.v).cwiseAbs().maxCoeff());
    worst = std::max(worst, (dist.magnitude - dense.magnitude).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("max gap %.3g", worst)};
}

Verdict linear_model_accuracy() {
  ExperimentConfig c = base_config();
  c.time_steps = 1;
  const auto s = build_model_files(c, false);
  const double mape = s.linear_accuracy.mape_magnitude;
  return {mape <= 2.0 && s.linear_magnitude_mape <= 2.0,
          fmt("phasor-model MAPE %.3f %%", mape) + fmt(", magnitude-model MAPE %.3f %%", s.linear_magnitude_mape)};
}

Verdict end_to_end() {
  const auto r = evaluate_experiment(estimation_config());
  keep_outcomes("estimation", r);
  const auto& s = r.summary;
  std::string detail = fmt("MAPE %.3f %%", s.mape_magnitude) + fmt(", angle MAE %.3f deg", s.mae_angle);
  if (s.ci_mape) detail += fmt(" (ci +-%.3f)", s.ci_mape->half_width);
  return {s.mape_magnitude < 1.5 && s.mae_angle < 0.5, detail};
}

Verdict time_step_trend() {
  ExperimentConfig c = base_config();
  c.runs = 5;
  c.admm.rank = 5;
  c.admm.mu = 100.0;
  c.admm.nu = 100.0;
  const auto sweep = run_sweep(c, SweepParameter::time_steps, {1, 5, 10}, false);
  bool ok = true;
  std::string detail = "MAPE";
  for (std::size_t k = 0; k < sweep.points.size(); ++k) {
    detail += fmt(" %.3f", sweep.points[k].report.mape_magnitude);
    if (k > 0 && sweep.points[k].report.mape_magnitude > sweep.points[k - 1].report.mape_magnitude) ok = false;
  }
  return {ok, detail + " for T = 1, 5, 10"};
}

Verdict certificate() {
  ExperimentConfig c = default_mu_config(1e-8);
  c.certify = true;
  c.runs = 3;
  const auto r = evaluate_experiment(c);
  keep_outcomes("certificate", r);
  bool ok = true;
  double worst_grad = 0.0, worst_trace = 0.0, worst_cs = 0.0, norm = 0.0;
  for (const auto& o : r.runs) {
    if (!o.completion.trace.converged || !o.certificate) {
      ok = false;
      continue;
    }
    const auto& cert = *o.certificate;
    const double scale = 1.0 + o.completion.factors.u.norm();
    worst_grad = std::max({worst_grad, cert.grad_u_norm / scale, cert.grad_v_norm / scale});
    worst_trace = std::max({worst_trace, cert.trace_residual_u, cert.trace_residual_v});
    worst_cs = std::max(worst_cs, cert.comp_slack_residual);
    norm = std::max(norm, cert.spectral_norm);
  }
  ok = ok && worst_grad <= 1e-5 && worst_trace <= 1e-6 && worst_cs <= 1e-6;

  c.runs = 1;
  const auto steps = certify_with_mu_reduction(c, 40, false);
  const bool certified = !steps.empty() && steps.back().report.theorem1_pass;
  std::string detail = fmt("scaled grad %.3g", worst_grad) + fmt(", trace %.3g", worst_trace) +
                       fmt(", comp slack %.3g", worst_cs) + fmt(", ||W|| %.12g", norm);
  if (!steps.empty()) detail += fmt(", passes at mu %.6g", steps.back().mu);
  return {ok && certified, detail};
}

Verdict convergence() {
  ExperimentConfig c = default_mu_config(1e-6);
  c.admm.max_iters = 500;
  const auto r = evaluate_experiment(c);
  keep_outcomes("convergence", r);
  const auto& t = r.runs.front().completion.trace;
  const double lo = *std::min_element(t.rmse.begin(), t.rmse.end());
  const double ratio = t.rmse.back() / lo;
  return {t.converged && t.iterations <= 500 && ratio <= 1.05,
          "iterations " + std::to_string(t.iterations) + fmt(", final/min RMSE %.4f", ratio)};
}

Verdict communication_ledger() {
  if (g_outcomes.empty()) return {false, "no decentralized runs recorded"};
  bool ok = true;
  Index worst_margin = -1;
  std::size_t checked = 0;
  for (const auto& [label, o] : g_outcomes) {
    const auto& ledger = o.completion.ledger;
    for (const auto& pair : o.comm) {
      for (int it = 0; it < o.completion.trace.iterations; ++it) {
        const Index measured = ledger.count(pair.a, pair.b, it);
        ++checked;
        if (measured != pair.counts.protocol_formula || measured >= pair.counts.full_exchange) ok = false;
      }
      const Index margin = pair.counts.full_exchange - pair.counts.protocol_formula;
      if (worst_margin < 0 || margin < worst_margin) worst_margin = margin;
    }
  }
  return {ok, std::to_string(checked) + " pair-iterations checked, smallest margin below full exchange " +
                  std::to_string(worst_margin)};
}

Verdict scheduling_determinism() {
  ExperimentConfig c = estimation_config();
  c.runs = 1;
  c.certify = true;
  const std::string reference = evaluate_experiment(c).payload_json;
  for (Seed s = 1; s <= 10; ++s) {
    c.schedule = ExecutionPolicy::shuffled(1000 + s);
    if (evaluate_experiment(c).payload_json != reference) return {false, "schedule " + std::to_string(s) + " differs"};
  }
  return {true, "10 shuffled schedules match the sequential payload"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "adjoint identity", 1.0, adjoint_identity},
      {2, "nuclear-norm characterization", 0.0, nuclear_norm_characterization},
      {3, "oracle equivalence", 10.0, oracle_equivalence},
      {4, "single-area equivalence", 0.0, single_area_equivalence},
      {5, "truncation metric", 1.0, truncation_metric},
      {6, "decentralized load flow", 0.0, decentralized_load_flow},
      {7, "linear-model accuracy", 5.0, linear_model_accuracy},
      {8, "end-to-end estimation", 120.0, end_to_end},
      {9, "time-step trend", 180.0, time_step_trend},
      {10, "optimality certificate", 0.0, certificate},
      {11, "convergence behavior", 0.0, convergence},
      {12, "communication ledger", 0.0, communication_ledger},
      {13, "scheduling determinism", 0.0, scheduling_determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs > c.limit_s) {
      v.pass = false;
      v.detail += fmt(" [over the %.0f s limit]", c.limit_s);
    }
    failed += !v.pass;
    std::printf("%s %2d %-30s %8.2fs  %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
