#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridmc/error.hpp"
#include "gridmc/experiment.hpp"

namespace {

using gridmc::ExperimentConfig;

struct CommonOptions {
  std::string manifest;
  int buses = 33;
  double branching = gridmc::FeederSpec{}.branching;
  unsigned long long feeder_seed = gridmc::FeederSpec{}.seed;
  bool three_phase = false;
  std::string policy = "scada";
  std::string schedule = "sequential";
  unsigned long long schedule_seed = 0;
  bool no_certify = false;
};

void add_network_flags(CLI::App* cmd, ExperimentConfig& cfg, CommonOptions& opt) {
  cmd->add_option("--manifest", opt.manifest, "JSON network manifest (overrides the generator)");
  cmd->add_option("--buses", opt.buses, "generated feeder size including the slack bus")->capture_default_str();
  cmd->add_option("--branching", opt.branching, "probability of attaching a bus to a random earlier bus")
      ->capture_default_str();
  cmd->add_option("--feeder-seed", opt.feeder_seed, "generator seed")->capture_default_str();
  cmd->add_flag("--three-phase", opt.three_phase, "generate a coupled three-phase feeder");
  cmd->add_option("--time-steps", cfg.time_steps, "time steps T")->capture_default_str();
  cmd->add_option("--areas", cfg.areas, "number of contiguous areas (0 keeps the manifest partition)")
      ->capture_default_str();
}

void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg, CommonOptions& opt) {
  add_network_flags(cmd, cfg, opt);
  cmd->add_option("--policy", opt.policy, "mask policy: scada or uniform")->capture_default_str();
  cmd->add_option("--fraction", cfg.fraction, "fraction of eligible entries observed")->capture_default_str();
  cmd->add_option("--noise-pct", cfg.noise_pct, "relative measurement noise in percent")->capture_default_str();
  cmd->add_option("--rank", cfg.admm.rank, "factor rank r (0 selects min(10, m))")->capture_default_str();
  cmd->add_option("--mu", cfg.admm.mu, "data fidelity weight")->capture_default_str();
  cmd->add_option("--nu", cfg.admm.nu, "load-flow penalty weight")->capture_default_str();
  cmd->add_option("--gamma", cfg.admm.gamma, "consensus penalty")->capture_default_str();
  cmd->add_option("--lambda", cfg.admm.lambda, "coupling-constraint penalty")->capture_default_str();
  cmd->add_option("--prox-c", cfg.admm.prox_c, "proximal weight c")->capture_default_str();
  cmd->add_option("--max-iters", cfg.admm.max_iters, "iteration cap")->capture_default_str();
  cmd->add_option("--tol", cfg.admm.tol, "stopping tolerance")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "base seed for masks and noise")->capture_default_str();
  cmd->add_option("--runs", cfg.runs, "number of seeded runs")->capture_default_str();
  cmd->add_option("--schedule", opt.schedule, "worker schedule: sequential, shuffled or threaded")
      ->capture_default_str();
  cmd->add_option("--schedule-seed", opt.schedule_seed, "seed of the shuffled schedule")->capture_default_str();
}

void finalize(ExperimentConfig& cfg, const CommonOptions& opt) {
  if (!opt.manifest.empty()) cfg.manifest = opt.manifest;
  cfg.feeder.n_buses = opt.buses;
  cfg.feeder.branching = opt.branching;
  cfg.feeder.seed = opt.feeder_seed;
  cfg.feeder.three_phase = opt.three_phase;
  cfg.policy = gridmc::parse_mask_policy(opt.policy);
  cfg.admm.seed = cfg.seed;
  cfg.certify = !opt.no_certify;
  if (opt.schedule == "sequential") {
    cfg.schedule = gridmc::ExecutionPolicy::sequential();
  } else if (opt.schedule == "shuffled") {
    cfg.schedule = gridmc::ExecutionPolicy::shuffled(opt.schedule_seed);
  } else if (opt.schedule == "threaded") {
    cfg.schedule = gridmc::ExecutionPolicy::threaded();
  } else {
    throw gridmc::Error(gridmc::ErrorCode::invalid_argument, "unknown schedule '" + opt.schedule + "'");
  }
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw gridmc::Error(gridmc::ErrorCode::parse_error, "bad sweep value '" + item + "'");
    }
  }
  return out;
}

void print_report(const gridmc::EstimateReport& r) {
  std::printf("mape_magnitude %.6g %%\nmae_angle %.6g deg\nrmse %.6g\n", r.mape_magnitude, r.mae_angle, r.rmse);
  if (r.ci_mape) {
    std::printf("ci95 mape +-%.3g, angle +-%.3g (n=%d)\n", r.ci_mape->half_width, r.ci_angle->half_width, r.n_runs);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridmc: distribution-system state estimation by decentralized matrix completion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gridmc::version_string());

  ExperimentConfig cfg;
  CommonOptions opt;
  std::string out;

  auto* gen = app.add_subcommand("gen-feeder", "generate a radial feeder and write a manifest");
  add_network_flags(gen, cfg, opt);
  gen->add_option("--out", out, "output directory")->required();

  auto* model = app.add_subcommand("build-model", "build the linear flow model and report truncation accuracy");
  add_network_flags(model, cfg, opt);
  model->add_option("--out", out, "output directory")->required();

  auto* run = app.add_subcommand("run", "run seeded estimation experiments");
  add_experiment_flags(run, cfg, opt);
  run->add_flag("--no-certify", opt.no_certify, "skip the optimality certificate");
  run->add_option("--out", out, "output directory")->required();

  std::string param = "fraction";
  std::string values = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  auto* sweep = app.add_subcommand("sweep", "sweep one parameter and report the MAPE trend");
  add_experiment_flags(sweep, cfg, opt);
  sweep->add_option("--param", param, "fraction, time-steps or areas")->capture_default_str();
  sweep->add_option("--values", values, "comma-separated values")->capture_default_str();
  sweep->add_option("--out", out, "output directory")->required();

  int halvings = 40;
  auto* cert = app.add_subcommand("certify", "run once and halve mu until the global-optimality test passes");
  add_experiment_flags(cert, cfg, opt);
  cert->add_option("--max-halvings", halvings, "limit on mu reductions")->capture_default_str();
  cert->add_option("--out", out, "output directory")->required();

  auto* spec = app.add_subcommand("spectrum", "singular values of the fully observed data matrix");
  add_network_flags(spec, cfg, opt);
  spec->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(cfg, opt);
    cfg.out = out;
    if (*gen) {
      std::cout << gridmc::write_feeder(cfg).string() << '\n';
    } else if (*model) {
      const auto s = gridmc::build_model_files(cfg);
      std::printf("truncation_error %.6g\nlinear_mape %.6g %%\ntruncated_mape %.6g %%\n", s.truncation_error,
                  s.linear_accuracy.mape_magnitude, s.truncated_accuracy.mape_magnitude);
    } else if (*run) {
      const auto r = gridmc::run_experiment(cfg);
      print_report(r.summary);
      for (const auto& o : r.runs) {
        std::printf("run %d: iterations %d converged %s", o.run, o.completion.trace.iterations,
                    o.completion.trace.converged ? "yes" : "no");
        if (o.certificate) {
          std::printf(" spectral_norm %.9g theorem1 %s", o.certificate->spectral_norm,
                      o.certificate->theorem1_pass ? "pass" : "fail");
        }
        std::printf("\n");
      }
    } else if (*sweep) {
      const auto r = gridmc::run_sweep(cfg, gridmc::parse_sweep_parameter(param), parse_values(values));
      for (const auto& p : r.points) {
        std::printf("%s=%g mape %.6g %% angle %.6g deg\n", param.c_str(), p.value, p.report.mape_magnitude,
                    p.report.mae_angle);
      }
      std::printf("trend nonincreasing: %s\n", r.mape_nonincreasing ? "yes" : "no");
    } else if (*cert) {
      const auto steps = gridmc::certify_with_mu_reduction(cfg, halvings);
      for (const auto& s : steps) {
        std::printf("mu %.6g: spectral_norm %.12g grad %.3g/%.3g theorem1 %s\n", s.mu, s.report.spectral_norm,
                    s.report.grad_u_norm, s.report.grad_v_norm, s.report.theorem1_pass ? "pass" : "fail");
      }
      if (!steps.back().report.theorem1_pass) return 3;
    } else if (*spec) {
      const auto sigma = gridmc::experiment_spectrum(cfg);
      std::printf("top-5 energy fraction %.6f\n",
                  sigma.head(std::min<gridmc::Index>(5, sigma.size())).squaredNorm() / sigma.squaredNorm());
    }
  } catch (const gridmc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
