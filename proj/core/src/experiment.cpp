#include "gridmc/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridmc/error.hpp"
#include "gridmc/io.hpp"
#include "gridmc/linflow.hpp"
#include "gridmc/version.hpp"

namespace gridmc {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string version_string() { return kVersionString; }

void ExperimentConfig::validate() const {
  if (time_steps < 1) throw Error(ErrorCode::invalid_argument, "time steps must be >= 1");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorCode::invalid_argument, "fraction must lie in [0, 1]");
  if (noise_pct < 0.0) throw Error(ErrorCode::invalid_argument, "noise percent must be >= 0");
  if (areas < 0) throw Error(ErrorCode::invalid_argument, "areas must be >= 0");
  if (areas == 0 && !manifest) throw Error(ErrorCode::invalid_argument, "areas = 0 needs a manifest partition");
  if (runs < 1) throw Error(ErrorCode::invalid_argument, "runs must be >= 1");
  if (!manifest && feeder.n_buses < 2) throw Error(ErrorCode::invalid_argument, "feeder needs >= 2 buses");
  admm.validate();
  if (areas != 1 && !(admm.lambda > 0.0)) {
    throw Error(ErrorCode::unsupported_config, "decentralized runs require lambda > 0");
  }
}

namespace {

ojson complex_pair(cplx z) { return ojson::array({z.real(), z.imag()}); }

ojson config_json(const ExperimentConfig& c) {
  ojson j;
  if (c.manifest) {
    j["network"] = {{"manifest", c.manifest->string()}};
  } else {
    const auto& f = c.feeder;
    j["network"] = {{"generator",
                     {{"n_buses", f.n_buses},
                      {"branching", f.branching},
                      {"z_min", complex_pair(f.z_min)},
                      {"z_max", complex_pair(f.z_max)},
                      {"load_min", complex_pair(f.load_min)},
                      {"load_max", complex_pair(f.load_max)},
                      {"ramp", f.ramp},
                      {"process_noise", f.process_noise},
                      {"three_phase", f.three_phase},
                      {"phase_coupling", f.phase_coupling},
                      {"seed", f.seed}}}};
  }
  j["time_steps"] = c.time_steps;
  j["mask_policy"] = to_string(c.policy);
  j["fraction"] = c.fraction;
  j["noise_pct"] = c.noise_pct;
  j["areas"] = c.areas;
  j["admm"] = {{"mu", c.admm.mu},         {"nu", c.admm.nu},         {"gamma", c.admm.gamma},
               {"lambda", c.admm.lambda}, {"prox_c", c.admm.prox_c}, {"rank", c.admm.rank},
               {"max_iters", c.admm.max_iters}, {"tol", c.admm.tol}, {"seed", c.admm.seed}};
  j["runs"] = c.runs;
  j["seed"] = c.seed;
  j["certify"] = c.certify;
  return j;
}

ojson interval_json(const std::optional<Interval>& iv) {
  if (!iv) return nullptr;
  return {{"mean", iv->mean}, {"half_width", iv->half_width}};
}

ojson report_json(const EstimateReport& r) {
  ojson j = {{"mape_magnitude", r.mape_magnitude}, {"mae_angle", r.mae_angle}, {"rmse", r.rmse}, {"n_runs", r.n_runs}};
  if (r.n_runs >= 2) {
    j["ci95"] = {{"mape_magnitude", interval_json(r.ci_mape)},
                 {"mae_angle", interval_json(r.ci_angle)},
                 {"rmse", interval_json(r.ci_rmse)}};
  }
  return j;
}

ojson certificate_json(const CertificateReport& c) {
  return {{"mu", c.mu},
          {"spectral_norm", c.spectral_norm},
          {"theorem1_pass", c.theorem1_pass},
          {"power_iterations", c.power_iterations},
          {"grad_u_norm", c.grad_u_norm},
          {"grad_v_norm", c.grad_v_norm},
          {"trace_residuals", {c.trace_residual_u, c.trace_residual_v}},
          {"trace_balance", c.trace_balance},
          {"comp_slack_residual", c.comp_slack_residual},
          {"comp_slack_reduced", c.comp_slack_reduced},
          {"schur_min_eigenvalue", c.schur_min_eigenvalue}};
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Tracks written files so a failed command leaves nothing half-written.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_dir_) fs::remove(dir_, ec);
  }

  fs::path path(const std::string& name) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(path(name));
    if (!out) throw Error(ErrorCode::missing_file, "cannot write " + (dir_ / name).string());
    out << text;
  }
  void commit() { committed_ = true; }
  const std::vector<fs::path>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

struct BaseNetwork {
  NetworkModel network;
  LoadScenario loads;
  std::optional<AreaPartition> partition;
};

BaseNetwork base_network(const ExperimentConfig& config) {
  BaseNetwork b;
  if (config.manifest) {
    auto loaded = load_network(*config.manifest);
    if (loaded.loads.time_steps() < config.time_steps) {
      throw Error(ErrorCode::dimension_mismatch, "manifest has " + std::to_string(loaded.loads.time_steps()) +
                                                     " load steps, " + std::to_string(config.time_steps) +
                                                     " requested");
    }
    b.network = std::move(loaded.network);
    b.loads.s = loaded.loads.s.topRows(config.time_steps);
    b.partition = std::move(loaded.partition);
  } else {
    FeederSpec spec = config.feeder;
    spec.time_steps = config.time_steps;
    auto feeder = generate_radial_feeder(spec);
    b.network = std::move(feeder.network);
    b.loads = std::move(feeder.loads);
  }
  return b;
}

AreaPartition select_partition(const ExperimentConfig& config, const BaseNetwork& base) {
  if (config.areas == 0) return *base.partition;
  if (config.areas == 1) return AreaPartition::single(base.network.n_phases());
  return partition_contiguous(base.network, config.areas);
}

Seed mask_seed(const ExperimentConfig& config, int run) {
  return config.seed * 1000003ULL + static_cast<Seed>(run) * 7919ULL;
}

void write_trace(OutputSet& out, const ConvergenceTrace& trace) {
  std::vector<io::CsvRow> rows;
  for (int i = 0; i < trace.iterations; ++i) {
    rows.push_back({std::to_string(i + 1), io::format_double(trace.rmse[i]), io::format_double(trace.consensus[i]),
                    io::format_double(trace.objective[i]), io::format_double(trace.max_area_ms[i])});
  }
  io::write_csv(out.path("trace.csv"), {"iter", "rmse", "consensus", "objective", "max_area_ms"}, rows);
}

void write_spectrum(OutputSet& out, const RVector& sigma) {
  std::vector<io::CsvRow> rows;
  for (Index k = 0; k < sigma.size(); ++k) rows.push_back({std::to_string(k + 1), io::format_double(sigma(k))});
  io::write_csv(out.path("spectrum.csv"), {"index", "sigma"}, rows);
}

ojson comm_json(const std::vector<CommPairSummary>& comm) {
  ojson pairs = ojson::array();
  bool all_match = true;
  bool all_below = true;
  for (const auto& p : comm) {
    all_match = all_match && p.counts.measured == p.counts.protocol_formula;
    all_below = all_below && p.counts.measured < p.counts.full_exchange;
    pairs.push_back({{"pair", {p.a + 1, p.b + 1}},
                     {"measured_per_iteration", p.counts.measured},
                     {"protocol_formula", p.counts.protocol_formula},
                     {"paper_formula", p.counts.paper_formula},
                     {"full_exchange", p.counts.full_exchange}});
  }
  return {{"pairs", pairs}, {"matches_protocol", all_match}, {"below_full_exchange", all_below}};
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

ExperimentInstance prepare_instance(const ExperimentConfig& config, int run) {
  config.validate();
  BaseNetwork base = base_network(config);
  ExperimentInstance inst;
  inst.partition = select_partition(config, base);
  inst.network = std::move(base.network);
  inst.loads = std::move(base.loads);
  inst.v_true = solve_exact_flow_series(inst.network, inst.loads);
  inst.truth = build_matrix(inst.v_true, inst.loads.s);

  const Seed seed = mask_seed(config, run);
  const Index m = inst.truth.data.rows();
  const Index n = inst.truth.data.cols();
  inst.mask = sample_mask(m, n, config.fraction, config.policy, seed);
  inst.measured = add_noise(inst.truth, config.noise_pct, seed ^ 0x5bd1e995ULL);

  inst.model = build_linear_model(inst.network, config.time_steps);
  inst.truncated = truncate_model(inst.model, inst.partition);
  inst.problem.m = inst.measured.data;
  inst.problem.mask = inst.mask;
  inst.problem.partition = inst.partition;
  inst.problem.maps = build_area_maps(inst.truncated);
  return inst;
}

RunOutcome run_single(const ExperimentConfig& config, const ExperimentInstance& inst, int run) {
  RunOutcome out;
  out.run = run;
  out.mask_seed = mask_seed(config, run);
  out.truncation_error = truncation_error(inst.model, inst.truncated);
  out.low_observability = is_low_observability(inst.mask);

  RunOptions options;
  options.reference = inst.truth.data;
  options.policy = config.schedule;
  const bool central = inst.partition.n_areas == 1;
  out.completion = central ? run_centralized(inst.problem, config.admm, options)
                           : run_decentralized(inst.problem, config.admm, options);
  out.estimate = evaluate_estimate(voltage_phasors(out.completion.x), inst.v_true);

  if (config.certify) {
    const auto op = build_B_d(inst.mask, inst.measured.data, inst.problem.maps, config.admm.mu, config.admm.nu);
    out.certificate = certify(out.completion.factors.u, out.completion.factors.v, op, config.admm.mu);
  }

  if (!central) {
    const auto members = inst.partition.members();
    const bool flow = !inst.problem.maps.empty();
    for (auto [a, b] : inst.partition.adjacency) {
      CommShape shape;
      shape.m = inst.truth.data.rows();
      shape.r = out.completion.factors.rank();
      shape.time_steps = config.time_steps;
      shape.n_l = static_cast<Index>(members[a].size());
      shape.n_j = static_cast<Index>(members[b].size());
      shape.flow_terms = flow;
      out.comm.push_back({a, b, comm_count(out.completion.ledger, a, b, 0, shape)});
    }
  }
  return out;
}

namespace {

ExperimentResult evaluate_impl(const ExperimentConfig& config, OutputSet* files) {
  config.validate();
  ExperimentResult result;
  std::vector<EstimateReport> reports;
  ojson runs = ojson::array();
  for (int r = 0; r < config.runs; ++r) {
    const auto inst = prepare_instance(config, r);
    auto outcome = run_single(config, inst, r);
    reports.push_back(outcome.estimate);

    const auto& trace = outcome.completion.trace;
    ojson jr = {{"run", r},
                {"mask_seed", outcome.mask_seed},
                {"observed_entries", inst.mask.size()},
                {"low_observability", outcome.low_observability},
                {"truncation_error", outcome.truncation_error},
                {"iterations", trace.iterations},
                {"converged", trace.converged},
                {"final_rmse", trace.rmse.empty() ? 0.0 : trace.rmse.back()},
                {"final_objective", trace.objective.empty() ? 0.0 : trace.objective.back()},
                {"estimate", report_json(outcome.estimate)}};
    if (outcome.certificate) jr["certificate"] = certificate_json(*outcome.certificate);
    if (!outcome.comm.empty()) jr["comm"] = comm_json(outcome.comm);
    runs.push_back(std::move(jr));

    if (files && r == 0) {
      write_trace(*files, trace);
      write_spectrum(*files, sv_spectrum(inst.truth.data));
      outcome.completion.ledger.write_csv(files->path("comm.csv"));
      write_matrix_csv(files->path("measurement.csv"), inst.measured.data);
      write_mask_csv(files->path("mask.csv"), inst.mask);
    }
    result.runs.push_back(std::move(outcome));
  }
  result.summary = aggregate(reports);

  ojson payload;
  payload["version"] = version_string();
  payload["config"] = config_json(config);
  payload["summary"] = report_json(result.summary);
  payload["runs"] = std::move(runs);
  result.payload_json = payload.dump(2);

  if (files) {
    ojson doc;
    doc["payload"] = payload;
    doc["metadata"] = {{"timestamp", timestamp()}};
    files->write_text("results.json", doc.dump(2) + "\n");
    result.files = files->files();
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
  OutputSet files(config.out);
  auto result = evaluate_impl(config, &files);
  files.commit();
  return result;
}

ExperimentResult evaluate_experiment(const ExperimentConfig& config) { return evaluate_impl(config, nullptr); }

SweepParameter parse_sweep_parameter(const std::string& text) {
  if (text == "fraction") return SweepParameter::fraction;
  if (text == "time-steps") return SweepParameter::time_steps;
  if (text == "areas") return SweepParameter::areas;
  throw Error(ErrorCode::invalid_argument, "unknown sweep parameter '" + text + "'");
}

const char* to_string(SweepParameter p) noexcept {
  switch (p) {
    case SweepParameter::fraction: return "fraction";
    case SweepParameter::time_steps: return "time-steps";
    case SweepParameter::areas: return "areas";
  }
  return "unknown";
}

bool smoothed_nonincreasing(const std::vector<double>& values, double slack) {
  if (values.size() < 2) return true;
  std::vector<double> smooth(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(values.size() - 1, i + 1);
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += values[k];
    smooth[i] = sum / static_cast<double>(hi - lo + 1);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i)
    if (smooth[i] > smooth[i - 1] + slack) return false;
  return true;
}

SweepResult run_sweep(const ExperimentConfig& config, SweepParameter parameter, const std::vector<double>& values,
                      bool write_files) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "sweep needs at least one value");
  std::optional<OutputSet> files;
  if (write_files) {
    if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
    files.emplace(config.out);
  }
  SweepResult result;
  result.parameter = parameter;
  ojson points = ojson::array();
  std::vector<double> mapes;
  for (double value : values) {
    ExperimentConfig c = config;
    c.certify = false;
    switch (parameter) {
      case SweepParameter::fraction: c.fraction = value; break;
      case SweepParameter::time_steps: c.time_steps = static_cast<Index>(value); break;
      case SweepParameter::areas: c.areas = static_cast<int>(value); break;
    }
    const auto r = evaluate_experiment(c);
    result.points.push_back({value, r.summary});
    mapes.push_back(r.summary.mape_magnitude);
    points.push_back({{"value", value}, {"estimate", report_json(r.summary)}});
  }
  result.mape_nonincreasing = smoothed_nonincreasing(mapes);

  if (files) {
    std::vector<io::CsvRow> rows;
    for (const auto& p : result.points) {
      const auto& s = p.report;
      rows.push_back({io::format_double(p.value), io::format_double(s.mape_magnitude),
                      io::format_double(s.ci_mape ? s.ci_mape->half_width : 0.0), io::format_double(s.mae_angle),
                      io::format_double(s.ci_angle ? s.ci_angle->half_width : 0.0), io::format_double(s.rmse),
                      std::to_string(s.n_runs)});
    }
    io::write_csv(files->path("sweep.csv"),
                  {to_string(parameter), "mape", "mape_ci95", "mae_angle", "mae_angle_ci95", "rmse", "runs"}, rows);
    ojson payload;
    payload["version"] = version_string();
    payload["config"] = config_json(config);
    payload["parameter"] = to_string(parameter);
    payload["points"] = points;
    payload["trend"] = {{"metric", "mape_magnitude"},
                        {"smoothing", "3-point moving average"},
                        {"nonincreasing", result.mape_nonincreasing}};
    ojson doc = {{"payload", payload}, {"metadata", {{"timestamp", timestamp()}}}};
    files->write_text("sweep.json", doc.dump(2) + "\n");
    files->commit();
  }
  return result;
}

std::vector<CertifyStep> certify_with_mu_reduction(const ExperimentConfig& config, int max_halvings,
                                                   bool write_files) {
  std::optional<OutputSet> files;
  if (write_files) {
    if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
    files.emplace(config.out);
  }
  ExperimentConfig c = config;
  c.certify = true;
  const auto inst = prepare_instance(c, 0);
  std::vector<CertifyStep> steps;
  ojson jsteps = ojson::array();
  for (int h = 0; h <= max_halvings; ++h) {
    CompletionProblem problem = inst.problem;
    RunOptions options;
    options.policy = c.schedule;
    const bool central = inst.partition.n_areas == 1;
    auto res = central ? run_centralized(problem, c.admm, options) : run_decentralized(problem, c.admm, options);
    const auto op = build_B_d(inst.mask, inst.measured.data, problem.maps, c.admm.mu, c.admm.nu);
    CertifyStep step{c.admm.mu, certify(res.factors.u, res.factors.v, op, c.admm.mu), res.trace.iterations};
    jsteps.push_back({{"mu", step.mu}, {"iterations", step.iterations}, {"certificate", certificate_json(step.report)}});
    steps.push_back(step);
    if (step.report.theorem1_pass) break;
    c.admm.mu *= 0.5;
  }
  if (files) {
    ojson payload = {{"version", version_string()}, {"config", config_json(config)}, {"steps", jsteps}};
    ojson doc = {{"payload", payload}, {"metadata", {{"timestamp", timestamp()}}}};
    files->write_text("certificate.json", doc.dump(2) + "\n");
    files->commit();
  }
  return steps;
}

RVector experiment_spectrum(const ExperimentConfig& config, bool write_files) {
  config.validate();
  const BaseNetwork base = base_network(config);
  const CMatrix v = solve_exact_flow_series(base.network, base.loads);
  const RVector sigma = sv_spectrum(build_matrix(v, base.loads.s).data);
  if (write_files) {
    if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
    OutputSet files(config.out);
    write_spectrum(files, sigma);
    files.commit();
  }
  return sigma;
}

ModelSummary build_model_files(const ExperimentConfig& config, bool write_files) {
  config.validate();
  const BaseNetwork base = base_network(config);
  const AreaPartition part = select_partition(config, base);
  const auto model = build_linear_model(base.network, config.time_steps);
  const auto trunc = truncate_model(model, part);
  const CMatrix v = solve_exact_flow_series(base.network, base.loads);
  const RMatrix h = stack_injections(base.loads.s);

  ModelSummary summary;
  summary.truncation_error = truncation_error(model, trunc);
  const auto full_pred = predict(model, h);
  summary.linear_accuracy = evaluate_estimate(full_pred.v, v);
  summary.truncated_accuracy = evaluate_estimate(predict(trunc.model, h).v, v);
  summary.linear_magnitude_mape =
      100.0 * ((full_pred.magnitude - v.cwiseAbs()).cwiseAbs().array() / v.cwiseAbs().array()).mean();

  if (write_files) {
    if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
    OutputSet files(config.out);
    io::write_matrix_market(files.path("n.mtx"), model.n_mat);
    io::write_matrix_market(files.path("k.mtx"), model.k_mat);
    io::write_matrix_market(files.path("n_truncated.mtx"), trunc.model.n_mat);
    io::write_matrix_market(files.path("w.mtx"), CMatrix(model.w));
    ojson areas = ojson::array();
    for (const auto& mem : part.members()) areas.push_back(mem.size());
    ojson payload = {{"version", version_string()},
                     {"config", config_json(config)},
                     {"n_phases", model.n_phases()},
                     {"area_sizes", areas},
                     {"truncation_error", summary.truncation_error},
                     {"linear_model", report_json(summary.linear_accuracy)},
                     {"linear_magnitude_mape", summary.linear_magnitude_mape},
                     {"truncated_model", report_json(summary.truncated_accuracy)}};
    ojson doc = {{"payload", payload}, {"metadata", {{"timestamp", timestamp()}}}};
    files.write_text("model.json", doc.dump(2) + "\n");
    files.commit();
  }
  return summary;
}

fs::path write_feeder(const ExperimentConfig& config) {
  if (config.out.empty()) throw Error(ErrorCode::invalid_argument, "an output directory is required");
  FeederSpec spec = config.feeder;
  spec.time_steps = config.time_steps;
  const auto feeder = generate_radial_feeder(spec);
  const AreaPartition part = config.areas <= 1 ? AreaPartition::single(feeder.network.n_phases())
                                               : partition_contiguous(feeder.network, config.areas);
  return save_network(config.out, feeder.network, feeder.loads, part);
}

}  // namespace gridmc
