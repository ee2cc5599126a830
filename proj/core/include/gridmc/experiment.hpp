#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridmc/certificate.hpp"
#include "gridmc/completion.hpp"
#include "gridmc/datamatrix.hpp"
#include "gridmc/gridmodel.hpp"
#include "gridmc/metrics.hpp"
#include "gridmc/simnet.hpp"

namespace gridmc {

struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;  // otherwise the generator spec is used
  FeederSpec feeder;
  Index time_steps = 5;
  MaskPolicy policy = MaskPolicy::scada;
  double fraction = 0.5;
  double noise_pct = 1.0;
  int areas = 1;  // 0 keeps the manifest partition
  AdmmConfig admm;
  int runs = 1;
  Seed seed = 1;
  bool certify = true;
  ExecutionPolicy schedule = ExecutionPolicy::sequential();  // not part of the result payload
  std::filesystem::path out;

  void validate() const;
};

// Everything that defines one instance before the solver runs.
struct ExperimentInstance {
  NetworkModel network;
  LoadScenario loads;
  AreaPartition partition;
  CMatrix v_true;          // T x |P|
  MeasurementMatrix truth; // noiseless
  MeasurementMatrix measured;
  ObservationMask mask;
  LinearFlowModel model;
  TruncatedFlowModel truncated;
  CompletionProblem problem;
};

ExperimentInstance prepare_instance(const ExperimentConfig& config, int run);

struct CommPairSummary {
  int a = 0;
  int b = 0;
  CommComparison counts;
};

struct RunOutcome {
  int run = 0;
  Seed mask_seed = 0;
  EstimateReport estimate;
  std::optional<CertificateReport> certificate;
  CompletionResult completion;
  std::vector<CommPairSummary> comm;
  double truncation_error = 0.0;
  bool low_observability = false;
};

RunOutcome run_single(const ExperimentConfig& config, const ExperimentInstance& instance, int run);

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  EstimateReport summary;
  std::string payload_json;  // deterministic part of results.json
  std::vector<std::filesystem::path> files;
};

// Runs all seeds and writes results.json, trace.csv, spectrum.csv, comm.csv,
// measurement.csv and mask.csv into config.out. Removes partial output on failure.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Same computation without touching the filesystem.
ExperimentResult evaluate_experiment(const ExperimentConfig& config);

enum class SweepParameter { fraction, time_steps, areas };

SweepParameter parse_sweep_parameter(const std::string& text);
const char* to_string(SweepParameter p) noexcept;

struct SweepPoint {
  double value = 0.0;
  EstimateReport report;
};

struct SweepResult {
  SweepParameter parameter = SweepParameter::fraction;
  std::vector<SweepPoint> points;
  bool mape_nonincreasing = false;  // after a 3-point moving average
};

SweepResult run_sweep(const ExperimentConfig& config, SweepParameter parameter, const std::vector<double>& values,
                      bool write_files = true);
bool smoothed_nonincreasing(const std::vector<double>& values, double slack = 0.0);

struct CertifyStep {
  double mu = 0.0;
  CertificateReport report;
  int iterations = 0;
};

// Runs the configured problem, then halves mu until the Theorem 1 condition
// holds or max_halvings is reached.
std::vector<CertifyStep> certify_with_mu_reduction(const ExperimentConfig& config, int max_halvings = 40,
                                                   bool write_files = true);

// Singular values of the fully observed noiseless data matrix.
RVector experiment_spectrum(const ExperimentConfig& config, bool write_files = true);

struct ModelSummary {
  double truncation_error = 0.0;
  EstimateReport linear_accuracy;     // centralized linear model vs exact flow
  EstimateReport truncated_accuracy;  // truncated linear model vs exact flow
  double linear_magnitude_mape = 0.0;  // |w| + K h against exact magnitudes, percent
};

ModelSummary build_model_files(const ExperimentConfig& config, bool write_files = true);

std::filesystem::path write_feeder(const ExperimentConfig& config);

std::string config_to_json(const ExperimentConfig& config);
std::string version_string();

}  // namespace gridmc
