#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gridmc/types.hpp"

namespace gridmc {

struct PhaseEntry {
  std::string bus_id;
  char phase = 'a';  // one of a, b, c

  bool operator==(const PhaseEntry&) const = default;
};

// Non-slack bus-phases in matrix-column order.
struct PhaseIndex {
  std::vector<PhaseEntry> entries;
  int slack_phases = 1;

  Index size() const { return static_cast<Index>(entries.size()); }
  void validate() const;
};

struct NetworkModel {
  CMatrix y_ll;  // |P| x |P|
  CMatrix y_l0;  // |P| x n_slack
  CVector v0;    // n_slack
  PhaseIndex index;

  Index n_phases() const { return y_ll.rows(); }
  // Throws on inconsistent shapes or a singular y_ll.
  void validate() const;
};

struct LoadScenario {
  CMatrix s;  // T x |P| injections (negative real part for consumption)

  Index time_steps() const { return s.rows(); }
};

// Areas are 0-based in memory; files use 1-based ids.
struct AreaPartition {
  std::vector<int> assignment;  // phase -> area
  int n_areas = 0;
  std::vector<std::pair<int, int>> adjacency;  // unordered, stored with first < second

  static AreaPartition single(Index n_phases);

  bool adjacent(int a, int b) const;
  std::vector<std::vector<int>> neighbors() const;       // sorted per area
  std::vector<std::vector<Index>> members() const;       // sorted phase indices per area
  void validate(Index n_phases) const;
};

struct LoadedNetwork {
  NetworkModel network;
  LoadScenario loads;
  AreaPartition partition;
};

// Reads a JSON manifest; relative paths resolve against the manifest's directory.
LoadedNetwork load_network(const std::filesystem::path& manifest_path);

// Writes matrices, CSV tables and manifest.json into dir (created if needed).
std::filesystem::path save_network(const std::filesystem::path& dir, const NetworkModel& net,
                                   const LoadScenario& loads, const AreaPartition& partition);

struct FeederSpec {
  int n_buses = 33;  // including the slack bus
  double branching = 0.5;
  cplx z_min{0.015, 0.015};
  cplx z_max{0.06, 0.06};
  cplx load_min{0.0075, 0.003};
  cplx load_max{0.03, 0.015};
  Index time_steps = 1;
  double ramp = 0.02;           // relative load growth per time step
  double process_noise = 0.01;  // relative std of per-step load fluctuation
  bool three_phase = false;
  double phase_coupling = 0.3;  // mutual/self impedance ratio in 3-phase mode
  Seed seed = 3;
};

struct Feeder {
  NetworkModel network;
  LoadScenario loads;
  std::vector<int> parent;  // parent[k] for bus k >= 1; parent[0] = -1 (slack)
};

Feeder generate_radial_feeder(const FeederSpec& spec);

// Loads for an existing network following the generator's load process.
LoadScenario generate_loads(const NetworkModel& net, const FeederSpec& spec);

// Splits buses into n_areas connected groups of similar phase count. The
// first area holds the slack-connected bus.
AreaPartition partition_contiguous(const NetworkModel& net, int n_areas);

struct FlowOptions {
  int max_iters = 100;
  double tol = 1e-10;
};

struct FlowSolution {
  CVector v;
  int iterations = 0;
  double residual = 0.0;
};

// Fixed-point iteration v <- w + Y_LL^{-1} diag(conj v)^{-1} conj s started at w.
FlowSolution solve_exact_flow(const NetworkModel& net, const CVector& s, FlowOptions options = {});

// Row t of the result solves the flow for row t of loads.s.
CMatrix solve_exact_flow_series(const NetworkModel& net, const LoadScenario& loads,
                                FlowOptions options = {});

// No-load voltage w = -Y_LL^{-1} Y_L0 v0.
CVector no_load_voltage(const NetworkModel& net);

}  // namespace gridmc
