#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "gridmc/datamatrix.hpp"
#include "gridmc/gridmodel.hpp"
#include "gridmc/linflow.hpp"
#include "gridmc/simnet.hpp"
#include "gridmc/types.hpp"

namespace gridmc {

struct AdmmConfig {
  double mu = 10.0;
  double nu = 1.0;
  double gamma = 1.0;
  double lambda = 1.0;
  double prox_c = 0.1;
  Index rank = 0;  // 0 selects min(10, m)
  int max_iters = 500;
  double tol = 1e-6;
  Seed seed = 0;

  void validate() const;
  Index resolved_rank(Index m, Index n) const;
};

struct FactorPair {
  RMatrix u;  // m x r
  RMatrix v;  // r x n

  Index rank() const { return u.cols(); }
  RMatrix product() const { return u * v; }
};

struct ConvergenceTrace {
  std::vector<double> rmse;  // empty entries are NaN when no reference is supplied
  std::vector<double> objective;
  std::vector<double> consensus;
  std::vector<double> max_area_ms;
  int iterations = 0;
  bool converged = false;
};

// Data shared by both solvers. An empty maps member drops the load-flow penalty.
struct CompletionProblem {
  RMatrix m;  // 5T x |P| measured data (only masked entries are used)
  ObservationMask mask;
  AreaPartition partition;
  AreaMaps maps;

  Index rows() const { return m.rows(); }
  Index cols() const { return m.cols(); }
  void validate() const;
};

// Static per-area data of the local subproblems.
struct AreaProblem {
  int area = 0;
  int n_areas = 1;
  std::vector<Index> phases;
  std::vector<int> neighbors;
  Index m = 0;
  Index n = 0;  // local column count
  RMatrix masked_data;                         // P_Omega(M) restricted to local columns
  std::vector<std::vector<Index>> obs_by_row;  // local columns observed in each row
  std::vector<std::vector<Index>> obs_by_col;  // rows observed in each local column

  bool flow = false;
  FlowCoupling self;                     // E_ll
  std::map<int, FlowCoupling> incoming;  // E_lj for j in neighbors
  std::map<int, FlowCoupling> outgoing;  // E_kl for k in neighbors (owned by k)
  RMatrix target;                        // f_l
  FlowCoupling::Gram gram;               // nu E_ll'E_ll + lambda sum_k E_kl'E_kl

  Index time_steps() const { return m / 5; }
};

std::vector<AreaProblem> build_area_problems(const CompletionProblem& problem, const AdmmConfig& config);

struct AreaState {
  RMatrix u;  // m x r
  RMatrix v;  // r x n_l
  std::map<int, RMatrix> s;       // consensus copies, m x r
  std::map<int, RMatrix> gamma;   // scaled duals of U_l = S_lj
  std::map<int, RMatrix> q;       // 3T x n_l
  std::map<int, RMatrix> lambda;  // scaled duals of q_lj = E_lj(X_j)
  // Received from neighbors.
  std::map<int, RMatrix> u_nb;
  std::map<int, RMatrix> v_nb;
  std::map<int, RMatrix> g_in;  // E_kl'(q_kl + Lambda_kl), 5T x n_l (power rows only)
};

// Linear term of the local quadratic in X_l.
RMatrix local_linear_term(const AreaProblem& area, const AreaState& state, const AdmmConfig& config);

RMatrix update_u(const AreaProblem& area, const AreaState& state, const AdmmConfig& config);
RMatrix update_v(const AreaProblem& area, const AreaState& state, const AdmmConfig& config);
RMatrix update_s(const RMatrix& u_l, const RMatrix& u_j);
// e_nb[j] = E_lj(X_j), e_self = E_ll(X_l).
std::map<int, RMatrix> update_q(const AreaProblem& area, const AreaState& state, const RMatrix& e_self,
                                const std::map<int, RMatrix>& e_nb, const AdmmConfig& config);
void update_duals(AreaState& state, const std::map<int, RMatrix>& e_nb);

// Scaled augmented Lagrangian summed over areas.
double augmented_lagrangian(const std::vector<AreaProblem>& areas, const std::vector<AreaState>& states,
                            const AdmmConfig& config);
// Area-split objective with the 1/n_A share of the U regularizer.
double decentralized_objective(const std::vector<AreaProblem>& areas, const std::vector<AreaState>& states,
                               const AdmmConfig& config);
// Factored objective of the full problem.
double objective_factored(const RMatrix& u, const RMatrix& v, const RMatrix& m, const ObservationMask& mask,
                          const AreaMaps& maps, double mu, double nu);

FactorPair init_factors(const RMatrix& m, const ObservationMask& mask, Index rank, Seed seed);

struct RunOptions {
  std::optional<RMatrix> reference;  // ground truth for the RMSE trace
  ExecutionPolicy policy = ExecutionPolicy::sequential();
  std::optional<FactorPair> init;
  bool stop_on_tol = true;
};

class DecentralizedSolver {
 public:
  DecentralizedSolver(const CompletionProblem& problem, const AdmmConfig& config, const RunOptions& options = {});

  // One outer iteration: local U/V solves, factor exchange, q/S/dual updates,
  // q-term exchange. Returns the relative change of the assembled estimate.
  double iterate();

  RMatrix assembled() const;
  FactorPair factors() const;  // mean U over areas with the assembled V
  double consensus_residual() const;
  double objective() const;
  double lagrangian() const;
  int iteration() const { return iteration_; }
  double last_max_area_ms() const { return last_ms_; }
  const std::vector<AreaState>& states() const { return states_; }
  const std::vector<AreaProblem>& areas() const { return areas_; }
  const MessageBus& bus() const { return bus_; }
  const AdmmConfig& config() const { return config_; }

 private:
  const CompletionProblem* problem_;
  AdmmConfig config_;
  std::vector<AreaProblem> areas_;
  std::vector<AreaState> states_;
  MessageBus bus_;
  int iteration_ = 0;
  double last_ms_ = 0.0;
  RMatrix x_;
};

// Same local updates for a single area without a message bus.
class CentralizedSolver {
 public:
  CentralizedSolver(const CompletionProblem& problem, const AdmmConfig& config, const RunOptions& options = {});

  double iterate();
  RMatrix assembled() const { return state_.u * state_.v; }
  FactorPair factors() const { return {state_.u, state_.v}; }
  double objective() const;
  int iteration() const { return iteration_; }
  double last_ms() const { return last_ms_; }
  const AreaState& state() const { return state_; }

 private:
  const CompletionProblem* problem_;
  AdmmConfig config_;
  AreaProblem area_;
  AreaState state_;
  int iteration_ = 0;
  double last_ms_ = 0.0;
  RMatrix x_;
};

struct CompletionResult {
  RMatrix x;  // assembled estimate, 5T x |P|
  FactorPair factors;
  ConvergenceTrace trace;
  CommLedger ledger;
};

using IterationObserver = std::function<void(int iteration, const RMatrix& x)>;

CompletionResult run_decentralized(const CompletionProblem& problem, const AdmmConfig& config,
                                   const RunOptions& options = {}, const IterationObserver& observer = {});

// Problem with a single area; the flow maps (if any) must describe one area.
CompletionResult run_centralized(const CompletionProblem& problem, const AdmmConfig& config,
                                 const RunOptions& options = {}, const IterationObserver& observer = {});

// Single-area problem over the full (untruncated) linear model, or without a
// load-flow penalty when model is null.
CompletionProblem centralized_problem(const RMatrix& m, const ObservationMask& mask, const LinearFlowModel* model);

// Proximal gradient with singular value soft-thresholding on
// ||X||_* + mu/2 ||P_Omega(X - M)||^2, step 1/mu.
RMatrix svt_oracle(const RMatrix& m, const ObservationMask& mask, double mu, int max_iters = 200000);
double nuclear_objective(const RMatrix& x, const RMatrix& m, const ObservationMask& mask, double mu);
RMatrix singular_value_shrink(const RMatrix& x, double threshold);

}  // namespace gridmc
