#pragma once

#include <array>
#include <map>
#include <vector>

#include "gridmc/gridmodel.hpp"
#include "gridmc/simnet.hpp"
#include "gridmc/types.hpp"

namespace gridmc {

// v ~ w + N h and |v| ~ |w| + K h with h = [Re s; Im s]. Blocks are shared by
// all time steps.
struct LinearFlowModel {
  CMatrix n_mat;  // |P| x 2|P|
  RMatrix k_mat;  // |P| x 2|P|
  CVector w;      // |P|
  Index time_steps = 1;

  Index n_phases() const { return w.size(); }
};

struct TruncatedFlowModel {
  LinearFlowModel model;  // entries outside own/neighbor area blocks are zero
  AreaPartition partition;
};

struct LinearPrediction {
  CMatrix v;          // T x |P|
  RMatrix magnitude;  // T x |P|
};

LinearFlowModel build_linear_model(const NetworkModel& net, Index time_steps);
TruncatedFlowModel truncate_model(const LinearFlowModel& model, const AreaPartition& partition);
double truncation_error(const LinearFlowModel& full, const LinearFlowModel& truncated);
double truncation_error(const LinearFlowModel& full, const TruncatedFlowModel& truncated);

// h is 2|P| x T (column t = [Re s^t; Im s^t]).
LinearPrediction predict(const LinearFlowModel& model, const RMatrix& h);
RMatrix stack_injections(const CMatrix& s);  // T x |P| -> 2|P| x T

// Contribution of one area's injections at every phase it influences.
struct FlowTerm {
  CVector phasor;     // T entries: sum_j N_ij h_j over j in the source area
  RVector magnitude;  // T entries: sum_j K_ij h_j
};

std::map<Index, FlowTerm> area_flow_terms(const TruncatedFlowModel& model, const RMatrix& h, int area);

struct AreaFlowEstimate {
  std::vector<Index> phases;
  CMatrix v;          // T x n_l
  RMatrix magnitude;  // T x n_l
};

// Evaluates the truncated model with each area computing only its own
// contributions and exchanging flow terms with neighbors over the bus.
std::vector<AreaFlowEstimate> decentralized_flow(const TruncatedFlowModel& model, const RMatrix& h,
                                                 MessageBus& bus);
LinearPrediction assemble(const std::vector<AreaFlowEstimate>& estimates, Index n_phases);

// Linear map from one area's columns of a 5T-row data block to another area's
// 3T-row residual block. Residual row 3t+c (c: Re v, Im v, |v|) receives
// sum_k X.row(5t+k) * coef[c][k]^T. Empty blocks are zero.
struct FlowCoupling {
  Index n_target = 0;
  Index n_source = 0;
  std::array<std::array<RMatrix, 5>, 3> coef;

  using Gram = std::array<std::array<RMatrix, 5>, 5>;

  bool empty() const;
  RMatrix apply(const RMatrix& x) const;                         // 5T x n_source -> 3T x n_target
  void apply_adjoint_add(const RMatrix& r, RMatrix& x) const;    // x += adjoint(r)
  RMatrix apply_adjoint(const RMatrix& r, Index time_steps) const;
  Gram gram() const;  // G[k][k'] = sum_c coef[c][k]^T coef[c][k']
};

struct AreaFlowMaps {
  int area = 0;
  std::vector<Index> phases;
  FlowCoupling self;                     // voltage identity minus own-injection sensitivities
  std::map<int, FlowCoupling> incoming;  // j -> coupling from area j's injections into this residual
  RMatrix target;                        // 3T x n_l: rows Re w, Im w, |w|
};

struct AreaMaps {
  Index time_steps = 0;
  Index n_phases = 0;
  std::vector<AreaFlowMaps> areas;

  bool empty() const { return areas.empty(); }
  // E_ll(X_l) + sum_j E_lj(X_j) - f_l for a full 5T x |P| matrix.
  RMatrix residual(int area, const RMatrix& x) const;
  Index residual_size() const { return 3 * time_steps * n_phases; }
};

AreaMaps build_area_maps(const TruncatedFlowModel& model);

// Columns of x belonging to the listed phases.
RMatrix select_columns(const RMatrix& x, const std::vector<Index>& cols);

}  // namespace gridmc
