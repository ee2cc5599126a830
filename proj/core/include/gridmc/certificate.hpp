#pragma once

#include <Eigen/SparseCore>

#include "gridmc/datamatrix.hpp"
#include "gridmc/linflow.hpp"
#include "gridmc/types.hpp"

namespace gridmc {

// B: R^{m x n} -> R^L. Row i holds the coefficients of <B_i, X>_F against
// vec(X) in column-major order. The first |Omega| rows sample single entries;
// the rest are sqrt(nu/mu)-scaled rows of the area load-flow residual maps.
struct StackedOperator {
  Index m = 0;
  Index n = 0;
  Index n_entry_rows = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows;
  RVector d;

  Index size() const { return rows.rows(); }
  RVector apply(const RMatrix& x) const;
  RMatrix adjoint(const RVector& z) const;
  // Upper bound of ||B||^2 from the Frobenius norm, and the power-iteration estimate.
  double norm_squared() const;
};

StackedOperator build_B_d(const ObservationMask& mask, const RMatrix& m, const AreaMaps& maps, double mu, double nu);
RVector apply_B(const StackedOperator& op, const RMatrix& x);
RMatrix apply_B_adjoint(const StackedOperator& op, const RVector& z);

struct PowerIterationOptions {
  double rel_tol = 1e-8;
  int max_iters = 10000;
  Seed seed = 12345;
};

struct SpectralNorm {
  double value = 0.0;
  int iterations = 0;
};

// Largest singular value of a dense matrix by power iteration on A'A.
SpectralNorm spectral_norm(const RMatrix& a, const PowerIterationOptions& options = {});

struct StationarityResiduals {
  double grad_u_norm = 0.0;   // ||mu B*(B(UV)-d) V' + U||_F
  double grad_v_norm = 0.0;   // ||mu B*(B(UV)-d)' U + V'||_F
  double trace_u = 0.0;       // tr((mu B*(.))' U V) + tr(U U')
  double trace_v = 0.0;       // tr((mu B*(.))' U V) + tr(V' V)
  double trace_balance = 0.0; // |tr(U U') - tr(V' V)|
};

struct ComplementarySlackness {
  double full = 0.0;     // |<W, M>_F| of the candidate primal/dual pair
  double reduced = 0.0;  // 1/2 | ||U||^2 - ||V||^2 |
};

struct CertificateReport {
  double spectral_norm = 0.0;
  bool theorem1_pass = false;
  int power_iterations = 0;
  double grad_u_norm = 0.0;
  double grad_v_norm = 0.0;
  double trace_residual_u = 0.0;
  double trace_residual_v = 0.0;
  double trace_balance = 0.0;
  double comp_slack_residual = 0.0;
  double comp_slack_reduced = 0.0;
  double schur_min_eigenvalue = 0.0;
  double mu = 0.0;
};

inline constexpr double kTheorem1Slack = 1e-9;

// mu B*(B(X) - d)
RMatrix dual_matrix(const RMatrix& x, const StackedOperator& op, double mu);

CertificateReport theorem1_check(const RMatrix& x_bar, const StackedOperator& op, double mu,
                                 const PowerIterationOptions& options = {});
StationarityResiduals stationarity_and_traces(const RMatrix& u, const RMatrix& v, const StackedOperator& op,
                                              double mu);
ComplementarySlackness complementary_slackness(const RMatrix& u, const RMatrix& v, const StackedOperator& op,
                                               double mu);
// Minimum eigenvalue of I/2 - 2 M2 M2' with M2 = (mu/2) B*(B(UV) - d).
double schur_min_eigenvalue(const RMatrix& u, const RMatrix& v, const StackedOperator& op, double mu);

// All checks at once.
CertificateReport certify(const RMatrix& u, const RMatrix& v, const StackedOperator& op, double mu,
                          const PowerIterationOptions& options = {});

// ||X||_* + mu/2 ||B(X) - d||^2
double convex_objective(const RMatrix& x, const StackedOperator& op, double mu);
// Proximal gradient on the convex objective with step 1/(mu ||B||^2).
RMatrix svt_general(const StackedOperator& op, double mu, int max_iters = 200000, double tol = 1e-12);

}  // namespace gridmc
