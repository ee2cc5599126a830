#include "gridmc/certificate.hpp"

#include <cmath>
#include <random>

#include "gridmc/completion.hpp"
#include "gridmc/error.hpp"

namespace gridmc {

namespace {

void check_shape(const StackedOperator& op, const RMatrix& x) {
  if (x.rows() != op.m || x.cols() != op.n) {
    throw Error(ErrorCode::dimension_mismatch, "operator expects a " + std::to_string(op.m) + "x" +
                                                   std::to_string(op.n) + " matrix");
  }
}

RVector random_unit(Index size, Seed seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RVector x(size);
  for (Index i = 0; i < size; ++i) x(i) = normal(rng);
  return x / x.norm();
}

}  // namespace

RVector StackedOperator::apply(const RMatrix& x) const {
  check_shape(*this, x);
  const Eigen::Map<const RVector> vec(x.data(), x.size());
  return rows * vec;
}

RMatrix StackedOperator::adjoint(const RVector& z) const {
  if (z.size() != size()) throw Error(ErrorCode::dimension_mismatch, "adjoint input has wrong length");
  const RVector vec = rows.transpose() * z;
  return Eigen::Map<const RMatrix>(vec.data(), m, n);
}

double StackedOperator::norm_squared() const {
  if (rows.nonZeros() == 0) return 0.0;
  RVector x = random_unit(m * n, 777);
  double est = 0.0;
  for (int it = 0; it < 10000; ++it) {
    RVector y = rows.transpose() * (rows * x);
    const double next = y.norm();
    if (next == 0.0) return 0.0;
    x = y / next;
    if (std::abs(next - est) <= 1e-10 * next) return next;
    est = next;
  }
  return est;
}

RVector apply_B(const StackedOperator& op, const RMatrix& x) { return op.apply(x); }
RMatrix apply_B_adjoint(const StackedOperator& op, const RVector& z) { return op.adjoint(z); }

StackedOperator build_B_d(const ObservationMask& mask, const RMatrix& m, const AreaMaps& maps, double mu, double nu) {
  if (!(mu > 0.0)) throw Error(ErrorCode::invalid_argument, "build_B_d needs mu > 0");
  if (nu < 0.0) throw Error(ErrorCode::invalid_argument, "nu must be >= 0");
  if (mask.rows != m.rows() || mask.cols != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "mask shape differs from data matrix");
  }
  mask.validate();
  StackedOperator op;
  op.m = m.rows();
  op.n = m.cols();
  op.n_entry_rows = mask.size();

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> d;
  Index row = 0;
  for (auto [i, j] : mask.entries) {
    triplets.emplace_back(row++, i + op.m * j, 1.0);
    d.push_back(m(i, j));
  }

  const bool flow = nu > 0.0 && !maps.empty();
  if (flow) {
    if (5 * maps.time_steps != op.m || maps.n_phases != op.n) {
      throw Error(ErrorCode::dimension_mismatch, "flow maps do not match the data matrix shape");
    }
    const double scale = std::sqrt(nu / mu);
    const Index steps = maps.time_steps;
    for (const auto& am : maps.areas) {
      auto emit_coupling = [&](const FlowCoupling& c, const std::vector<Index>& src, Index out_row, int comp,
                               Index a, Index t) {
        for (int k = 0; k < 5; ++k) {
          const RMatrix& coef = c.coef[comp][k];
          if (coef.size() == 0) continue;
          for (std::size_t b = 0; b < src.size(); ++b) {
            const double value = coef(a, static_cast<Index>(b));
            if (value != 0.0) triplets.emplace_back(out_row, (5 * t + k) + op.m * src[b], scale * value);
          }
        }
      };
      const Index nl = static_cast<Index>(am.phases.size());
      for (Index a = 0; a < nl; ++a) {
        for (Index t = 0; t < steps; ++t) {
          for (int comp = 0; comp < 3; ++comp) {
            emit_coupling(am.self, am.phases, row, comp, a, t);
            for (const auto& [j, c] : am.incoming) emit_coupling(c, maps.areas[j].phases, row, comp, a, t);
            d.push_back(scale * am.target(3 * t + comp, a));
            ++row;
          }
        }
      }
    }
  }
  op.rows.resize(row, op.m * op.n);
  op.rows.setFromTriplets(triplets.begin(), triplets.end());
  op.rows.makeCompressed();
  op.d = Eigen::Map<const RVector>(d.data(), static_cast<Index>(d.size()));
  return op;
}

SpectralNorm spectral_norm(const RMatrix& a, const PowerIterationOptions& options) {
  SpectralNorm out;
  if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return out;
  RVector x = random_unit(a.cols(), options.seed);
  double est = 0.0;
  for (int it = 1; it <= options.max_iters; ++it) {
    const RVector ax = a * x;
    const double sigma = ax.norm();
    RVector y = a.transpose() * ax;
    const double ny = y.norm();
    if (ny == 0.0) {
      // Start vector in the null space; restart from a different draw.
      x = random_unit(a.cols(), options.seed + static_cast<Seed>(it));
      continue;
    }
    x = y / ny;
    if (it > 1 && std::abs(sigma - est) <= options.rel_tol * sigma) {
      out.value = (a * x).norm();
      out.iterations = it;
      return out;
    }
    est = sigma;
  }
  throw Error(ErrorCode::non_convergence, "power iteration did not reach relative tolerance in " +
                                              std::to_string(options.max_iters) + " steps");
}

RMatrix dual_matrix(const RMatrix& x, const StackedOperator& op, double mu) {
  return mu * op.adjoint(op.apply(x) - op.d);
}

CertificateReport theorem1_check(const RMatrix& x_bar, const StackedOperator& op, double mu,
                                 const PowerIterationOptions& options) {
  const auto norm = spectral_norm(dual_matrix(x_bar, op, mu), options);
  CertificateReport r;
  r.mu = mu;
  r.spectral_norm = norm.value;
  r.power_iterations = norm.iterations;
  r.theorem1_pass = norm.value <= 1.0 + kTheorem1Slack;
  return r;
}

StationarityResiduals stationarity_and_traces(const RMatrix& u, const RMatrix& v, const StackedOperator& op,
                                              double mu) {
  if (u.cols() != v.rows()) throw Error(ErrorCode::dimension_mismatch, "factor ranks differ");
  const RMatrix x = u * v;
  const RMatrix g = dual_matrix(x, op, mu);
  StationarityResiduals s;
  s.grad_u_norm = (g * v.transpose() + u).norm();
  s.grad_v_norm = (g.transpose() * u + v.transpose()).norm();
  const double cross = (g.array() * x.array()).sum();
  s.trace_u = std::abs(cross + u.squaredNorm());
  s.trace_v = std::abs(cross + v.squaredNorm());
  s.trace_balance = std::abs(u.squaredNorm() - v.squaredNorm());
  return s;
}

ComplementarySlackness complementary_slackness(const RMatrix& u, const RMatrix& v, const StackedOperator& op,
                                               double mu) {
  if (u.cols() != v.rows()) throw Error(ErrorCode::dimension_mismatch, "factor ranks differ");
  const RMatrix x = u * v;
  const RMatrix m2 = 0.5 * dual_matrix(x, op, mu);
  // W = [UU' X; X' V'V], dual candidate [I/2 M2; M2' I/2].
  ComplementarySlackness c;
  c.full = std::abs(0.5 * u.squaredNorm() + 0.5 * v.squaredNorm() + 2.0 * (m2.array() * x.array()).sum());
  c.reduced = 0.5 * std::abs(u.squaredNorm() - v.squaredNorm());
  return c;
}

double schur_min_eigenvalue(const RMatrix& u, const RMatrix& v, const StackedOperator& op, double mu) {
  const RMatrix m2 = 0.5 * dual_matrix(u * v, op, mu);
  const RMatrix s = 0.5 * RMatrix::Identity(m2.rows(), m2.rows()) - 2.0 * m2 * m2.transpose();
  Eigen::SelfAdjointEigenSolver<RMatrix> eig(s, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

CertificateReport certify(const RMatrix& u, const RMatrix& v, const StackedOperator& op, double mu,
                          const PowerIterationOptions& options) {
  CertificateReport r = theorem1_check(u * v, op, mu, options);
  const auto s = stationarity_and_traces(u, v, op, mu);
  r.grad_u_norm = s.grad_u_norm;
  r.grad_v_norm = s.grad_v_norm;
  r.trace_residual_u = s.trace_u;
  r.trace_residual_v = s.trace_v;
  r.trace_balance = s.trace_balance;
  const auto c = complementary_slackness(u, v, op, mu);
  r.comp_slack_residual = c.full;
  r.comp_slack_reduced = c.reduced;
  r.schur_min_eigenvalue = schur_min_eigenvalue(u, v, op, mu);
  return r;
}

double convex_objective(const RMatrix& x, const StackedOperator& op, double mu) {
  return sv_spectrum(x).sum() + 0.5 * mu * (op.apply(x) - op.d).squaredNorm();
}

RMatrix svt_general(const StackedOperator& op, double mu, int max_iters, double tol) {
  if (!(mu > 0.0)) throw Error(ErrorCode::invalid_argument, "svt_general needs mu > 0");
  RMatrix x = RMatrix::Zero(op.m, op.n);
  const double lip = mu * op.norm_squared();
  if (lip == 0.0) return x;
  const double step = 1.0 / lip;
  double prev = convex_objective(x, op, mu);
  for (int it = 0; it < max_iters; ++it) {
    const RMatrix grad = mu * op.adjoint(op.apply(x) - op.d);
    x = singular_value_shrink(x - step * grad, step);
    const double obj = convex_objective(x, op, mu);
    if (prev - obj < tol * std::max(1.0, std::abs(obj))) break;
    prev = obj;
  }
  return x;
}

}  // namespace gridmc
