#include "gridmc/completion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "gridmc/error.hpp"

namespace gridmc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void add_scaled(FlowCoupling::Gram& acc, const FlowCoupling::Gram& g, double scale) {
  for (int k = 0; k < 5; ++k) {
    for (int kk = 0; kk < 5; ++kk) {
      if (g[k][kk].size() == 0 || scale == 0.0) continue;
      if (acc[k][kk].size() == 0) acc[k][kk] = RMatrix::Zero(g[k][kk].rows(), g[k][kk].cols());
      acc[k][kk] += scale * g[k][kk];
    }
  }
}

double masked_sq_error(const AreaProblem& area, const RMatrix& x) {
  double sum = 0.0;
  for (Index q = 0; q < area.n; ++q) {
    for (Index i : area.obs_by_col[q]) {
      const double d = x(i, q) - area.masked_data(i, q);
      sum += d * d;
    }
  }
  return sum;
}

// Rows 5t+k of the 5T x c matrix x for t = 0..T-1.
RMatrix block_rows(const RMatrix& x, int k) {
  const Index steps = x.rows() / 5;
  return x(Eigen::seqN(k, steps, 5), Eigen::all);
}

std::vector<double> to_payload(const RMatrix& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

RMatrix from_payload(const std::vector<double>& p, Index rows, Index cols) {
  if (static_cast<Index>(p.size()) != rows * cols) {
    throw Error(ErrorCode::protocol_violation, "payload of length " + std::to_string(p.size()) + ", expected " +
                                                   std::to_string(rows * cols));
  }
  return Eigen::Map<const RMatrix>(p.data(), rows, cols);
}

// Power rows (5t+3, 5t+4) of a 5T x c matrix, stored row by row.
std::vector<double> pack_power_rows(const RMatrix& g) {
  const Index steps = g.rows() / 5;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * steps * g.cols()));
  for (Index t = 0; t < steps; ++t)
    for (int k = 3; k < 5; ++k)
      for (Index c = 0; c < g.cols(); ++c) out.push_back(g(5 * t + k, c));
  return out;
}

RMatrix unpack_power_rows(const std::vector<double>& p, Index steps, Index cols) {
  if (static_cast<Index>(p.size()) != 2 * steps * cols) {
    throw Error(ErrorCode::protocol_violation, "q-term payload has unexpected length");
  }
  RMatrix g = RMatrix::Zero(5 * steps, cols);
  std::size_t pos = 0;
  for (Index t = 0; t < steps; ++t)
    for (int k = 3; k < 5; ++k)
      for (Index c = 0; c < cols; ++c) g(5 * t + k, c) = p[pos++];
  return g;
}

void check_finite(const AreaState& s, int iteration, int area) {
  if (!s.u.allFinite() || !s.v.allFinite()) {
    throw Error(ErrorCode::divergence, "non-finite factor in area " + std::to_string(area + 1) + " at iteration " +
                                           std::to_string(iteration));
  }
}

double relative_change(const RMatrix& next, const RMatrix& prev) {
  const double base = prev.norm();
  const double diff = (next - prev).norm();
  return base > 0.0 ? diff / base : diff;
}

AreaState initial_state(const AreaProblem& area, const FactorPair& init) {
  AreaState st;
  st.u = init.u;
  st.v = select_columns(init.v, area.phases);
  const Index steps = area.time_steps();
  for (int j : area.neighbors) {
    st.s[j] = init.u;
    st.gamma[j] = RMatrix::Zero(init.u.rows(), init.u.cols());
    st.u_nb[j] = init.u;
    if (area.flow) {
      st.q[j] = RMatrix::Zero(3 * steps, area.n);
      st.lambda[j] = RMatrix::Zero(3 * steps, area.n);
      st.g_in[j] = RMatrix::Zero(5 * steps, area.n);
    }
  }
  return st;
}

}  // namespace

void AdmmConfig::validate() const {
  auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (!finite_nonneg(mu) || !finite_nonneg(nu) || !finite_nonneg(gamma) || !finite_nonneg(lambda)) {
    throw Error(ErrorCode::invalid_argument, "penalties must be finite and nonnegative");
  }
  if (!finite_nonneg(prox_c)) throw Error(ErrorCode::invalid_argument, "prox_c must be >= 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tol must be > 0");
  if (max_iters < 1) throw Error(ErrorCode::invalid_argument, "max_iters must be >= 1");
  if (rank < 0) throw Error(ErrorCode::invalid_argument, "rank must be >= 0");
}

Index AdmmConfig::resolved_rank(Index m, Index n) const {
  if (rank == 0) return std::max<Index>(1, std::min({Index{10}, m, n}));
  if (rank > std::min(m, n)) {
    throw Error(ErrorCode::invalid_argument, "rank " + std::to_string(rank) + " exceeds min(m, n) = " +
                                                 std::to_string(std::min(m, n)));
  }
  return rank;
}

void CompletionProblem::validate() const {
  if (m.rows() == 0 || m.cols() == 0) throw Error(ErrorCode::invalid_argument, "empty data matrix");
  if (mask.rows != m.rows() || mask.cols != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "mask shape differs from data matrix");
  }
  mask.validate();
  partition.validate(m.cols());
  if (!maps.empty()) {
    if (5 * maps.time_steps != m.rows() || maps.n_phases != m.cols()) {
      throw Error(ErrorCode::dimension_mismatch, "flow maps do not match the data matrix shape");
    }
    if (static_cast<int>(maps.areas.size()) != partition.n_areas) {
      throw Error(ErrorCode::dimension_mismatch, "flow maps and partition differ in area count");
    }
    const auto members = partition.members();
    for (int l = 0; l < partition.n_areas; ++l) {
      if (maps.areas[l].phases != members[l]) {
        throw Error(ErrorCode::dimension_mismatch, "flow maps and partition disagree on area " + std::to_string(l + 1));
      }
    }
  }
}

std::vector<AreaProblem> build_area_problems(const CompletionProblem& problem, const AdmmConfig& config) {
  problem.validate();
  const auto& part = problem.partition;
  const auto members = part.members();
  const auto neighbors = part.neighbors();
  const Index m = problem.rows();

  std::vector<Index> local(static_cast<std::size_t>(problem.cols()));
  for (const auto& mem : members)
    for (std::size_t a = 0; a < mem.size(); ++a) local[mem[a]] = static_cast<Index>(a);

  std::vector<AreaProblem> out;
  for (int l = 0; l < part.n_areas; ++l) {
    AreaProblem ap;
    ap.area = l;
    ap.n_areas = part.n_areas;
    ap.phases = members[l];
    ap.neighbors = neighbors[l];
    ap.m = m;
    ap.n = static_cast<Index>(ap.phases.size());
    ap.masked_data = RMatrix::Zero(m, ap.n);
    ap.obs_by_row.assign(static_cast<std::size_t>(m), {});
    ap.obs_by_col.assign(static_cast<std::size_t>(ap.n), {});
    out.push_back(std::move(ap));
  }
  for (auto [i, j] : problem.mask.entries) {
    auto& ap = out[part.assignment[j]];
    const Index q = local[j];
    ap.masked_data(i, q) = problem.m(i, j);
    ap.obs_by_row[i].push_back(q);
    ap.obs_by_col[q].push_back(i);
  }
  for (auto& ap : out) {
    for (auto& rows : ap.obs_by_col) std::sort(rows.begin(), rows.end());
    for (auto& cols : ap.obs_by_row) std::sort(cols.begin(), cols.end());
  }

  if (!problem.maps.empty()) {
    for (auto& ap : out) {
      const auto& am = problem.maps.areas[ap.area];
      ap.flow = true;
      ap.self = am.self;
      ap.target = am.target;
      for (int j : ap.neighbors) {
        auto in = am.incoming.find(j);
        auto outg = problem.maps.areas[j].incoming.find(ap.area);
        if (in == am.incoming.end() || outg == problem.maps.areas[j].incoming.end()) {
          throw Error(ErrorCode::dimension_mismatch, "flow maps lack the coupling between areas " +
                                                         std::to_string(ap.area + 1) + " and " + std::to_string(j + 1));
        }
        ap.incoming.emplace(j, in->second);
        ap.outgoing.emplace(j, outg->second);
      }
      add_scaled(ap.gram, ap.self.gram(), config.nu);
      for (const auto& [k, c] : ap.outgoing) add_scaled(ap.gram, c.gram(), config.lambda);
    }
  }
  return out;
}

RMatrix local_linear_term(const AreaProblem& area, const AreaState& state, const AdmmConfig& config) {
  RMatrix lin = config.mu * area.masked_data;
  if (area.flow) {
    RMatrix z = area.target;
    for (const auto& [j, q] : state.q) z -= q;
    area.self.apply_adjoint_add(config.nu * z, lin);
    for (int k : area.neighbors) lin += config.lambda * state.g_in.at(k);
  }
  return lin;
}

RMatrix update_u(const AreaProblem& area, const AreaState& state, const AdmmConfig& config) {
  const RMatrix& v = state.v;
  const Index r = v.rows();
  const Index steps = area.time_steps();
  const double deg = static_cast<double>(area.neighbors.size());
  const double alpha = 1.0 / static_cast<double>(area.n_areas) + config.gamma * deg + config.prox_c;

  RMatrix rhs = local_linear_term(area, state, config) * v.transpose() + config.prox_c * state.u;
  for (int j : area.neighbors) rhs += config.gamma * (state.s.at(j) - state.gamma.at(j));

  std::array<std::array<RMatrix, 5>, 5> vgv;
  if (area.flow) {
    for (int k = 0; k < 5; ++k)
      for (int kk = 0; kk < 5; ++kk)
        if (area.gram[k][kk].size() != 0) vgv[k][kk] = v * area.gram[k][kk] * v.transpose();
  }

  // The flow terms couple the five rows of a time step; without them every
  // row is its own block.
  const int width = area.flow ? 5 : 1;
  const Index blocks = area.flow ? steps : area.m;
  RMatrix u(area.m, r);
  RMatrix h(width * r, width * r);
  RVector b(width * r);
  for (Index t = 0; t < blocks; ++t) {
    h.setZero();
    for (int k = 0; k < width; ++k) {
      if (area.flow) {
        for (int kk = 0; kk < 5; ++kk)
          if (vgv[k][kk].size() != 0) h.block(k * r, kk * r, r, r) = vgv[k][kk];
      }
      const Index row = width * t + k;
      auto diag = h.block(k * r, k * r, r, r);
      for (Index q : area.obs_by_row[row]) diag.noalias() += config.mu * v.col(q) * v.col(q).transpose();
      diag.diagonal().array() += alpha;
      b.segment(k * r, r) = rhs.row(row).transpose();
    }
    Eigen::LLT<RMatrix> llt(h);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::divergence, "U normal equations are not positive definite");
    }
    const RVector sol = llt.solve(b);
    for (int k = 0; k < width; ++k) u.row(width * t + k) = sol.segment(k * r, r).transpose();
  }
  return u;
}

RMatrix update_v(const AreaProblem& area, const AreaState& state, const AdmmConfig& config) {
  const RMatrix& u = state.u;
  const Index r = u.cols();
  const Index n = area.n;
  RMatrix h = RMatrix::Zero(n * r, n * r);

  if (area.flow) {
    std::array<RMatrix, 5> rows;
    for (int k = 0; k < 5; ++k) rows[k] = block_rows(u, k);
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        const RMatrix& g = area.gram[a][b];
        if (g.size() == 0) continue;
        const RMatrix w = rows[a].transpose() * rows[b];
        for (Index cj = 0; cj < n; ++cj)
          for (Index ci = 0; ci < n; ++ci)
            if (g(ci, cj) != 0.0) h.block(ci * r, cj * r, r, r) += g(ci, cj) * w;
      }
    }
  }
  for (Index q = 0; q < n; ++q) {
    auto diag = h.block(q * r, q * r, r, r);
    for (Index i : area.obs_by_col[q]) diag.noalias() += config.mu * u.row(i).transpose() * u.row(i);
    diag.diagonal().array() += 1.0 + config.prox_c;
  }
  const RMatrix rhs = u.transpose() * local_linear_term(area, state, config) + config.prox_c * state.v;
  const Eigen::Map<const RVector> b(rhs.data(), rhs.size());
  Eigen::LLT<RMatrix> llt(h);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::divergence, "V normal equations are not positive definite");
  }
  const RVector sol = llt.solve(b);
  return Eigen::Map<const RMatrix>(sol.data(), r, n);
}

RMatrix update_s(const RMatrix& u_l, const RMatrix& u_j) { return 0.5 * (u_l + u_j); }

std::map<int, RMatrix> update_q(const AreaProblem& area, const AreaState& state, const RMatrix& e_self,
                                const std::map<int, RMatrix>& e_nb, const AdmmConfig& config) {
  if (!(config.lambda > 0.0)) {
    throw Error(ErrorCode::unsupported_config, "the q update requires lambda > 0");
  }
  std::map<int, RMatrix> rhs;
  RMatrix total = RMatrix::Zero(area.target.rows(), area.target.cols());
  const RMatrix flow_gap = config.nu * (area.target - e_self);
  for (int j : area.neighbors) {
    RMatrix r = config.lambda * (e_nb.at(j) - state.lambda.at(j)) + flow_gap;
    total += r;
    rhs.emplace(j, std::move(r));
  }
  const double deg = static_cast<double>(area.neighbors.size());
  const double shrink = config.nu / (config.lambda + config.nu * deg);
  std::map<int, RMatrix> q;
  for (auto& [j, r] : rhs) q.emplace(j, (r - shrink * total) / config.lambda);
  return q;
}

void update_duals(AreaState& state, const std::map<int, RMatrix>& e_nb) {
  for (auto& [j, g] : state.gamma) g += state.u - state.s.at(j);
  for (auto& [j, l] : state.lambda) l += state.q.at(j) - e_nb.at(j);
}

namespace {

RMatrix area_residual(const AreaProblem& area, const std::vector<AreaState>& states) {
  const auto& st = states[area.area];
  RMatrix r = area.self.apply(st.u * st.v) - area.target;
  for (const auto& [j, c] : area.incoming) r += c.apply(states[j].u * states[j].v);
  return r;
}

}  // namespace

double decentralized_objective(const std::vector<AreaProblem>& areas, const std::vector<AreaState>& states,
                               const AdmmConfig& config) {
  double total = 0.0;
  for (const auto& area : areas) {
    const auto& st = states[area.area];
    const RMatrix x = st.u * st.v;
    total += 0.5 / static_cast<double>(area.n_areas) * st.u.squaredNorm() + 0.5 * st.v.squaredNorm();
    total += 0.5 * config.mu * masked_sq_error(area, x);
    if (area.flow) total += 0.5 * config.nu * area_residual(area, states).squaredNorm();
  }
  return total;
}

double augmented_lagrangian(const std::vector<AreaProblem>& areas, const std::vector<AreaState>& states,
                            const AdmmConfig& config) {
  double total = 0.0;
  for (const auto& area : areas) {
    const auto& st = states[area.area];
    const RMatrix x = st.u * st.v;
    total += 0.5 / static_cast<double>(area.n_areas) * st.u.squaredNorm() + 0.5 * st.v.squaredNorm();
    total += 0.5 * config.mu * masked_sq_error(area, x);
    for (int j : area.neighbors) {
      total += 0.5 * config.gamma * ((st.u - st.s.at(j) + st.gamma.at(j)).squaredNorm() - st.gamma.at(j).squaredNorm());
    }
    if (!area.flow) continue;
    RMatrix own = area.self.apply(x) - area.target;
    for (int j : area.neighbors) {
      own += st.q.at(j);
      const RMatrix e = area.incoming.at(j).apply(states[j].u * states[j].v);
      total += 0.5 * config.lambda *
               ((st.q.at(j) - e + st.lambda.at(j)).squaredNorm() - st.lambda.at(j).squaredNorm());
    }
    total += 0.5 * config.nu * own.squaredNorm();
  }
  return total;
}

double objective_factored(const RMatrix& u, const RMatrix& v, const RMatrix& m, const ObservationMask& mask,
                          const AreaMaps& maps, double mu, double nu) {
  if (u.cols() != v.rows() || u.rows() != m.rows() || v.cols() != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "factor shapes do not match the data matrix");
  }
  if (mask.rows != m.rows() || mask.cols != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "mask shape differs from data matrix");
  }
  const RMatrix x = u * v;
  double data = 0.0;
  for (auto [i, j] : mask.entries) data += (x(i, j) - m(i, j)) * (x(i, j) - m(i, j));
  double flow = 0.0;
  for (int l = 0; l < static_cast<int>(maps.areas.size()); ++l) flow += maps.residual(l, x).squaredNorm();
  return 0.5 * (u.squaredNorm() + v.squaredNorm()) + 0.5 * mu * data + 0.5 * nu * flow;
}

FactorPair init_factors(const RMatrix& m, const ObservationMask& mask, Index rank, Seed seed) {
  if (rank < 1) throw Error(ErrorCode::invalid_argument, "rank must be >= 1");
  const RMatrix pm = apply_mask(m, mask);
  Eigen::BDCSVD<RMatrix> svd(pm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& sigma = svd.singularValues();
  const double cutoff = static_cast<double>(std::max(m.rows(), m.cols())) *
                        std::numeric_limits<double>::epsilon() * (sigma.size() ? sigma(0) : 0.0);
  Index numerical_rank = 0;
  for (Index k = 0; k < sigma.size(); ++k)
    if (sigma(k) > cutoff && sigma(k) > 0.0) ++numerical_rank;

  FactorPair f;
  if (numerical_rank < rank) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
    f.u.resize(m.rows(), rank);
    f.v.resize(rank, m.cols());
    for (Index j = 0; j < rank; ++j)
      for (Index i = 0; i < m.rows(); ++i) f.u(i, j) = scale * normal(rng);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < rank; ++i) f.v(i, j) = scale * normal(rng);
    return f;
  }
  RMatrix lu = svd.matrixU().leftCols(rank);
  RMatrix rv = svd.matrixV().leftCols(rank);
  for (Index k = 0; k < rank; ++k) {
    Index arg = 0;
    lu.col(k).cwiseAbs().maxCoeff(&arg);
    if (lu(arg, k) < 0.0) {
      lu.col(k) = -lu.col(k);
      rv.col(k) = -rv.col(k);
    }
  }
  const RVector root = sigma.head(rank).cwiseSqrt();
  f.u = lu * root.asDiagonal();
  f.v = root.asDiagonal() * rv.transpose();
  return f;
}

DecentralizedSolver::DecentralizedSolver(const CompletionProblem& problem, const AdmmConfig& config,
                                         const RunOptions& options)
    : problem_(&problem),
      config_(config),
      areas_(build_area_problems(problem, config)),
      bus_(problem.partition.n_areas, problem.partition.neighbors(), options.policy) {
  config_.validate();
  const Index r = config_.resolved_rank(problem.rows(), problem.cols());
  const FactorPair init = options.init ? *options.init : init_factors(problem.m, problem.mask, r, config_.seed);
  if (init.u.rows() != problem.rows() || init.v.cols() != problem.cols() || init.u.cols() != init.v.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "initial factors do not match the problem");
  }
  for (const auto& area : areas_) states_.push_back(initial_state(area, init));
  x_ = assembled();
}

double DecentralizedSolver::iterate() {
  const int k = iteration_;
  std::vector<double> ms(areas_.size(), 0.0);

  // Local U/V solves, then publish U_l and V_l to every neighbor.
  bus_.run_round(k, [&](int l, const Inbox& in, Outbox& out) {
    const auto start = Clock::now();
    const auto& area = areas_[l];
    auto& st = states_[l];
    if (area.flow && k > 0) {
      for (int j : area.neighbors) {
        st.g_in[j] = unpack_power_rows(in.get(j, MessageTag::q_term), area.time_steps(), area.n);
      }
    }
    st.u = update_u(area, st, config_);
    st.v = update_v(area, st, config_);
    check_finite(st, k, l);
    for (int j : area.neighbors) {
      out.send(j, MessageTag::factor, to_payload(st.u));
      if (area.flow) out.send(j, MessageTag::flow_term, to_payload(st.v));
    }
    ms[l] += elapsed_ms(start);
  });

  // Consensus, q and dual updates, then publish E_lj'(q_lj + Lambda_lj).
  bus_.run_round(k, [&](int l, const Inbox& in, Outbox& out) {
    const auto start = Clock::now();
    const auto& area = areas_[l];
    auto& st = states_[l];
    std::map<int, RMatrix> e_nb;
    for (int j : area.neighbors) {
      st.u_nb[j] = from_payload(in.get(j, MessageTag::factor), area.m, st.u.cols());
      if (area.flow) {
        const auto nj = areas_[j].n;
        st.v_nb[j] = from_payload(in.get(j, MessageTag::flow_term), st.u.cols(), nj);
        e_nb.emplace(j, area.incoming.at(j).apply(st.u_nb[j] * st.v_nb[j]));
      }
    }
    if (area.flow && !area.neighbors.empty()) {
      st.q = update_q(area, st, area.self.apply(st.u * st.v), e_nb, config_);
    }
    for (int j : area.neighbors) st.s[j] = update_s(st.u, st.u_nb[j]);
    update_duals(st, e_nb);
    if (area.flow) {
      for (int j : area.neighbors) {
        const RMatrix g = area.incoming.at(j).apply_adjoint(st.q.at(j) + st.lambda.at(j), area.time_steps());
        out.send(j, MessageTag::q_term, pack_power_rows(g));
      }
    }
    ms[l] += elapsed_ms(start);
  });

  ++iteration_;
  last_ms_ = *std::max_element(ms.begin(), ms.end());
  RMatrix next = assembled();
  const double change = relative_change(next, x_);
  x_ = std::move(next);
  return change;
}

RMatrix DecentralizedSolver::assembled() const {
  RMatrix x(problem_->rows(), problem_->cols());
  for (const auto& area : areas_) {
    const RMatrix xl = states_[area.area].u * states_[area.area].v;
    for (Index a = 0; a < area.n; ++a) x.col(area.phases[a]) = xl.col(a);
  }
  return x;
}

FactorPair DecentralizedSolver::factors() const {
  FactorPair f;
  f.u = RMatrix::Zero(states_.front().u.rows(), states_.front().u.cols());
  for (const auto& st : states_) f.u += st.u;
  f.u /= static_cast<double>(states_.size());
  f.v.resize(f.u.cols(), problem_->cols());
  for (const auto& area : areas_) {
    for (Index a = 0; a < area.n; ++a) f.v.col(area.phases[a]) = states_[area.area].v.col(a);
  }
  return f;
}

double DecentralizedSolver::consensus_residual() const {
  double worst = 0.0;
  for (const auto& area : areas_)
    for (int j : area.neighbors)
      if (j > area.area) worst = std::max(worst, (states_[area.area].u - states_[j].u).norm());
  return worst;
}

double DecentralizedSolver::objective() const { return decentralized_objective(areas_, states_, config_); }

double DecentralizedSolver::lagrangian() const { return augmented_lagrangian(areas_, states_, config_); }

CentralizedSolver::CentralizedSolver(const CompletionProblem& problem, const AdmmConfig& config,
                                     const RunOptions& options)
    : problem_(&problem), config_(config) {
  if (problem.partition.n_areas != 1) {
    throw Error(ErrorCode::invalid_argument, "centralized solver needs a single-area problem");
  }
  config_.validate();
  area_ = std::move(build_area_problems(problem, config_).front());
  const Index r = config_.resolved_rank(problem.rows(), problem.cols());
  const FactorPair init = options.init ? *options.init : init_factors(problem.m, problem.mask, r, config_.seed);
  if (init.u.rows() != problem.rows() || init.v.cols() != problem.cols() || init.u.cols() != init.v.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "initial factors do not match the problem");
  }
  state_ = initial_state(area_, init);
  x_ = assembled();
}

double CentralizedSolver::iterate() {
  const auto start = Clock::now();
  state_.u = update_u(area_, state_, config_);
  state_.v = update_v(area_, state_, config_);
  check_finite(state_, iteration_, 0);
  last_ms_ = elapsed_ms(start);
  ++iteration_;
  RMatrix next = assembled();
  const double change = relative_change(next, x_);
  x_ = std::move(next);
  return change;
}

double CentralizedSolver::objective() const {
  return decentralized_objective({area_}, {state_}, config_);
}

namespace {

template <class Solver>
CompletionResult drive(Solver& solver, const CompletionProblem& problem, const AdmmConfig& config,
                       const RunOptions& options, const IterationObserver& observer) {
  CompletionResult result;
  auto& trace = result.trace;
  const double scale = std::sqrt(static_cast<double>(problem.m.size()));
  for (int it = 0; it < config.max_iters; ++it) {
    const double change = solver.iterate();
    RMatrix x = solver.assembled();
    double consensus = 0.0;
    double ms = 0.0;
    if constexpr (std::is_same_v<Solver, DecentralizedSolver>) {
      consensus = solver.consensus_residual();
      ms = solver.last_max_area_ms();
    } else {
      ms = solver.last_ms();
    }
    trace.rmse.push_back(options.reference ? (x - *options.reference).norm() / scale
                                           : std::numeric_limits<double>::quiet_NaN());
    trace.objective.push_back(solver.objective());
    trace.consensus.push_back(consensus);
    trace.max_area_ms.push_back(ms);
    trace.iterations = it + 1;
    if (observer) observer(it, x);
    if (options.stop_on_tol && consensus < config.tol && change < config.tol) {
      trace.converged = true;
      break;
    }
  }
  result.x = solver.assembled();
  result.factors = solver.factors();
  return result;
}

}  // namespace

CompletionResult run_decentralized(const CompletionProblem& problem, const AdmmConfig& config,
                                   const RunOptions& options, const IterationObserver& observer) {
  DecentralizedSolver solver(problem, config, options);
  CompletionResult result = drive(solver, problem, config, options, observer);
  result.ledger = solver.bus().ledger();
  return result;
}

CompletionResult run_centralized(const CompletionProblem& problem, const AdmmConfig& config,
                                 const RunOptions& options, const IterationObserver& observer) {
  CentralizedSolver solver(problem, config, options);
  return drive(solver, problem, config, options, observer);
}

CompletionProblem centralized_problem(const RMatrix& m, const ObservationMask& mask, const LinearFlowModel* model) {
  CompletionProblem p;
  p.m = m;
  p.mask = mask;
  p.partition = AreaPartition::single(m.cols());
  if (model) p.maps = build_area_maps(truncate_model(*model, p.partition));
  return p;
}

RMatrix singular_value_shrink(const RMatrix& x, double threshold) {
  Eigen::BDCSVD<RMatrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector s = (svd.singularValues().array() - threshold).cwiseMax(0.0).matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

double nuclear_objective(const RMatrix& x, const RMatrix& m, const ObservationMask& mask, double mu) {
  double data = 0.0;
  for (auto [i, j] : mask.entries) data += (x(i, j) - m(i, j)) * (x(i, j) - m(i, j));
  return sv_spectrum(x).sum() + 0.5 * mu * data;
}

RMatrix svt_oracle(const RMatrix& m, const ObservationMask& mask, double mu, int max_iters) {
  if (!(mu > 0.0)) throw Error(ErrorCode::invalid_argument, "svt_oracle needs mu > 0");
  const RMatrix observed = apply_mask(m, mask);
  const RMatrix keep = mask.indicator();
  RMatrix x = RMatrix::Zero(m.rows(), m.cols());
  double prev = nuclear_objective(x, m, mask, mu);
  for (int it = 0; it < max_iters; ++it) {
    const RMatrix y = observed + (1.0 - keep.array()).matrix().cwiseProduct(x);
    x = singular_value_shrink(y, 1.0 / mu);
    const double obj = nuclear_objective(x, m, mask, mu);
    if (prev - obj < 1e-10) break;
    prev = obj;
  }
  return x;
}

}  // namespace gridmc
