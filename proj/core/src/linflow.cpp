#include "gridmc/linflow.hpp"

#include <cmath>

#include "gridmc/error.hpp"

namespace gridmc {

LinearFlowModel build_linear_model(const NetworkModel& net, Index time_steps) {
  if (time_steps < 1) throw Error(ErrorCode::invalid_argument, "time_steps must be >= 1");
  net.validate();
  const Index p = net.n_phases();
  const auto lu = net.y_ll.partialPivLu();

  LinearFlowModel model;
  model.time_steps = time_steps;
  model.w = -lu.solve(net.y_l0 * net.v0);
  for (Index i = 0; i < p; ++i) {
    if (std::abs(model.w(i)) < 1e-12) {
      throw Error(ErrorCode::degenerate_linearization, "no-load voltage vanishes at phase " + std::to_string(i));
    }
  }

  CMatrix a = lu.solve(CMatrix::Identity(p, p));
  for (Index j = 0; j < p; ++j) a.col(j) /= std::conj(model.w(j));
  model.n_mat.resize(p, 2 * p);
  model.n_mat.leftCols(p) = a;
  model.n_mat.rightCols(p) = cplx(0.0, -1.0) * a;

  model.k_mat.resize(p, 2 * p);
  for (Index i = 0; i < p; ++i) {
    const cplx rot = std::conj(model.w(i)) / std::abs(model.w(i));
    model.k_mat.row(i) = (rot * model.n_mat.row(i)).real();
  }
  return model;
}

TruncatedFlowModel truncate_model(const LinearFlowModel& model, const AreaPartition& partition) {
  const Index p = model.n_phases();
  partition.validate(p);
  TruncatedFlowModel out{model, partition};
  for (Index col = 0; col < 2 * p; ++col) {
    const int area_j = partition.assignment[col % p];
    for (Index i = 0; i < p; ++i) {
      const int area_i = partition.assignment[i];
      if (area_i != area_j && !partition.adjacent(area_i, area_j)) {
        out.model.n_mat(i, col) = 0.0;
        out.model.k_mat(i, col) = 0.0;
      }
    }
  }
  return out;
}

double truncation_error(const LinearFlowModel& full, const LinearFlowModel& truncated) {
  if (full.n_mat.rows() != truncated.n_mat.rows() || full.n_mat.cols() != truncated.n_mat.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "models differ in shape");
  }
  const double denom = full.n_mat.norm();
  if (denom == 0.0) throw Error(ErrorCode::undefined_metric, "reference coefficient matrix is zero");
  return (full.n_mat - truncated.n_mat).norm() / denom;
}

double truncation_error(const LinearFlowModel& full, const TruncatedFlowModel& truncated) {
  return truncation_error(full, truncated.model);
}

RMatrix stack_injections(const CMatrix& s) {
  const Index p = s.cols();
  RMatrix h(2 * p, s.rows());
  h.topRows(p) = s.real().transpose();
  h.bottomRows(p) = s.imag().transpose();
  return h;
}

LinearPrediction predict(const LinearFlowModel& model, const RMatrix& h) {
  const Index p = model.n_phases();
  if (h.rows() != 2 * p) throw Error(ErrorCode::dimension_mismatch, "h must have 2|P| rows");
  const CMatrix nh = model.n_mat * h.cast<cplx>();
  const RMatrix kh = model.k_mat * h;
  LinearPrediction out;
  out.v = (nh.colwise() + model.w).transpose();
  out.magnitude = (kh.colwise() + model.w.cwiseAbs()).transpose();
  return out;
}

namespace {

void check_h(const TruncatedFlowModel& model, const RMatrix& h) {
  if (h.rows() != 2 * model.model.n_phases()) {
    throw Error(ErrorCode::dimension_mismatch, "h must have 2|P| rows");
  }
}

}  // namespace

std::map<Index, FlowTerm> area_flow_terms(const TruncatedFlowModel& model, const RMatrix& h, int area) {
  const auto& part = model.partition;
  if (area < 0 || area >= part.n_areas) {
    throw Error(ErrorCode::invalid_argument, "unknown area " + std::to_string(area + 1));
  }
  check_h(model, h);
  const Index p = model.model.n_phases();
  const Index steps = h.cols();
  const auto members = part.members();
  const auto& src = members[area];

  std::map<Index, FlowTerm> out;
  for (Index i = 0; i < p; ++i) {
    const int ai = part.assignment[i];
    if (ai != area && !part.adjacent(ai, area)) continue;
    FlowTerm term{CVector::Zero(steps), RVector::Zero(steps)};
    for (Index j : src) {
      for (Index half = 0; half < 2; ++half) {
        const Index col = j + half * p;
        const cplx n = model.model.n_mat(i, col);
        const double k = model.model.k_mat(i, col);
        for (Index t = 0; t < steps; ++t) {
          term.phasor(t) += n * h(col, t);
          term.magnitude(t) += k * h(col, t);
        }
      }
    }
    out.emplace(i, std::move(term));
  }
  return out;
}

std::vector<AreaFlowEstimate> decentralized_flow(const TruncatedFlowModel& model, const RMatrix& h,
                                                 MessageBus& bus) {
  const auto& part = model.partition;
  check_h(model, h);
  if (bus.size() != part.n_areas) {
    throw Error(ErrorCode::dimension_mismatch, "bus node count differs from area count");
  }
  const Index steps = h.cols();
  const auto members = part.members();

  // Own terms are kept locally between the two rounds.
  std::vector<std::map<Index, FlowTerm>> own(static_cast<std::size_t>(part.n_areas));

  bus.run_round(0, [&](int k, const Inbox&, Outbox& out) {
    auto terms = area_flow_terms(model, h, k);
    for (int j : bus.neighbors(k)) {
      std::vector<double> payload;
      payload.reserve(static_cast<std::size_t>(3 * steps * static_cast<Index>(members[j].size())));
      for (Index i : members[j]) {
        const auto& term = terms.at(i);
        for (Index t = 0; t < steps; ++t) payload.push_back(term.phasor(t).real());
        for (Index t = 0; t < steps; ++t) payload.push_back(term.phasor(t).imag());
        for (Index t = 0; t < steps; ++t) payload.push_back(term.magnitude(t));
      }
      out.send(j, MessageTag::flow_term, std::move(payload));
    }
    own[k] = std::move(terms);
  });

  return bus.run_round(0, [&](int l, const Inbox& in, Outbox&) {
    const auto& phases = members[l];
    const Index nl = static_cast<Index>(phases.size());
    AreaFlowEstimate est{phases, CMatrix(steps, nl), RMatrix(steps, nl)};
    for (Index a = 0; a < nl; ++a) {
      const Index i = phases[a];
      const auto& term = own[l].at(i);
      for (Index t = 0; t < steps; ++t) {
        est.v(t, a) = model.model.w(i) + term.phasor(t);
        est.magnitude(t, a) = std::abs(model.model.w(i)) + term.magnitude(t);
      }
    }
    for (int k : bus.neighbors(l)) {
      const auto& payload = in.get(k, MessageTag::flow_term);
      if (static_cast<Index>(payload.size()) != 3 * steps * nl) {
        throw Error(ErrorCode::protocol_violation, "flow-term payload has unexpected length");
      }
      for (Index a = 0; a < nl; ++a) {
        const double* block = payload.data() + 3 * steps * a;
        for (Index t = 0; t < steps; ++t) {
          est.v(t, a) += cplx(block[t], block[steps + t]);
          est.magnitude(t, a) += block[2 * steps + t];
        }
      }
    }
    return est;
  });
}

LinearPrediction assemble(const std::vector<AreaFlowEstimate>& estimates, Index n_phases) {
  if (estimates.empty()) throw Error(ErrorCode::invalid_argument, "no area estimates");
  const Index steps = estimates.front().v.rows();
  LinearPrediction out{CMatrix::Zero(steps, n_phases), RMatrix::Zero(steps, n_phases)};
  for (const auto& est : estimates) {
    for (std::size_t a = 0; a < est.phases.size(); ++a) {
      out.v.col(est.phases[a]) = est.v.col(static_cast<Index>(a));
      out.magnitude.col(est.phases[a]) = est.magnitude.col(static_cast<Index>(a));
    }
  }
  return out;
}

bool FlowCoupling::empty() const {
  for (const auto& row : coef)
    for (const auto& c : row)
      if (c.size() != 0) return false;
  return true;
}

RMatrix FlowCoupling::apply(const RMatrix& x) const {
  if (x.cols() != n_source || x.rows() % 5 != 0) {
    throw Error(ErrorCode::dimension_mismatch, "coupling input has wrong shape");
  }
  const Index steps = x.rows() / 5;
  RMatrix r = RMatrix::Zero(3 * steps, n_target);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 5; ++k) {
      const RMatrix& a = coef[c][k];
      if (a.size() == 0) continue;
      for (Index t = 0; t < steps; ++t) r.row(3 * t + c).noalias() += x.row(5 * t + k) * a.transpose();
    }
  }
  return r;
}

void FlowCoupling::apply_adjoint_add(const RMatrix& r, RMatrix& x) const {
  if (r.cols() != n_target || x.cols() != n_source || r.rows() % 3 != 0 || x.rows() / 5 != r.rows() / 3) {
    throw Error(ErrorCode::dimension_mismatch, "coupling adjoint has wrong shape");
  }
  const Index steps = r.rows() / 3;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 5; ++k) {
      const RMatrix& a = coef[c][k];
      if (a.size() == 0) continue;
      for (Index t = 0; t < steps; ++t) x.row(5 * t + k).noalias() += r.row(3 * t + c) * a;
    }
  }
}

RMatrix FlowCoupling::apply_adjoint(const RMatrix& r, Index time_steps) const {
  RMatrix x = RMatrix::Zero(5 * time_steps, n_source);
  apply_adjoint_add(r, x);
  return x;
}

FlowCoupling::Gram FlowCoupling::gram() const {
  Gram g;
  for (int k = 0; k < 5; ++k) {
    for (int kk = 0; kk < 5; ++kk) {
      RMatrix acc;
      for (int c = 0; c < 3; ++c) {
        const RMatrix& a = coef[c][k];
        const RMatrix& b = coef[c][kk];
        if (a.size() == 0 || b.size() == 0) continue;
        if (acc.size() == 0) acc = RMatrix::Zero(n_source, n_source);
        acc.noalias() += a.transpose() * b;
      }
      g[k][kk] = std::move(acc);
    }
  }
  return g;
}

RMatrix select_columns(const RMatrix& x, const std::vector<Index>& cols) {
  RMatrix out(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < cols.size(); ++a) out.col(static_cast<Index>(a)) = x.col(cols[a]);
  return out;
}

namespace {

RMatrix block(const RMatrix& a, const std::vector<Index>& rows, const std::vector<Index>& cols, Index offset,
              double scale) {
  RMatrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = scale * a(rows[i], cols[j] + offset);
  return out;
}

FlowCoupling coupling(const LinearFlowModel& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  const Index p = m.n_phases();
  const RMatrix re = m.n_mat.real();
  const RMatrix im = m.n_mat.imag();
  FlowCoupling c;
  c.n_target = static_cast<Index>(rows.size());
  c.n_source = static_cast<Index>(cols.size());
  c.coef[0][3] = block(re, rows, cols, 0, -1.0);
  c.coef[0][4] = block(re, rows, cols, p, -1.0);
  c.coef[1][3] = block(im, rows, cols, 0, -1.0);
  c.coef[1][4] = block(im, rows, cols, p, -1.0);
  c.coef[2][3] = block(m.k_mat, rows, cols, 0, -1.0);
  c.coef[2][4] = block(m.k_mat, rows, cols, p, -1.0);
  return c;
}

}  // namespace

AreaMaps build_area_maps(const TruncatedFlowModel& model) {
  const auto& part = model.partition;
  const auto& m = model.model;
  const Index p = m.n_phases();
  part.validate(p);
  const auto members = part.members();
  const auto neighbors = part.neighbors();

  AreaMaps maps;
  maps.time_steps = m.time_steps;
  maps.n_phases = p;
  for (int l = 0; l < part.n_areas; ++l) {
    AreaFlowMaps am;
    am.area = l;
    am.phases = members[l];
    const Index nl = static_cast<Index>(am.phases.size());
    am.self = coupling(m, am.phases, am.phases);
    for (int c = 0; c < 3; ++c) am.self.coef[c][c] = RMatrix::Identity(nl, nl);
    for (int j : neighbors[l]) am.incoming.emplace(j, coupling(m, am.phases, members[j]));

    am.target.resize(3 * m.time_steps, nl);
    for (Index a = 0; a < nl; ++a) {
      const cplx w = m.w(am.phases[a]);
      for (Index t = 0; t < m.time_steps; ++t) {
        am.target(3 * t, a) = w.real();
        am.target(3 * t + 1, a) = w.imag();
        am.target(3 * t + 2, a) = std::abs(w);
      }
    }
    maps.areas.push_back(std::move(am));
  }
  return maps;
}

RMatrix AreaMaps::residual(int area, const RMatrix& x) const {
  const auto& am = areas.at(static_cast<std::size_t>(area));
  if (x.rows() != 5 * time_steps || x.cols() != n_phases) {
    throw Error(ErrorCode::dimension_mismatch, "residual input must be 5T x |P|");
  }
  RMatrix r = am.self.apply(select_columns(x, am.phases)) - am.target;
  for (const auto& [j, c] : am.incoming) r += c.apply(select_columns(x, areas[j].phases));
  return r;
}

}  // namespace gridmc
