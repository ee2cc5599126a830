#include "gridmc/datamatrix.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gridmc/error.hpp"
#include "gridmc/io.hpp"

namespace gridmc {

const char* to_string(MaskPolicy policy) noexcept {
  return policy == MaskPolicy::scada ? "scada" : "uniform";
}

MaskPolicy parse_mask_policy(const std::string& text) {
  if (text == "scada") return MaskPolicy::scada;
  if (text == "uniform") return MaskPolicy::uniform;
  throw Error(ErrorCode::invalid_argument, "unknown mask policy '" + text + "'");
}

RMatrix ObservationMask::indicator() const {
  RMatrix out = RMatrix::Zero(rows, cols);
  for (auto [i, j] : entries) out(i, j) = 1.0;
  return out;
}

void ObservationMask::validate() const {
  for (auto [i, j] : entries) {
    if (i < 0 || i >= rows || j < 0 || j >= cols) {
      throw Error(ErrorCode::invalid_argument, "mask entry (" + std::to_string(i) + "," + std::to_string(j) +
                                                   ") outside " + std::to_string(rows) + "x" +
                                                   std::to_string(cols));
    }
  }
}

MeasurementMatrix build_matrix(const CMatrix& v, const CMatrix& s) {
  if (v.rows() != s.rows() || v.cols() != s.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "voltage and injection shapes differ");
  }
  const Index steps = v.rows();
  MeasurementMatrix m;
  m.data.resize(5 * steps, v.cols());
  for (Index t = 0; t < steps; ++t) {
    m.data.row(5 * t + row_re_v) = v.row(t).real();
    m.data.row(5 * t + row_im_v) = v.row(t).imag();
    m.data.row(5 * t + row_abs_v) = v.row(t).cwiseAbs();
    m.data.row(5 * t + row_p) = s.row(t).real();
    m.data.row(5 * t + row_q) = s.row(t).imag();
  }
  return m;
}

ObservationMask sample_mask(Index m, Index n, double fraction, MaskPolicy policy, Seed seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "fraction must lie in [0, 1]");
  }
  if (policy == MaskPolicy::scada && m % 5 != 0) {
    throw Error(ErrorCode::invalid_argument, "scada policy needs 5T rows");
  }
  std::vector<std::pair<Index, Index>> eligible;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) {
      if (policy == MaskPolicy::scada && i % 5 < row_abs_v) continue;
      eligible.emplace_back(i, j);
    }
  }
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(eligible.size()) + 0.5));
  ObservationMask mask;
  mask.policy = policy;
  mask.rows = m;
  mask.cols = n;
  mask.entries.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(mask.entries), count, rng);
  return mask;
}

ObservationMask full_mask(Index m, Index n) { return sample_mask(m, n, 1.0, MaskPolicy::uniform, 0); }

RMatrix apply_mask(const RMatrix& x, const ObservationMask& mask) {
  if (x.rows() != mask.rows || x.cols() != mask.cols) {
    throw Error(ErrorCode::dimension_mismatch, "mask and matrix shapes differ");
  }
  mask.validate();
  RMatrix out = RMatrix::Zero(x.rows(), x.cols());
  for (auto [i, j] : mask.entries) out(i, j) = x(i, j);
  return out;
}

MeasurementMatrix add_noise(const MeasurementMatrix& m, double percent, Seed seed) {
  if (percent < 0.0) throw Error(ErrorCode::invalid_argument, "noise percent must be >= 0");
  MeasurementMatrix out = m;
  if (percent == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = percent / 100.0;
  for (Index j = 0; j < out.data.cols(); ++j) {
    for (Index i = 0; i < out.data.rows(); ++i) {
      const double z = normal(rng);  // drawn for every cell so streams do not depend on values
      out.data(i, j) += scale * std::abs(m.data(i, j)) * z;
    }
  }
  return out;
}

RowSelectors row_selectors(Index time_steps) {
  const Index m = 5 * time_steps;
  RowSelectors sel;
  for (Index t = 0; t < time_steps; ++t) {
    CVector phasor = CVector::Zero(m);
    phasor(5 * t + row_re_v) = 1.0;
    phasor(5 * t + row_im_v) = cplx(0.0, 1.0);
    CVector magnitude = CVector::Zero(m);
    magnitude(5 * t + row_abs_v) = 1.0;
    sel.a.push_back(std::move(phasor));
    sel.a.push_back(std::move(magnitude));
    sel.c.push_back(RVector::Unit(m, 5 * t + row_p));
    sel.c.push_back(RVector::Unit(m, 5 * t + row_q));
  }
  return sel;
}

FlowData extract_f1_f2(const RMatrix& x) {
  if (x.rows() % 5 != 0) throw Error(ErrorCode::dimension_mismatch, "row count must be a multiple of 5");
  const Index steps = x.rows() / 5;
  const auto sel = row_selectors(steps);
  const CMatrix xc = x.cast<cplx>();
  FlowData out{CMatrix(2 * steps, x.cols()), RMatrix(2 * steps, x.cols())};
  for (Index k = 0; k < 2 * steps; ++k) {
    out.f1.row(k) = sel.a[k].transpose() * xc;
    out.f2.row(k) = sel.c[k].transpose() * x;
  }
  return out;
}

CMatrix voltage_phasors(const RMatrix& x) {
  if (x.rows() % 5 != 0) throw Error(ErrorCode::dimension_mismatch, "row count must be a multiple of 5");
  const Index steps = x.rows() / 5;
  CMatrix v(steps, x.cols());
  for (Index t = 0; t < steps; ++t) {
    for (Index j = 0; j < x.cols(); ++j) v(t, j) = cplx(x(5 * t + row_re_v, j), x(5 * t + row_im_v, j));
  }
  return v;
}

RVector sv_spectrum(const RMatrix& m) {
  if (m.size() == 0) return RVector();
  Eigen::BDCSVD<RMatrix> svd(m);
  return svd.singularValues();
}

double energy_fraction(const RVector& sigma, Index k) {
  const double total = sigma.squaredNorm();
  if (total == 0.0) throw Error(ErrorCode::undefined_metric, "all singular values are zero");
  k = std::min(k, sigma.size());
  return sigma.head(k).squaredNorm() / total;
}

Index scada_eligible_cells(Index m, Index n) { return 3 * (m / 5) * n; }

bool is_low_observability(const ObservationMask& mask) {
  const double eligible = static_cast<double>(scada_eligible_cells(mask.rows, mask.cols));
  return 3.0 * static_cast<double>(mask.size()) < 2.0 * eligible;
}

void write_matrix_csv(const std::filesystem::path& path, const RMatrix& m) {
  io::CsvRow header;
  for (Index j = 0; j < m.cols(); ++j) header.push_back("c" + std::to_string(j));
  std::vector<io::CsvRow> rows;
  for (Index i = 0; i < m.rows(); ++i) {
    io::CsvRow row;
    for (Index j = 0; j < m.cols(); ++j) row.push_back(io::format_double(m(i, j)));
    rows.push_back(std::move(row));
  }
  io::write_csv(path, header, rows);
}

RMatrix read_matrix_csv(const std::filesystem::path& path) {
  const auto rows = io::read_csv(path, true);
  if (rows.empty()) return RMatrix();
  RMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw Error(ErrorCode::dimension_mismatch, path.string() + ": ragged row " + std::to_string(i + 1));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = io::parse_double(rows[i][j], path.string());
    }
  }
  return m;
}

void write_mask_csv(const std::filesystem::path& path, const ObservationMask& mask) {
  std::vector<io::CsvRow> rows;
  rows.reserve(mask.entries.size());
  for (auto [i, j] : mask.entries) rows.push_back({std::to_string(i), std::to_string(j)});
  io::write_csv(path, {"row", "col"}, rows);
}

ObservationMask read_mask_csv(const std::filesystem::path& path, Index m, Index n, MaskPolicy policy) {
  ObservationMask mask;
  mask.rows = m;
  mask.cols = n;
  mask.policy = policy;
  for (const auto& row : io::read_csv(path, true)) {
    if (row.size() < 2) throw Error(ErrorCode::parse_error, path.string() + ": expected row,col");
    mask.entries.emplace_back(io::parse_integer(row[0], path.string()), io::parse_integer(row[1], path.string()));
  }
  mask.validate();
  return mask;
}

}  // namespace gridmc
