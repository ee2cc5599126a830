#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gridmc/types.hpp"

namespace gridmc {

// Row offsets inside each 5-row time block.
enum DataRow : Index { row_re_v = 0, row_im_v = 1, row_abs_v = 2, row_p = 3, row_q = 4 };

struct MeasurementMatrix {
  RMatrix data;  // 5T x |P|

  Index time_steps() const { return data.rows() / 5; }
};

enum class MaskPolicy { uniform, scada };

const char* to_string(MaskPolicy policy) noexcept;
MaskPolicy parse_mask_policy(const std::string& text);

struct ObservationMask {
  std::vector<std::pair<Index, Index>> entries;  // (row, col), sorted column-major
  MaskPolicy policy = MaskPolicy::uniform;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return static_cast<Index>(entries.size()); }
  RMatrix indicator() const;  // 1 on observed cells
  void validate() const;      // range check
};

struct RowSelectors {
  std::vector<CVector> a;  // 2T selectors of the voltage rows
  std::vector<RVector> c;  // 2T selectors of the power rows
};

struct FlowData {
  CMatrix f1;  // 2T x n: row 2t = a-selected phasor, row 2t+1 = magnitude
  RMatrix f2;  // 2T x n: row 2t = Re s, row 2t+1 = Im s
};

MeasurementMatrix build_matrix(const CMatrix& v, const CMatrix& s);
ObservationMask sample_mask(Index m, Index n, double fraction, MaskPolicy policy, Seed seed);
ObservationMask full_mask(Index m, Index n);
RMatrix apply_mask(const RMatrix& x, const ObservationMask& mask);
MeasurementMatrix add_noise(const MeasurementMatrix& m, double percent, Seed seed);

RowSelectors row_selectors(Index time_steps);
FlowData extract_f1_f2(const RMatrix& x);

// Voltage phasors T x n read from the Re v / Im v rows.
CMatrix voltage_phasors(const RMatrix& x);

RVector sv_spectrum(const RMatrix& m);
double energy_fraction(const RVector& sigma, Index k);

Index scada_eligible_cells(Index m, Index n);
bool is_low_observability(const ObservationMask& mask);

void write_matrix_csv(const std::filesystem::path& path, const RMatrix& m);
RMatrix read_matrix_csv(const std::filesystem::path& path);
void write_mask_csv(const std::filesystem::path& path, const ObservationMask& mask);
ObservationMask read_mask_csv(const std::filesystem::path& path, Index m, Index n, MaskPolicy policy);

}  // namespace gridmc
