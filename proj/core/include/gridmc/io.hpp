#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridmc/types.hpp"

namespace gridmc::io {

// Matrix Market coordinate format. Reads "real", "integer" and "complex"
// fields with "general" or "symmetric" symmetry; values are written with
// round-trip precision.
CMatrix read_matrix_market(const std::filesystem::path& path);
void write_matrix_market(const std::filesystem::path& path, const CMatrix& a);
void write_matrix_market(const std::filesystem::path& path, const RMatrix& a);

using CsvRow = std::vector<std::string>;

std::vector<CsvRow> read_csv(const std::filesystem::path& path, bool skip_header);
void write_csv(const std::filesystem::path& path, const CsvRow& header,
               const std::vector<CsvRow>& rows);

double parse_double(const std::string& text, const std::string& context);
long long parse_integer(const std::string& text, const std::string& context);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

void require_file(const std::filesystem::path& path);

}  // namespace gridmc::io
