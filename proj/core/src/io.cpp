#include "gridmc/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridmc/error.hpp"

namespace gridmc::io {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::missing_file, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::missing_file, path.string());
  }
}

double parse_double(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw Error(ErrorCode::parse_error, context + ": expected a number, got '" + text + "'");
  }
  return value;
}

long long parse_integer(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw Error(ErrorCode::parse_error, context + ": expected an integer, got '" + text + "'");
  }
  return value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
  }
  return std::string(buf, ptr);
}

CMatrix read_matrix_market(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path);
  const std::string where = path.string();

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_error, where + ": empty file");
  std::istringstream banner(lower(line));
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%matrixmarket" || object != "matrix" || format != "coordinate") {
    throw Error(ErrorCode::parse_error, where + ": expected a coordinate MatrixMarket banner");
  }
  const bool is_complex = field == "complex";
  if (!is_complex && field != "real" && field != "integer") {
    throw Error(ErrorCode::parse_error, where + ": unsupported field '" + field + "'");
  }
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general") {
    throw Error(ErrorCode::parse_error, where + ": unsupported symmetry '" + symmetry + "'");
  }

  long long rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream size_line(t);
    if (!(size_line >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
      throw Error(ErrorCode::parse_error, where + ": malformed size line '" + t + "'");
    }
    break;
  }
  if (rows < 0) throw Error(ErrorCode::parse_error, where + ": missing size line");

  CMatrix a = CMatrix::Zero(rows, cols);
  long long seen = 0;
  long long line_no = 0;
  while (seen < nnz && std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream entry(t);
    std::string si, sj, sre, sim;
    entry >> si >> sj >> sre;
    if (is_complex) entry >> sim;
    const std::string ctx = where + " entry " + std::to_string(seen + 1);
    const long long i = parse_integer(si, ctx) - 1;
    const long long j = parse_integer(sj, ctx) - 1;
    if (i < 0 || i >= rows || j < 0 || j >= cols) {
      throw Error(ErrorCode::dimension_mismatch, ctx + ": index out of range");
    }
    const cplx value(parse_double(sre, ctx), is_complex ? parse_double(sim, ctx) : 0.0);
    a(i, j) = value;
    if (symmetric && i != j) a(j, i) = value;
    ++seen;
  }
  if (seen != nnz) {
    throw Error(ErrorCode::parse_error, where + ": expected " + std::to_string(nnz) +
                                            " entries, found " + std::to_string(seen));
  }
  return a;
}

void write_matrix_market(const std::filesystem::path& path, const CMatrix& a) {
  auto out = open_out(path);
  Index nnz = 0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (a(i, j) != cplx(0.0, 0.0)) ++nnz;
  out << "%%MatrixMarket matrix coordinate complex general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << nnz << '\n';
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (a(i, j) == cplx(0.0, 0.0)) continue;
      out << i + 1 << ' ' << j + 1 << ' ' << format_double(a(i, j).real()) << ' '
          << format_double(a(i, j).imag()) << '\n';
    }
  }
}

void write_matrix_market(const std::filesystem::path& path, const RMatrix& a) {
  auto out = open_out(path);
  Index nnz = (a.array() != 0.0).count();
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << nnz << '\n';
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (a(i, j) == 0.0) continue;
      out << i + 1 << ' ' << j + 1 << ' ' << format_double(a(i, j)) << '\n';
    }
  }
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path, bool skip_header) {
  require_file(path);
  std::ifstream in(path);
  std::vector<CsvRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    CsvRow row;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) row.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv(const std::filesystem::path& path, const CsvRow& header,
               const std::vector<CsvRow>& rows) {
  auto out = open_out(path);
  auto emit = [&out](const CsvRow& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  if (!header.empty()) emit(header);
  for (const auto& row : rows) emit(row);
}

}  // namespace gridmc::io
