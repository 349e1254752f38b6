#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"

namespace ssmf {

// Text format: CSV, one matrix row per line, '.' decimal, no header.
// Binary format: magic "SSMF", u32 rows, u32 cols, then row-major f64
// payload, all little-endian.

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline double parse_double(const char* first, const char* last,
                           const std::string& path) {
  double v = 0.0;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    fail(ErrorCode::InvalidInput,
         path + ": malformed numeric field '" + std::string(first, last) + "'");
  return v;
}

inline void put_u32_le(std::ofstream& out, std::uint32_t v) {
  char buf[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
  out.write(buf, 4);
}

inline std::uint32_t get_u32_le(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    fail(ErrorCode::TruncatedFile, path + ": truncated header");
  return static_cast<std::uint32_t>(buf[0]) |
         (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) |
         (static_cast<std::uint32_t>(buf[3]) << 24);
}

}  // namespace detail

inline void write_matrix_csv(const std::string& path, const DenseMatrix& a) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + path);
  std::string line;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (j) line.push_back(',');
      detail::append_double(line, a(i, j));
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

inline DenseMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open: " + path);
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t row_cols = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      std::size_t a = start, b = end;
      while (a < b && (line[a] == ' ' || line[a] == '\t')) ++a;
      while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t')) --b;
      values.push_back(
          detail::parse_double(line.data() + a, line.data() + b, path));
      ++row_cols;
      start = end + 1;
      if (end == line.size()) break;
    }
    if (rows == 0)
      cols = row_cols;
    else if (row_cols != cols)
      fail(ErrorCode::InvalidDimensions,
           path + ": ragged CSV row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) fail(ErrorCode::InvalidInput, path + ": empty CSV");
  DenseMatrix a(rows, cols);
  a.data() = std::move(values);
  if (!a.all_finite())
    fail(ErrorCode::InvalidInput, path + ": non-finite entry");
  return a;
}

inline void write_matrix_bin(const std::string& path, const DenseMatrix& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + path);
  out.write("SSMF", 4);
  detail::put_u32_le(out, static_cast<std::uint32_t>(a.rows()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(a.cols()));
  for (double v : a.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char buf[8];
    for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    out.write(buf, 8);
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

inline DenseMatrix read_matrix_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SSMF", 4) != 0)
    fail(ErrorCode::BadMagic, path + ": bad magic, expected SSMF");
  const std::uint32_t rows = detail::get_u32_le(in, path);
  const std::uint32_t cols = detail::get_u32_le(in, path);
  DenseMatrix a(rows, cols);
  for (double& v : a.data()) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8))
      fail(ErrorCode::TruncatedFile, path + ": truncated payload");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
    std::memcpy(&v, &bits, 8);
  }
  return a;
}

/// Reads a vector from CSV: either a single row or a single column.
inline std::vector<double> read_vector_csv(const std::string& path) {
  DenseMatrix a = read_matrix_csv(path);
  if (a.rows() != 1 && a.cols() != 1)
    fail(ErrorCode::InvalidInput, path + ": expected a single-row or single-column CSV vector");
  return a.data();
}

inline void write_vector_csv(const std::string& path,
                             const std::vector<double>& v) {
  DenseMatrix a(1, v.size());
  a.data() = v;
  write_matrix_csv(path, a);
}

}  // namespace ssmf
