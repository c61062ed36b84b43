// tplda/io.cc

// Copyright 2026  tplda authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "tplda/io.h"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace tplda {
namespace io {

namespace {

void write_le(std::ostream& os, uint64_t v, int nbytes) {
  char buf[8];
  for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<char>(v >> (8 * i));
  os.write(buf, nbytes);
}

uint64_t read_le(std::istream& is, int nbytes, const std::string& context) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), nbytes);
  if (is.gcount() != nbytes)
    throw FormatError(context + ": truncated file");
  uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i)
    v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& os, uint32_t v) { write_le(os, v, 4); }
void write_u64(std::ostream& os, uint64_t v) { write_le(os, v, 8); }

void write_f64(std::ostream& os, double v) {
  write_le(os, std::bit_cast<uint64_t>(v), 8);
}

void write_magic(std::ostream& os, const char magic[8]) {
  os.write(magic, 8);
}

uint32_t read_u32(std::istream& is, const std::string& context) {
  return static_cast<uint32_t>(read_le(is, 4, context));
}

uint64_t read_u64(std::istream& is, const std::string& context) {
  return read_le(is, 8, context);
}

double read_f64(std::istream& is, const std::string& context) {
  return std::bit_cast<double>(read_le(is, 8, context));
}

void expect_magic(std::istream& is, const char magic[8],
                  const std::string& context) {
  char buf[8];
  is.read(buf, 8);
  if (is.gcount() != 8 || std::memcmp(buf, magic, 8) != 0)
    throw FormatError(context + ": bad magic (expected "
                      + std::string(magic, 8) + ")");
}

void write_matrix(std::ostream& os, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(os, m(r, c));
}

void write_vector(std::ostream& os, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(os, v(i));
}

MatrixXd read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols,
                     const std::string& context) {
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_f64(is, context);
  return m;
}

VectorXd read_vector(std::istream& is, Eigen::Index n,
                     const std::string& context) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = read_f64(is, context);
  return v;
}

}  // namespace io
}  // namespace tplda
