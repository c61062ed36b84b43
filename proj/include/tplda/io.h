// tplda/io.h

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

#ifndef TPLDA_IO_H_
#define TPLDA_IO_H_

#include <cstdint>
#include <iosfwd>
#include <string>

#include "tplda/common.h"

// Little-endian binary primitives shared by all tplda file formats.
// Every reader takes a `context` string (normally the file name) that is
// prefixed to error messages.

namespace tplda {
namespace io {

void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f64(std::ostream& os, double v);
void write_magic(std::ostream& os, const char magic[8]);

uint32_t read_u32(std::istream& is, const std::string& context);
uint64_t read_u64(std::istream& is, const std::string& context);
double read_f64(std::istream& is, const std::string& context);
void expect_magic(std::istream& is, const char magic[8],
                  const std::string& context);

/// Rows are written contiguously regardless of the matrix's storage order.
void write_matrix(std::ostream& os, const MatrixXd& m);
void write_vector(std::ostream& os, const VectorXd& v);

MatrixXd read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols,
                     const std::string& context);
VectorXd read_vector(std::istream& is, Eigen::Index n,
                     const std::string& context);

}  // namespace io
}  // namespace tplda

#endif  // TPLDA_IO_H_
