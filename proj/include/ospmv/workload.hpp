// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include "ospmv/sparse_core.hpp"

namespace ospmv {

// Matrix Market coordinate format. Supported headers:
//   %%MatrixMarket matrix coordinate {real|integer} {general|symmetric}
// Indices are 1-based on disk and 0-based in memory. Symmetric files are
// expanded to the full pattern. Errors carry the offending line number.

CooTriples read_matrix_market(const std::filesystem::path& path);
CooTriples parse_matrix_market(std::istream& in, const std::string& source = "<stream>");

/// Writes a general real coordinate file with shortest round-trip values.
void write_matrix_market(const std::filesystem::path& path, const CsrMatrix& a);
void write_matrix_market(std::ostream& out, const CsrMatrix& a);

/// 7-point Laplacian on an nx x ny x nz grid, x fastest. Diagonal 6, axis
/// neighbours -1.
CooTriples gen_stencil7(index_t nx, index_t ny, index_t nz);

struct BlockBandParams {
  index_t dim = 100000;
  index_t block = 500;
  /// Couplings reach up to this many columns from the diagonal, both inside
  /// a diagonal block and around the off-diagonal band.
  index_t inner_band = 12;
  /// Offset of the off-diagonal coupling band; 0 disables it.
  index_t outer_stride = 2500;
  double target_nnzr = 15.0;
  std::uint64_t seed = 1;
};

/// Seeded, structurally symmetric matrix mimicking a blocked Hamiltonian
/// pattern. Values (symmetric) are in [0.5, 1.5).
CooTriples gen_block_band(const BlockBandParams& p);

struct Stencil7Params {
  index_t nx = 16;
  index_t ny = 16;
  index_t nz = 16;
};

struct MatrixFile {
  std::filesystem::path path;
};

enum class RhsKind { Constant, Ramp, Uniform };

struct RhsRule {
  RhsKind kind = RhsKind::Uniform;
  double constant = 1.0;
};

struct ProblemSpec {
  std::variant<MatrixFile, Stencil7Params, BlockBandParams> source = Stencil7Params{};
  RhsRule rhs;
  std::uint64_t seed = 42;
};

struct Problem {
  std::string name;
  CsrMatrix matrix;
  DenseVector rhs;
};

/// Parses "stencil7:N", "stencil7:NX,NY,NZ",
/// "block_band:dim=..,block=..,band=..,stride=..,nnzr=..,seed=.." or a file path.
ProblemSpec parse_problem(const std::string& text);
/// Parses "uniform", "ramp", "const" or "const:<value>".
RhsRule parse_rhs(const std::string& text);

std::string problem_name(const ProblemSpec& spec);
CsrMatrix assemble_matrix(const ProblemSpec& spec);
Problem assemble(const ProblemSpec& spec);

/// Constant c, ramp (i+1)/n, or uniform [0,1) from the seed.
DenseVector make_rhs(const RhsRule& rule, index_t n, std::uint64_t seed);

/// Applies spmv `iterations` times, feeding C back as the next B.
DenseVector sequential_oracle(const CsrMatrix& a, std::span<const double> b, int iterations);
DenseVector sequential_oracle(const ProblemSpec& spec, int iterations);

/// Uniform double in [0,1) from the top 53 bits of a 64-bit draw. Portable
/// across standard libraries, unlike std::uniform_real_distribution.
double unit_uniform(std::uint64_t bits);

}  // namespace ospmv
