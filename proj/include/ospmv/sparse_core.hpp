// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ospmv {

/// Row/column index. Four bytes, matching the traffic model.
using index_t = std::int32_t;
/// Offset into the nonzero arrays.
using offset_t = std::int64_t;

using DenseVector = std::vector<double>;

/// perm[new_index] = old_index.
using Permutation = std::vector<index_t>;

struct Triple {
  index_t row = 0;
  index_t col = 0;
  double value = 0.0;

  bool operator==(const Triple&) const = default;
};

/// Assembly staging format. Duplicates are allowed and summed by coo_to_csr.
struct CooTriples {
  index_t n_rows = 0;
  index_t n_cols = 0;
  std::vector<Triple> entries;

  bool operator==(const CooTriples&) const = default;
};

/// Compressed row storage. Always canonical: row_ptr starts at 0 and is
/// nondecreasing, column indices are in range and strictly increasing per row.
class CsrMatrix {
 public:
  CsrMatrix() : row_ptr_(1, 0) {}

  /// Takes ownership of the arrays after validating every invariant.
  /// Throws ValidationError naming the first violation.
  CsrMatrix(index_t n_rows, index_t n_cols, std::vector<offset_t> row_ptr,
            std::vector<index_t> col_idx, std::vector<double> val);

  static CsrMatrix identity(index_t n);

  index_t n_rows() const { return n_rows_; }
  index_t n_cols() const { return n_cols_; }
  offset_t n_nz() const { return static_cast<offset_t>(val_.size()); }
  bool square() const { return n_rows_ == n_cols_; }

  /// Average nonzeros per row (N_nzr), 0 for an empty matrix.
  double nnzr() const;
  offset_t row_nnz(index_t row) const { return row_ptr_[row + 1] - row_ptr_[row]; }
  offset_t max_row_nnz() const;

  std::span<const offset_t> row_ptr() const { return row_ptr_; }
  std::span<const index_t> col_idx() const { return col_idx_; }
  std::span<const double> val() const { return val_; }

  bool operator==(const CsrMatrix&) const = default;

 private:
  index_t n_rows_ = 0;
  index_t n_cols_ = 0;
  std::vector<offset_t> row_ptr_;
  std::vector<index_t> col_idx_;
  std::vector<double> val_;
};

CsrMatrix coo_to_csr(const CooTriples& t);
CooTriples csr_to_coo(const CsrMatrix& a);

// Kernels. Rows are processed in ascending order and each row accumulates in
// ascending nonzero order, so every kernel below produces bitwise-identical
// row results for the same row data.

/// y[i] = sum_j a(i,j) * x[j] for rows [row_begin, row_end).
void spmv_rows(const CsrMatrix& a, std::span<const double> x, std::span<double> y,
               index_t row_begin, index_t row_end);
/// y[i] += sum_j a(i,j) * x[j] for rows [row_begin, row_end).
void spmv_accumulate_rows(const CsrMatrix& a, std::span<const double> x, std::span<double> y,
                          index_t row_begin, index_t row_end);

/// Same as spmv_accumulate_rows restricted to the listed rows, which should
/// be ascending; avoids scanning rows that are known to be empty.
void spmv_accumulate_listed_rows(const CsrMatrix& a, std::span<const double> x,
                                 std::span<double> y, std::span<const index_t> rows);

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
DenseVector spmv(const CsrMatrix& a, std::span<const double> b);

/// Two passes over C: the first initialises from a_local, the second adds a_remote.
DenseVector spmv_split(const CsrMatrix& a_local, const CsrMatrix& a_remote,
                       std::span<const double> b_local, std::span<const double> b_halo);

/// Cuts rows into n_chunks contiguous ranges of roughly equal nonzero count.
/// Each boundary is the row boundary nearest to k * n_nz / n_chunks, so every
/// chunk is within max_row_nnz of the mean. Returns n_chunks + 1 row offsets.
std::vector<index_t> chunk_rows_by_nonzeros(std::span<const offset_t> row_ptr, int n_chunks);

/// Row-exclusive multi-worker spmv; bitwise equal to spmv for any n_workers.
DenseVector spmv_chunked(const CsrMatrix& a, std::span<const double> b, int n_workers);

/// Reverse Cuthill-McKee ordering on the symmetrized pattern.
Permutation rcm_permutation(const CsrMatrix& a);

/// Returns P A P^T, i.e. result(i, j) = a(perm[i], perm[j]), in canonical form.
CsrMatrix permute(const CsrMatrix& a, const Permutation& perm);
/// result[i] = v[perm[i]].
DenseVector permute_vector(std::span<const double> v, const Permutation& perm);
Permutation inverse_permutation(const Permutation& perm);
bool is_permutation(const Permutation& perm, index_t n);

/// max |i - col| over all nonzeros, 0 for an empty matrix.
index_t matrix_bandwidth(const CsrMatrix& a);

}  // namespace ospmv
