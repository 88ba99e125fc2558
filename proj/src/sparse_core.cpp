// SPDX-License-Identifier: Apache-2.0
#include "ospmv/sparse_core.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "ospmv/error.hpp"

namespace ospmv {

CsrMatrix::CsrMatrix(index_t n_rows, index_t n_cols, std::vector<offset_t> row_ptr,
                     std::vector<index_t> col_idx, std::vector<double> val)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      val_(std::move(val)) {
  if (n_rows_ < 0 || n_cols_ < 0) {
    throw ValidationError("CsrMatrix: negative dimension");
  }
  if (row_ptr_.size() != static_cast<std::size_t>(n_rows_) + 1) {
    throw ValidationError("CsrMatrix: row_ptr must have n_rows + 1 entries");
  }
  if (col_idx_.size() != val_.size()) {
    throw ValidationError("CsrMatrix: col_idx and val lengths differ");
  }
  if (row_ptr_.front() != 0 || row_ptr_.back() != static_cast<offset_t>(val_.size())) {
    throw ValidationError("CsrMatrix: row_ptr must start at 0 and end at n_nz");
  }
  for (index_t i = 0; i < n_rows_; ++i) {
    if (row_ptr_[i + 1] < row_ptr_[i]) {
      throw ValidationError("CsrMatrix: row_ptr decreases at row " + std::to_string(i));
    }
    for (offset_t j = row_ptr_[i]; j < row_ptr_[i + 1]; ++j) {
      const index_t c = col_idx_[j];
      if (c < 0 || c >= n_cols_) {
        throw ValidationError("CsrMatrix: column " + std::to_string(c) + " out of range in row " +
                              std::to_string(i));
      }
      if (j > row_ptr_[i] && col_idx_[j - 1] >= c) {
        throw ValidationError("CsrMatrix: columns not strictly increasing in row " +
                              std::to_string(i));
      }
    }
  }
}

CsrMatrix CsrMatrix::identity(index_t n) {
  std::vector<offset_t> rp(static_cast<std::size_t>(n) + 1);
  std::iota(rp.begin(), rp.end(), offset_t{0});
  std::vector<index_t> ci(n);
  std::iota(ci.begin(), ci.end(), index_t{0});
  return CsrMatrix(n, n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
}

double CsrMatrix::nnzr() const {
  return n_rows_ == 0 ? 0.0 : static_cast<double>(n_nz()) / static_cast<double>(n_rows_);
}

offset_t CsrMatrix::max_row_nnz() const {
  offset_t m = 0;
  for (index_t i = 0; i < n_rows_; ++i) m = std::max(m, row_nnz(i));
  return m;
}

CsrMatrix coo_to_csr(const CooTriples& t) {
  if (t.n_rows < 0 || t.n_cols < 0) throw ValidationError("coo_to_csr: negative dimension");
  for (std::size_t k = 0; k < t.entries.size(); ++k) {
    const auto& e = t.entries[k];
    if (e.row < 0 || e.row >= t.n_rows || e.col < 0 || e.col >= t.n_cols) {
      std::ostringstream os;
      os << "coo_to_csr: triple #" << k << " (" << e.row << ", " << e.col << ", " << e.value
         << ") is outside a " << t.n_rows << "x" << t.n_cols << " matrix";
      throw ValidationError(os.str());
    }
  }

  // Counting sort by row, then sort each row by column and merge duplicates.
  std::vector<offset_t> count(static_cast<std::size_t>(t.n_rows) + 1, 0);
  for (const auto& e : t.entries) ++count[e.row + 1];
  std::partial_sum(count.begin(), count.end(), count.begin());

  std::vector<std::pair<index_t, double>> staged(t.entries.size());
  {
    std::vector<offset_t> next(count.begin(), count.end() - 1);
    for (const auto& e : t.entries) staged[next[e.row]++] = {e.col, e.value};
  }

  std::vector<offset_t> row_ptr(static_cast<std::size_t>(t.n_rows) + 1, 0);
  std::vector<index_t> col_idx;
  std::vector<double> val;
  col_idx.reserve(staged.size());
  val.reserve(staged.size());
  for (index_t i = 0; i < t.n_rows; ++i) {
    auto first = staged.begin() + count[i];
    auto last = staged.begin() + count[i + 1];
    std::stable_sort(first, last, [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto it = first; it != last; ++it) {
      if (static_cast<offset_t>(col_idx.size()) > row_ptr[i] && col_idx.back() == it->first) {
        val.back() += it->second;
      } else {
        col_idx.push_back(it->first);
        val.push_back(it->second);
      }
    }
    row_ptr[i + 1] = static_cast<offset_t>(col_idx.size());
  }
  return CsrMatrix(t.n_rows, t.n_cols, std::move(row_ptr), std::move(col_idx), std::move(val));
}

CooTriples csr_to_coo(const CsrMatrix& a) {
  CooTriples t{a.n_rows(), a.n_cols(), {}};
  t.entries.reserve(static_cast<std::size_t>(a.n_nz()));
  const auto rp = a.row_ptr();
  for (index_t i = 0; i < a.n_rows(); ++i) {
    for (offset_t j = rp[i]; j < rp[i + 1]; ++j) {
      t.entries.push_back({i, a.col_idx()[j], a.val()[j]});
    }
  }
  return t;
}

void spmv_rows(const CsrMatrix& a, std::span<const double> x, std::span<double> y,
               index_t row_begin, index_t row_end) {
  const offset_t* rp = a.row_ptr().data();
  const index_t* ci = a.col_idx().data();
  const double* v = a.val().data();
  const double* b = x.data();
  double* c = y.data();
  for (index_t i = row_begin; i < row_end; ++i) {
    double sum = 0.0;
    for (offset_t j = rp[i]; j < rp[i + 1]; ++j) sum += v[j] * b[ci[j]];
    c[i] = sum;
  }
}

void spmv_accumulate_rows(const CsrMatrix& a, std::span<const double> x, std::span<double> y,
                          index_t row_begin, index_t row_end) {
  const offset_t* rp = a.row_ptr().data();
  const index_t* ci = a.col_idx().data();
  const double* v = a.val().data();
  const double* b = x.data();
  double* c = y.data();
  for (index_t i = row_begin; i < row_end; ++i) {
    if (rp[i] == rp[i + 1]) continue;
    double sum = c[i];
    for (offset_t j = rp[i]; j < rp[i + 1]; ++j) sum += v[j] * b[ci[j]];
    c[i] = sum;
  }
}

void spmv_accumulate_listed_rows(const CsrMatrix& a, std::span<const double> x,
                                 std::span<double> y, std::span<const index_t> rows) {
  const offset_t* rp = a.row_ptr().data();
  const index_t* ci = a.col_idx().data();
  const double* v = a.val().data();
  const double* b = x.data();
  double* c = y.data();
  for (const index_t i : rows) {
    double sum = c[i];
    for (offset_t j = rp[i]; j < rp[i + 1]; ++j) sum += v[j] * b[ci[j]];
    c[i] = sum;
  }
}

namespace {

void check_shapes(const CsrMatrix& a, std::size_t x_len, std::size_t y_len, const char* what) {
  if (x_len != static_cast<std::size_t>(a.n_cols()) ||
      y_len != static_cast<std::size_t>(a.n_rows())) {
    std::ostringstream os;
    os << what << ": dimension mismatch (matrix " << a.n_rows() << "x" << a.n_cols()
       << ", input length " << x_len << ", output length " << y_len << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  check_shapes(a, x.size(), y.size(), "spmv");
  spmv_rows(a, x, y, 0, a.n_rows());
}

DenseVector spmv(const CsrMatrix& a, std::span<const double> b) {
  DenseVector c(static_cast<std::size_t>(a.n_rows()));
  spmv(a, b, c);
  return c;
}

DenseVector spmv_split(const CsrMatrix& a_local, const CsrMatrix& a_remote,
                       std::span<const double> b_local, std::span<const double> b_halo) {
  if (a_local.n_rows() != a_remote.n_rows()) {
    throw ValidationError("spmv_split: local and remote parts have different row counts");
  }
  DenseVector c(static_cast<std::size_t>(a_local.n_rows()));
  check_shapes(a_local, b_local.size(), c.size(), "spmv_split (local)");
  check_shapes(a_remote, b_halo.size(), c.size(), "spmv_split (remote)");
  spmv_rows(a_local, b_local, c, 0, a_local.n_rows());
  spmv_accumulate_rows(a_remote, b_halo, c, 0, a_remote.n_rows());
  return c;
}

std::vector<index_t> chunk_rows_by_nonzeros(std::span<const offset_t> row_ptr, int n_chunks) {
  if (n_chunks < 1) throw ValidationError("chunk count must be at least 1");
  if (row_ptr.empty()) throw ValidationError("row_ptr must not be empty");
  const auto n_rows = static_cast<index_t>(row_ptr.size() - 1);
  const offset_t n_nz = row_ptr.back();

  std::vector<index_t> cuts(static_cast<std::size_t>(n_chunks) + 1, 0);
  cuts.back() = n_rows;
  if (n_nz == 0) {
    for (int k = 1; k < n_chunks; ++k) {
      cuts[k] = static_cast<index_t>(static_cast<std::int64_t>(n_rows) * k / n_chunks);
    }
    return cuts;
  }
  index_t lo = 0;
  for (int k = 1; k < n_chunks; ++k) {
    const double target = static_cast<double>(n_nz) * k / n_chunks;
    // First boundary at or above the target, then step back if the previous
    // boundary is strictly closer.
    auto it = std::lower_bound(row_ptr.begin() + lo, row_ptr.end(), target,
                               [](offset_t v, double t) { return static_cast<double>(v) < t; });
    auto idx = static_cast<index_t>(it - row_ptr.begin());
    if (idx > n_rows) idx = n_rows;
    if (idx > lo) {
      const double above = static_cast<double>(row_ptr[idx]) - target;
      const double below = target - static_cast<double>(row_ptr[idx - 1]);
      if (below <= above) --idx;
    }
    // Step over equal boundaries (empty rows) so ties resolve to the lowest index.
    while (idx > lo && row_ptr[idx - 1] == row_ptr[idx]) --idx;
    cuts[k] = idx;
    lo = idx;
  }
  return cuts;
}

DenseVector spmv_chunked(const CsrMatrix& a, std::span<const double> b, int n_workers) {
  if (n_workers < 1) throw ValidationError("spmv_chunked: n_workers must be at least 1");
  DenseVector c(static_cast<std::size_t>(a.n_rows()));
  check_shapes(a, b.size(), c.size(), "spmv_chunked");
  const auto cuts = chunk_rows_by_nonzeros(a.row_ptr(), n_workers);
  if (n_workers == 1) {
    spmv_rows(a, b, c, 0, a.n_rows());
    return c;
  }
  {
    std::vector<std::jthread> workers;
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, w] { spmv_rows(a, b, c, cuts[w], cuts[w + 1]); });
    }
  }
  return c;
}

bool is_permutation(const Permutation& perm, index_t n) {
  if (perm.size() != static_cast<std::size_t>(n)) return false;
  std::vector<char> seen(perm.size(), 0);
  for (index_t p : perm) {
    if (p < 0 || p >= n || seen[p]) return false;
    seen[p] = 1;
  }
  return true;
}

Permutation inverse_permutation(const Permutation& perm) {
  Permutation inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<index_t>(i);
  return inv;
}

CsrMatrix permute(const CsrMatrix& a, const Permutation& perm) {
  if (!a.square()) throw ValidationError("permute: matrix must be square");
  if (!is_permutation(perm, a.n_rows())) throw ValidationError("permute: invalid permutation");
  const auto inv = inverse_permutation(perm);
  const index_t n = a.n_rows();
  std::vector<offset_t> row_ptr(static_cast<std::size_t>(n) + 1, 0);
  for (index_t i = 0; i < n; ++i) row_ptr[i + 1] = row_ptr[i] + a.row_nnz(perm[i]);

  std::vector<index_t> col_idx(static_cast<std::size_t>(a.n_nz()));
  std::vector<double> val(static_cast<std::size_t>(a.n_nz()));
  std::vector<std::pair<index_t, double>> row;
  for (index_t i = 0; i < n; ++i) {
    const index_t old = perm[i];
    row.clear();
    for (offset_t j = a.row_ptr()[old]; j < a.row_ptr()[old + 1]; ++j) {
      row.emplace_back(inv[a.col_idx()[j]], a.val()[j]);
    }
    std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      col_idx[row_ptr[i] + k] = row[k].first;
      val[row_ptr[i] + k] = row[k].second;
    }
  }
  return CsrMatrix(n, n, std::move(row_ptr), std::move(col_idx), std::move(val));
}

DenseVector permute_vector(std::span<const double> v, const Permutation& perm) {
  if (!is_permutation(perm, static_cast<index_t>(v.size()))) {
    throw ValidationError("permute_vector: invalid permutation");
  }
  DenseVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[perm[i]];
  return out;
}

index_t matrix_bandwidth(const CsrMatrix& a) {
  index_t bw = 0;
  for (index_t i = 0; i < a.n_rows(); ++i) {
    for (offset_t j = a.row_ptr()[i]; j < a.row_ptr()[i + 1]; ++j) {
      const index_t d = a.col_idx()[j] > i ? a.col_idx()[j] - i : i - a.col_idx()[j];
      bw = std::max(bw, d);
    }
  }
  return bw;
}

}  // namespace ospmv
