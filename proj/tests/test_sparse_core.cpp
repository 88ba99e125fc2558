// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <numeric>

#include "ospmv/error.hpp"
#include "ospmv/sparse_core.hpp"
#include "support.hpp"

using namespace ospmv;
using namespace ospmv::testing;

TEST_CASE("coo_to_csr: small examples") {
  const CsrMatrix a = coo_to_csr({2, 2, {{0, 0, 1.0}, {1, 1, 2.0}}});
  CHECK(std::vector<offset_t>(a.row_ptr().begin(), a.row_ptr().end()) ==
        std::vector<offset_t>{0, 1, 2});
  CHECK(std::vector<index_t>(a.col_idx().begin(), a.col_idx().end()) ==
        std::vector<index_t>{0, 1});
  CHECK(std::vector<double>(a.val().begin(), a.val().end()) == std::vector<double>{1.0, 2.0});

  const CsrMatrix dup = coo_to_csr({1, 1, {{0, 0, 1.0}, {0, 0, 2.5}}});
  CHECK(dup.n_nz() == 1);
  CHECK(dup.val()[0] == 3.5);

  const CsrMatrix empty = coo_to_csr({3, 4, {}});
  CHECK(empty.n_nz() == 0);
  CHECK(empty.row_ptr().size() == 4);
}

TEST_CASE("coo_to_csr: rejects out-of-range triples and names them") {
  try {
    coo_to_csr({2, 2, {{0, 0, 1.0}, {0, 5, 1.0}}});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("#1") != std::string::npos);
  }
  CHECK_THROWS_AS(coo_to_csr({2, 2, {{-1, 0, 1.0}}}), ValidationError);
  CHECK_THROWS_AS(coo_to_csr({-1, 2, {}}), ValidationError);
}

TEST_CASE("CsrMatrix constructor validates structure") {
  CHECK_THROWS_AS(CsrMatrix(2, 2, {0, 2, 1}, {0, 1}, {1, 1}), ValidationError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 2}, {1, 0}, {1, 1}), ValidationError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 2}, {0, 0}, {1, 1}), ValidationError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 1}, {2}, {1}), ValidationError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {1, 1}, {}, {}), ValidationError);
  CHECK_NOTHROW(CsrMatrix(1, 2, {0, 2}, {0, 1}, {1, 1}));
}

TEST_CASE("property: csr_to_coo . coo_to_csr agrees with the dense sum of the triples") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    RandomMatrixOptions o;
    o.square = false;
    o.add_duplicates = true;
    const CooTriples t = random_coo(rng, o);
    Dense d(t.n_rows, std::vector<double>(t.n_cols, 0.0));
    std::map<std::pair<index_t, index_t>, int> present;
    for (const auto& e : t.entries) {
      d[e.row][e.col] += e.value;
      present[{e.row, e.col}] = 1;
    }
    const CsrMatrix a = coo_to_csr(t);
    CHECK(a.n_nz() == static_cast<offset_t>(present.size()));
    const Dense back = to_dense(a);
    for (index_t i = 0; i < t.n_rows; ++i) {
      for (index_t j = 0; j < t.n_cols; ++j) CHECK(std::abs(back[i][j] - d[i][j]) <= 1e-15);
    }
    CHECK(coo_to_csr(csr_to_coo(a)) == a);
  }
}

TEST_CASE("spmv: examples and dense oracle") {
  const CsrMatrix id = CsrMatrix::identity(5);
  const DenseVector b{1, 2, 3, 4, 5};
  CHECK(spmv(id, b) == b);

  const CsrMatrix a = coo_to_csr({2, 3, {{0, 0, 1.0}, {0, 2, 2.0}, {1, 1, -1.0}}});
  CHECK(spmv(a, DenseVector{1, 1, 1}) == DenseVector{3.0, -1.0});

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    RandomMatrixOptions o;
    o.square = false;
    o.max_dim = 120;
    o.density = 0.15;
    const CsrMatrix m = coo_to_csr(random_coo(rng, o));
    const auto x = random_vector(rng, m.n_cols());
    CHECK(max_rel_diff(spmv(m, x), dense_matvec(to_dense(m), x)) <= 1e-13);
  }
  CHECK_THROWS_AS(spmv(a, DenseVector{1, 1}), ValidationError);
}

TEST_CASE("spmv_split: local + remote reproduces the full product") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    RandomMatrixOptions o;
    o.min_dim = 2;
    const CooTriples t = random_coo(rng, o);
    const index_t n = t.n_rows;
    const index_t split = static_cast<index_t>(rng() % n);
    // Columns < split are "local", the rest go to the remote part.
    CooTriples lo{n, split, {}}, hi{n, n - split, {}};
    for (const auto& e : t.entries) {
      if (e.col < split) lo.entries.push_back(e);
      else hi.entries.push_back({e.row, e.col - split, e.value});
    }
    const auto x = random_vector(rng, n);
    const std::span<const double> xs(x);
    const DenseVector y =
        spmv_split(coo_to_csr(lo), coo_to_csr(hi), xs.first(split), xs.subspan(split));
    CHECK(max_rel_diff(y, spmv(coo_to_csr(t), x)) <= 1e-14);
  }
}

TEST_CASE("chunk_rows_by_nonzeros: cuts match an exhaustive scan for the nearest boundary") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    RandomMatrixOptions o;
    o.max_dim = 40;
    o.density = 0.1 + 0.3 * (trial % 3);
    const CsrMatrix a = coo_to_csr(random_coo(rng, o));
    const int n_chunks = 1 + static_cast<int>(rng() % 9);
    const auto cuts = chunk_rows_by_nonzeros(a.row_ptr(), n_chunks);
    REQUIRE(cuts.size() == static_cast<std::size_t>(n_chunks + 1));
    CHECK(cuts.front() == 0);
    CHECK(cuts.back() == a.n_rows());
    CHECK(std::is_sorted(cuts.begin(), cuts.end()));
    if (a.n_nz() == 0) continue;
    const double mean = static_cast<double>(a.n_nz()) / n_chunks;
    for (int k = 1; k < n_chunks; ++k) {
      // Oracle: the best achievable distance to the ideal cut point.
      const double target = k * mean;
      double best = 1e300;
      for (index_t r = 0; r <= a.n_rows(); ++r) {
        best = std::min(best, std::abs(static_cast<double>(a.row_ptr()[r]) - target));
      }
      CHECK(std::abs(static_cast<double>(a.row_ptr()[cuts[k]]) - target) == best);
    }
    for (int k = 0; k < n_chunks; ++k) {
      const double nnz = static_cast<double>(a.row_ptr()[cuts[k + 1]] - a.row_ptr()[cuts[k]]);
      CHECK(nnz <= mean + static_cast<double>(a.max_row_nnz()));
    }
  }
}

TEST_CASE("chunk_rows_by_nonzeros: degenerate inputs") {
  const std::vector<offset_t> empty_rows{0, 0, 0, 0, 0};
  CHECK(chunk_rows_by_nonzeros(empty_rows, 2) == std::vector<index_t>{0, 2, 4});
  const std::vector<offset_t> none{0};
  CHECK(chunk_rows_by_nonzeros(none, 3) == std::vector<index_t>{0, 0, 0, 0});
  CHECK_THROWS_AS(chunk_rows_by_nonzeros(empty_rows, 0), ValidationError);
}

TEST_CASE("property: spmv_chunked is bitwise equal to spmv for any worker count") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    RandomMatrixOptions o;
    o.max_dim = 200;
    o.density = 0.05;
    const CsrMatrix a = coo_to_csr(random_coo(rng, o));
    const auto x = random_vector(rng, a.n_cols());
    const DenseVector ref = spmv(a, x);
    for (int w : {1, 2, 3, 4, 7}) CHECK(bitwise_equal(spmv_chunked(a, x, w), ref));
  }
}

TEST_CASE("permutations") {
  const Permutation p{2, 0, 1};
  CHECK(is_permutation(p, 3));
  CHECK_FALSE(is_permutation({0, 0, 1}, 3));
  CHECK_FALSE(is_permutation({0, 1}, 3));
  CHECK(inverse_permutation(p) == Permutation{1, 2, 0});
  CHECK(permute_vector(DenseVector{10, 20, 30}, p) == DenseVector{30, 10, 20});
  CHECK_THROWS_AS(permute(CsrMatrix::identity(3), Permutation{0, 0, 1}), ValidationError);
}

TEST_CASE("property: permutation equivariance P(A x) == (P A P^T)(P x)") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const CsrMatrix a = coo_to_csr(random_coo(rng));
    const Permutation p = random_permutation(rng, a.n_rows());
    const auto x = random_vector(rng, a.n_cols());
    const CsrMatrix pa = permute(a, p);
    // Both sides sum the same products, possibly in a different order.
    CHECK(max_rel_diff(spmv(pa, permute_vector(x, p)), permute_vector(spmv(a, x), p)) <= 1e-14);
    CHECK(permute(pa, inverse_permutation(p)) == a);
    const Dense d = to_dense(a), dp = to_dense(pa);
    for (index_t i = 0; i < a.n_rows(); ++i) {
      for (index_t j = 0; j < a.n_cols(); ++j) CHECK(dp[i][j] == d[p[i]][p[j]]);
    }
  }
}

TEST_CASE("matrix_bandwidth") {
  CHECK(matrix_bandwidth(CsrMatrix{}) == 0);
  CHECK(matrix_bandwidth(CsrMatrix::identity(4)) == 0);
  CHECK(matrix_bandwidth(path_matrix(5)) == 1);
  CHECK(matrix_bandwidth(coo_to_csr({4, 4, {{0, 3, 1.0}}})) == 3);
}

TEST_CASE("rcm: identity gives the identity permutation") {
  const Permutation p = rcm_permutation(CsrMatrix::identity(6));
  Permutation id(6);
  std::iota(id.begin(), id.end(), 0);
  CHECK(p == id);
}

TEST_CASE("rcm: scrambled path recovers bandwidth 1") {
  std::mt19937_64 rng(29);
  for (index_t n : {2, 3, 10, 57, 300}) {
    const CsrMatrix path = path_matrix(n);
    const CsrMatrix scrambled = permute(path, random_permutation(rng, n));
    const Permutation p = rcm_permutation(scrambled);
    REQUIRE(is_permutation(p, n));
    CHECK(matrix_bandwidth(permute(scrambled, p)) == 1);
  }
}

TEST_CASE("property: rcm never widens scrambled grids and always returns a permutation") {
  std::mt19937_64 rng(31);
  for (auto [nx, ny] : {std::pair{4, 4}, {10, 3}, {12, 12}, {30, 7}}) {
    const CsrMatrix g = grid2d_matrix(nx, ny);
    const CsrMatrix scrambled = permute(g, random_permutation(rng, g.n_rows()));
    const CsrMatrix r = permute(scrambled, rcm_permutation(scrambled));
    CHECK(matrix_bandwidth(r) <= matrix_bandwidth(scrambled));
    CHECK(matrix_bandwidth(r) <= std::min(nx, ny) + 1);
  }
  for (int trial = 0; trial < 30; ++trial) {
    const CsrMatrix a = coo_to_csr(random_coo(rng));
    CHECK(is_permutation(rcm_permutation(a), a.n_rows()));
  }
}

TEST_CASE("nnzr and max_row_nnz") {
  const CsrMatrix a = coo_to_csr({3, 3, {{0, 0, 1}, {0, 1, 1}, {0, 2, 1}, {2, 2, 1}}});
  CHECK(a.nnzr() == doctest::Approx(4.0 / 3.0));
  CHECK(a.max_row_nnz() == 3);
  CHECK(a.row_nnz(1) == 0);
  CHECK(CsrMatrix{}.nnzr() == 0.0);
}
