// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the test binaries: seeded random matrices and dense
// reference arithmetic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "ospmv/sparse_core.hpp"

namespace ospmv::testing {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const CsrMatrix& a) {
  Dense d(a.n_rows(), std::vector<double>(a.n_cols(), 0.0));
  for (index_t i = 0; i < a.n_rows(); ++i) {
    for (offset_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
      d[i][a.col_idx()[k]] += a.val()[k];
    }
  }
  return d;
}

// Long-double accumulation as an independent reference.
inline std::vector<double> dense_matvec(const Dense& d, const std::vector<double>& x) {
  std::vector<double> y(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    long double s = 0;
    for (std::size_t j = 0; j < x.size(); ++j) s += static_cast<long double>(d[i][j]) * x[j];
    y[i] = static_cast<double>(s);
  }
  return y;
}

inline double max_rel_diff(const std::vector<double>& x, const std::vector<double>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num = std::max(num, std::abs(x[i] - y[i]));
    den = std::max(den, std::abs(y[i]));
  }
  return den > 0 ? num / den : num;
}

struct RandomMatrixOptions {
  index_t min_dim = 1;
  index_t max_dim = 60;
  double density = 0.08;
  bool square = true;
  bool allow_empty_rows = true;
  bool add_duplicates = false;
};

/// Random COO triples. Rows may be empty; values are in [-1, 1) and never 0.
inline CooTriples random_coo(std::mt19937_64& rng, const RandomMatrixOptions& o = {}) {
  std::uniform_int_distribution<index_t> dim(o.min_dim, o.max_dim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CooTriples t;
  t.n_rows = dim(rng);
  t.n_cols = o.square ? t.n_rows : dim(rng);
  for (index_t i = 0; i < t.n_rows; ++i) {
    bool any = false;
    for (index_t j = 0; j < t.n_cols; ++j) {
      if (u(rng) < o.density) {
        double v = 2 * u(rng) - 1;
        if (v == 0) v = 0.5;
        t.entries.push_back({i, j, v});
        any = true;
      }
    }
    if (!any && !o.allow_empty_rows) {
      t.entries.push_back({i, static_cast<index_t>(rng() % t.n_cols), 1.0});
    }
  }
  if (o.add_duplicates && !t.entries.empty()) {
    const auto n = t.entries.size();
    for (std::size_t k = 0; k < n / 4 + 1; ++k) t.entries.push_back(t.entries[rng() % n]);
  }
  std::shuffle(t.entries.begin(), t.entries.end(), rng);
  return t;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Permutation random_permutation(std::mt19937_64& rng, index_t n) {
  Permutation p(n);
  for (index_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

/// Path graph 0-1-2-...-(n-1) with unit weights and a diagonal.
inline CsrMatrix path_matrix(index_t n) {
  CooTriples t{n, n, {}};
  for (index_t i = 0; i < n; ++i) {
    t.entries.push_back({i, i, 2.0});
    if (i + 1 < n) {
      t.entries.push_back({i, i + 1, -1.0});
      t.entries.push_back({i + 1, i, -1.0});
    }
  }
  return coo_to_csr(t);
}

/// 5-point grid graph, row-major numbering.
inline CsrMatrix grid2d_matrix(index_t nx, index_t ny) {
  CooTriples t{nx * ny, nx * ny, {}};
  for (index_t y = 0; y < ny; ++y) {
    for (index_t x = 0; x < nx; ++x) {
      const index_t i = y * nx + x;
      t.entries.push_back({i, i, 4.0});
      if (x > 0) t.entries.push_back({i, i - 1, -1.0});
      if (x + 1 < nx) t.entries.push_back({i, i + 1, -1.0});
      if (y > 0) t.entries.push_back({i, i - nx, -1.0});
      if (y + 1 < ny) t.entries.push_back({i, i + nx, -1.0});
    }
  }
  return coo_to_csr(t);
}

inline bool bitwise_equal(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace ospmv::testing
