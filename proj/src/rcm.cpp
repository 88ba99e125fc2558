// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "ospmv/error.hpp"
#include "ospmv/sparse_core.hpp"

namespace ospmv {

namespace {

// Adjacency of the symmetrized pattern without self loops.
struct Graph {
  std::vector<offset_t> ptr;
  std::vector<index_t> adj;

  index_t degree(index_t v) const { return static_cast<index_t>(ptr[v + 1] - ptr[v]); }
};

Graph symmetrized_graph(const CsrMatrix& a) {
  const index_t n = a.n_rows();
  std::vector<std::vector<index_t>> nbr(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) {
    for (offset_t j = a.row_ptr()[i]; j < a.row_ptr()[i + 1]; ++j) {
      const index_t c = a.col_idx()[j];
      if (c == i) continue;
      nbr[i].push_back(c);
      nbr[c].push_back(i);
    }
  }
  Graph g;
  g.ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (index_t i = 0; i < n; ++i) {
    auto& list = nbr[i];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    g.ptr[i + 1] = g.ptr[i] + static_cast<offset_t>(list.size());
  }
  g.adj.reserve(static_cast<std::size_t>(g.ptr.back()));
  for (auto& list : nbr) g.adj.insert(g.adj.end(), list.begin(), list.end());
  return g;
}

}  // namespace

Permutation rcm_permutation(const CsrMatrix& a) {
  if (!a.square()) throw ValidationError("rcm_permutation: matrix must be square");
  const index_t n = a.n_rows();
  const Graph g = symmetrized_graph(a);

  // Candidate start vertices: minimum degree first, lowest index on ties.
  std::vector<index_t> by_degree(static_cast<std::size_t>(n));
  std::iota(by_degree.begin(), by_degree.end(), index_t{0});
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](index_t x, index_t y) { return g.degree(x) < g.degree(y); });

  Permutation order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  std::vector<index_t> level;

  for (index_t start : by_degree) {
    if (visited[start]) continue;
    const std::size_t component_begin = order.size();
    visited[start] = 1;
    order.push_back(start);
    for (std::size_t head = component_begin; head < order.size(); ++head) {
      const index_t v = order[head];
      level.clear();
      for (offset_t k = g.ptr[v]; k < g.ptr[v + 1]; ++k) {
        const index_t w = g.adj[k];
        if (!visited[w]) {
          visited[w] = 1;
          level.push_back(w);
        }
      }
      std::stable_sort(level.begin(), level.end(),
                       [&](index_t x, index_t y) { return g.degree(x) < g.degree(y); });
      order.insert(order.end(), level.begin(), level.end());
    }
    // Reverse per component so that isolated vertices keep their place.
    std::reverse(order.begin() + static_cast<std::ptrdiff_t>(component_begin), order.end());
  }
  return order;
}

}  // namespace ospmv
