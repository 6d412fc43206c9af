#pragma once

// Bipartite matching: Hopcroft-Karp maximum cardinality matching and the
// bottleneck (min-max) perfect matching built on top of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "moesched/core.hpp"

namespace moesched {

inline constexpr std::size_t kUnmatched = std::numeric_limits<std::size_t>::max();

/// Left vertices [0, left), right vertices [0, right). Adjacency lists are
/// scanned in the order given, which fixes tie-breaking.
struct BipartiteGraph {
  std::size_t left = 0;
  std::size_t right = 0;
  std::vector<std::vector<std::size_t>> adj;

  BipartiteGraph(std::size_t l, std::size_t r) : left(l), right(r), adj(l) {}
  void add_edge(std::size_t u, std::size_t v) { adj.at(u).push_back(v); }
};

struct MatchingResult {
  std::size_t size = 0;
  std::vector<std::size_t> match_left;   ///< right vertex of each left vertex, or kUnmatched
  std::vector<std::size_t> match_right;  ///< left vertex of each right vertex, or kUnmatched

  bool perfect() const { return size == match_left.size() && size == match_right.size(); }
};

namespace detail {

class HopcroftKarp {
 public:
  explicit HopcroftKarp(const BipartiteGraph& g)
      : g_(g), match_l_(g.left, kUnmatched), match_r_(g.right, kUnmatched), dist_(g.left), it_(g.left) {}

  MatchingResult run() {
    std::size_t size = 0;
    while (bfs()) {
      std::fill(it_.begin(), it_.end(), 0);
      for (std::size_t u = 0; u < g_.left; ++u)
        if (match_l_[u] == kUnmatched && dfs(u)) ++size;
    }
    return {size, std::move(match_l_), std::move(match_r_)};
  }

 private:
  static constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();

  bool bfs() {
    std::queue<std::size_t> q;
    for (std::size_t u = 0; u < g_.left; ++u) {
      if (match_l_[u] == kUnmatched) {
        dist_[u] = 0;
        q.push(u);
      } else {
        dist_[u] = kInf;
      }
    }
    bool found = false;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : g_.adj[u]) {
        const std::size_t w = match_r_[v];
        if (w == kUnmatched) {
          found = true;
        } else if (dist_[w] == kInf) {
          dist_[w] = dist_[u] + 1;
          q.push(w);
        }
      }
    }
    return found;
  }

  bool dfs(std::size_t u) {
    for (; it_[u] < g_.adj[u].size(); ++it_[u]) {
      const std::size_t v = g_.adj[u][it_[u]];
      const std::size_t w = match_r_[v];
      if (w == kUnmatched || (dist_[w] == dist_[u] + 1 && dfs(w))) {
        match_l_[u] = v;
        match_r_[v] = u;
        ++it_[u];
        return true;
      }
    }
    dist_[u] = kInf;
    return false;
  }

  const BipartiteGraph& g_;
  std::vector<std::size_t> match_l_;
  std::vector<std::size_t> match_r_;
  std::vector<std::size_t> dist_;
  std::vector<std::size_t> it_;
};

}  // namespace detail

/// Maximum-cardinality matching in O(E sqrt(V)).
inline MatchingResult hopcroft_karp(const BipartiteGraph& g) {
  for (const auto& edges : g.adj)
    for (std::size_t v : edges)
      if (v >= g.right) throw std::out_of_range("bipartite edge targets a missing right vertex");
  return detail::HopcroftKarp(g).run();
}

/// Perfect matching on a complete weighted bipartite graph.
struct Matching {
  std::vector<std::size_t> assignment;  ///< left -> right
  double bottleneck_value = 0.0;        ///< max selected weight
};

/// Subgraph of edges with weight <= threshold.
inline BipartiteGraph threshold_graph(const DenseMatrix& w, double threshold) {
  BipartiteGraph g(w.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w.size(); ++j)
      if (w(i, j) <= threshold) g.add_edge(i, j);
  return g;
}

/// Perfect matching minimizing the maximum selected weight: binary search
/// over the sorted distinct weights, feasibility by Hopcroft-Karp.
inline Matching bottleneck_matching(const DenseMatrix& w) {
  const std::size_t n = w.size();
  if (n == 0) return {};
  for (double v : w.values()) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("bottleneck weights must be finite and >= 0");
  }
  std::vector<double> levels(w.values().begin(), w.values().end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  std::size_t lo = 0;
  std::size_t hi = levels.size() - 1;  // the complete graph is always feasible
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (hopcroft_karp(threshold_graph(w, levels[mid])).perfect()) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const auto best = hopcroft_karp(threshold_graph(w, levels[lo]));
  Matching out{best.match_left, 0.0};
  for (std::size_t i = 0; i < n; ++i) out.bottleneck_value = std::max(out.bottleneck_value, w(i, out.assignment[i]));
  return out;
}

}  // namespace moesched
