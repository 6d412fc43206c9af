#pragma once

// Contention-free all-to-all scheduling on a big-switch network.
//
// The minimum completion time of an all-to-all is b_max, the largest
// per-GPU send or receive time. A schedule achieving it is built by padding
// the time matrix with artificial traffic until every row and column sums
// to b_max, peeling perfect matchings off the padded matrix, and finally
// discarding the artificial part of every matched transfer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "moesched/core.hpp"
#include "moesched/matching.hpp"

namespace moesched {

/// Time-domain transfer of `duration` from `src` to `dst`, starting at the
/// beginning of its phase.
struct Transfer {
  std::size_t src = 0;
  std::size_t dst = 0;
  double duration = 0.0;
};

/// Simultaneous transfers with distinct senders and distinct receivers.
struct Phase {
  std::vector<Transfer> transfers;
  double duration = 0.0;
};

struct CommSchedule {
  std::size_t gpus = 0;
  std::vector<Phase> phases;
  double makespan = 0.0;

  std::vector<double> phase_starts() const {
    std::vector<double> starts(phases.size(), 0.0);
    double t = 0.0;
    for (std::size_t p = 0; p < phases.size(); ++p) {
      starts[p] = t;
      t += phases[p].duration;
    }
    return starts;
  }

  /// Time at which each GPU finishes its last send or receive.
  std::vector<double> gpu_completion() const {
    std::vector<double> done(gpus, 0.0);
    const auto starts = phase_starts();
    for (std::size_t p = 0; p < phases.size(); ++p) {
      for (const auto& t : phases[p].transfers) {
        const double end = starts[p] + t.duration;
        done[t.src] = std::max(done[t.src], end);
        done[t.dst] = std::max(done[t.dst], end);
      }
    }
    return done;
  }

  /// Recomputes `makespan` from the phases.
  void finalize() {
    const auto done = gpu_completion();
    makespan = done.empty() ? 0.0 : *std::max_element(done.begin(), done.end());
  }
};

inline double bmax_homogeneous(const TrafficMatrix& d, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  const auto sums = row_col_sums(d);
  double worst = 0.0;
  for (double v : sums.rows) worst = std::max(worst, v);
  for (double v : sums.cols) worst = std::max(worst, v);
  return worst / bandwidth;
}

/// Entry (i, j) becomes d_ij / min(B_i, B_j).
inline TimeMatrix time_normalize(const TrafficMatrix& d, const ClusterSpec& cluster) {
  if (cluster.size() != d.size()) throw std::invalid_argument("time_normalize: cluster size differs from matrix size");
  DenseMatrix t(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      t(i, j) = d(i, j) / std::min(cluster[i].bandwidth, cluster[j].bandwidth);
  return TimeMatrix(std::move(t));
}

inline double bmax_heterogeneous(const TimeMatrix& t) {
  const auto sums = row_col_sums(t);
  double worst = 0.0;
  for (double v : sums.rows) worst = std::max(worst, v);
  for (double v : sums.cols) worst = std::max(worst, v);
  return worst;
}

/// d_prime = base + x with every line sum of d_prime equal to b_max.
struct AugmentedMatrix {
  DenseMatrix d_prime;
  DenseMatrix x;
  double b_max = 0.0;
};

/// Fills the row and column deficits greedily (transportation rule) in
/// index order. Off-diagonal cells are used first; whatever is left can only
/// sit on a single diagonal cell and goes there.
inline AugmentedMatrix augment(const TimeMatrix& t) {
  const std::size_t n = t.size();
  const double b = bmax_heterogeneous(t);
  const auto sums = row_col_sums(t);
  std::vector<double> row_deficit(n), col_deficit(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_deficit[i] = std::max(0.0, b - sums.rows[i]);
    col_deficit[i] = std::max(0.0, b - sums.cols[i]);
  }

  DenseMatrix x(n);
  auto fill = [&](bool diagonal) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if ((i == j) != diagonal) continue;
        const double v = std::min(row_deficit[i], col_deficit[j]);
        if (v <= 0.0) continue;
        x(i, j) += v;
        row_deficit[i] -= v;
        col_deficit[j] -= v;
      }
    }
  };
  fill(false);
  fill(true);

  DenseMatrix d_prime(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d_prime(i, j) = t(i, j) + x(i, j);
  return {std::move(d_prime), std::move(x), b};
}

/// One step of the decomposition: every GPU sends to perm[i] for `duration`.
struct PermutationPhase {
  std::vector<std::size_t> perm;
  double duration = 0.0;
};

/// Splits a matrix with equal line sums into weighted permutation matrices.
/// Each step takes a perfect matching of the positive support, whose weight
/// is its smallest selected entry, and subtracts it. At least one entry hits
/// zero per step, so at most n^2 - 2n + 2 steps are produced.
inline std::vector<PermutationPhase> decompose(const AugmentedMatrix& a) {
  const std::size_t n = a.d_prime.size();
  DenseMatrix rest = a.d_prime;
  const double eps = 1e-12 * std::max(1.0, a.b_max);
  std::vector<PermutationPhase> phases;
  double elapsed = 0.0;

  for (std::size_t guard = 0; guard <= n * n + 1; ++guard) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (rest(i, j) <= eps) rest(i, j) = 0.0;
        any = any || rest(i, j) > 0.0;
      }
    if (!any) break;

    BipartiteGraph support(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (rest(i, j) > 0.0) support.add_edge(i, j);
    const auto m = hopcroft_karp(support);
    if (!m.perfect()) {
      // Leftover dust below tolerance on every line is not an error.
      if (a.b_max - elapsed <= 1e-9 * std::max(1.0, a.b_max)) break;
      throw std::runtime_error("decompose: no perfect matching on the positive support (line sums unequal)");
    }

    double duration = rest(0, m.match_left[0]);
    for (std::size_t i = 1; i < n; ++i) duration = std::min(duration, rest(i, m.match_left[i]));
    for (std::size_t i = 0; i < n; ++i) {
      double& cell = rest(i, m.match_left[i]);
      cell = (cell - duration <= eps) ? 0.0 : cell - duration;
    }
    elapsed += duration;
    phases.push_back({m.match_left, duration});
  }
  return phases;
}

/// Optimal contention-free schedule: makespan equals b_max of the
/// time-normalized matrix.
inline CommSchedule build_schedule(const TrafficMatrix& d, const ClusterSpec& cluster) {
  const TimeMatrix t = time_normalize(d, cluster);
  const AugmentedMatrix aug = augment(t);
  const auto perm_phases = decompose(aug);

  const std::size_t n = d.size();
  const double eps = 1e-12 * std::max(1.0, aug.b_max);
  DenseMatrix remaining = t.values();
  CommSchedule s;
  s.gpus = n;
  for (const auto& pp : perm_phases) {
    Phase phase;
    phase.duration = pp.duration;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pp.perm[i];
      if (i == j) continue;
      const double real = std::min(pp.duration, remaining(i, j));
      if (real <= eps) continue;
      remaining(i, j) -= real;
      phase.transfers.push_back({i, j, real});
    }
    if (!phase.transfers.empty()) s.phases.push_back(std::move(phase));
  }
  if (!s.phases.empty()) {
    // The last phase only lasts as long as its longest real transfer.
    auto& last = s.phases.back();
    double longest = 0.0;
    for (const auto& tr : last.transfers) longest = std::max(longest, tr.duration);
    last.duration = longest;
  }
  s.finalize();
  return s;
}

struct ScheduleReport {
  std::vector<std::string> contention;    ///< a sender or receiver used twice in a phase
  std::vector<std::string> completeness;  ///< delivered time differs from demand
  std::vector<std::string> optimality;    ///< makespan differs from b_max

  bool feasible() const { return contention.empty() && completeness.empty(); }
  bool ok() const { return feasible() && optimality.empty(); }
};

inline ScheduleReport validate_schedule(const CommSchedule& s, const TrafficMatrix& d, const ClusterSpec& cluster,
                                        double tolerance = kTimeTolerance) {
  ScheduleReport r;
  const std::size_t n = d.size();
  const TimeMatrix demand = time_normalize(d, cluster);
  DenseMatrix delivered(n);

  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    const auto& phase = s.phases[p];
    std::vector<int> sends(n, 0), recvs(n, 0);
    for (const auto& t : phase.transfers) {
      if (t.src >= n || t.dst >= n || t.src == t.dst) {
        r.contention.push_back("phase " + std::to_string(p) + ": invalid transfer " + std::to_string(t.src) + "->" +
                               std::to_string(t.dst));
        continue;
      }
      if (++sends[t.src] == 2)
        r.contention.push_back("phase " + std::to_string(p) + ": GPU " + std::to_string(t.src) + " sends twice");
      if (++recvs[t.dst] == 2)
        r.contention.push_back("phase " + std::to_string(p) + ": GPU " + std::to_string(t.dst) + " receives twice");
      if (t.duration < -tolerance || t.duration > phase.duration + tolerance)
        r.contention.push_back("phase " + std::to_string(p) + ": transfer exceeds phase duration");
      delivered(t.src, t.dst) += t.duration;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(delivered(i, j) - demand(i, j)) > tolerance) {
        r.completeness.push_back("pair " + std::to_string(i) + "->" + std::to_string(j) + ": delivered " +
                                 std::to_string(delivered(i, j)) + ", demanded " + std::to_string(demand(i, j)));
      }
    }
  }
  CommSchedule recomputed = s;
  recomputed.finalize();
  const double b = bmax_heterogeneous(demand);
  if (std::abs(recomputed.makespan - b) > tolerance)
    r.optimality.push_back("makespan " + std::to_string(recomputed.makespan) + " differs from b_max " + std::to_string(b));
  if (std::abs(recomputed.makespan - s.makespan) > tolerance)
    r.optimality.push_back("recorded makespan " + std::to_string(s.makespan) + " is stale");
  return r;
}

}  // namespace moesched
