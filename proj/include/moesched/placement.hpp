#pragma once

// Expert-to-GPU assignment and cross-model expert colocation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "moesched/core.hpp"
#include "moesched/matching.hpp"
#include "moesched/sim.hpp"

namespace moesched {

/// Indices sorted by key, stable (lowest index first among equal keys).
inline std::vector<std::size_t> stable_order(std::span<const double> key, bool descending) {
  auto order = identity_permutation(key.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return descending ? key[x] > key[y] : key[x] < key[y];
  });
  return order;
}

/// Heaviest expert onto the fastest GPU, second heaviest onto the second
/// fastest, and so on.
inline DeploymentPlan assign_exclusive_hetero(std::span<const double> loads, const ClusterSpec& cluster) {
  if (loads.size() != cluster.size()) throw std::invalid_argument("assign_exclusive_hetero: loads length differs from GPU count");
  std::vector<double> scales;
  for (const auto& g : cluster.gpus()) scales.push_back(g.compute_scale);
  const auto experts = stable_order(loads, true);
  const auto gpus = stable_order(scales, true);
  std::vector<std::size_t> gpu_of(loads.size());
  for (std::size_t k = 0; k < loads.size(); ++k) gpu_of[experts[k]] = gpus[k];
  return DeploymentPlan::exclusive(std::move(gpu_of));
}

/// partner[i] is the model-b expert colocated with model-a expert i.
struct Pairing {
  std::vector<std::size_t> partner;
  std::vector<ExpertLoad> h;  ///< combined (send, recv) per model-a expert
  double max_h = 0.0;
};

inline Pairing make_pairing(const LoadVector& a, const LoadVector& b, std::vector<std::size_t> partner) {
  Pairing p{std::move(partner), std::vector<ExpertLoad>(a.size()), 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& bj = b[p.partner[i]];
    p.h[i] = {a[i].send + bj.send, a[i].recv + bj.recv};
    p.max_h = std::max({p.max_h, p.h[i].send, p.h[i].recv});
  }
  return p;
}

inline bool symmetric_loads(const LoadVector& v, double tol = kTimeTolerance) {
  return std::all_of(v.begin(), v.end(), [&](const ExpertLoad& l) {
    return std::abs(l.send - l.recv) <= tol * std::max(1.0, std::max(l.send, l.recv));
  });
}

/// Symmetric loads (send == recv per expert): pair a ascending with b
/// descending. Throws std::domain_error if either side is not symmetric.
inline Pairing pair_case1(const LoadVector& a, const LoadVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pair_case1: load vectors differ in length");
  if (!symmetric_loads(a) || !symmetric_loads(b))
    throw std::domain_error("pair_case1: send and receive totals differ; use bottleneck matching");
  std::vector<double> ka, kb;
  for (const auto& l : a) ka.push_back(l.send);
  for (const auto& l : b) kb.push_back(l.send);
  const auto asc = stable_order(ka, false);
  const auto desc = stable_order(kb, true);
  std::vector<std::size_t> partner(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) partner[asc[k]] = desc[k];
  return make_pairing(a, b, std::move(partner));
}

/// w(i, j) = max(a_i.send + b_j.send, a_i.recv + b_j.recv).
inline DenseMatrix pairing_weights(const LoadVector& a, const LoadVector& b) {
  DenseMatrix w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) w(i, j) = std::max(a[i].send + b[j].send, a[i].recv + b[j].recv);
  return w;
}

/// Minimizes the largest combined send or receive volume over all pairings.
inline Pairing pair_bottleneck(const LoadVector& a, const LoadVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pair_bottleneck: load vectors differ in length");
  return make_pairing(a, b, bottleneck_matching(pairing_weights(a, b)).assignment);
}

inline Pairing pair_experts(const LoadVector& a, const LoadVector& b) {
  if (symmetric_loads(a) && symmetric_loads(b)) return pair_case1(a, b);
  return pair_bottleneck(a, b);
}

/// Model a keeps the identity GPU mapping; model b follows the pairing.
inline DeploymentPlan plan_from_pairing(std::span<const std::size_t> partner, std::span<const std::size_t> gpu_of_pair) {
  std::vector<std::size_t> ga(partner.size()), gb(partner.size());
  for (std::size_t i = 0; i < partner.size(); ++i) {
    ga[i] = gpu_of_pair[i];
    gb[partner[i]] = gpu_of_pair[i];
  }
  return DeploymentPlan::colocated(std::move(ga), std::move(gb));
}

/// Colocation minimizing the combined dispatch b_max on a homogeneous cluster.
inline DeploymentPlan colocate_homogeneous(const LayerProfile& a, const LayerProfile& b) {
  if (a.experts() != b.experts()) throw std::invalid_argument("colocate_homogeneous: expert counts differ");
  const Pairing p = pair_experts(load_vector(a.dispatch), load_vector(b.dispatch));
  return plan_from_pairing(p.partner, identity_permutation(a.experts()));
}

/// Two-stage heuristic: pair experts as on a homogeneous cluster, then
/// place the pairs on GPUs by a bottleneck matching over per-GPU pair cost.
inline DeploymentPlan colocate_heterogeneous(const LayerProfile& a, const LayerProfile& b, const ClusterSpec& cluster) {
  const std::size_t n = a.experts();
  if (b.experts() != n || cluster.size() != n) throw std::invalid_argument("colocate_heterogeneous: dimension mismatch");
  const LoadVector la = load_vector(a.dispatch);
  const LoadVector lb = load_vector(b.dispatch);
  const Pairing p = pair_experts(la, lb);

  DenseMatrix w(n);  // row = GPU, column = pair (indexed by its model-a expert)
  for (std::size_t g = 0; g < n; ++g)
    for (std::size_t i = 0; i < n; ++i) w(g, i) = colocated_gpu_cost(a, la[i], b, lb[p.partner[i]], cluster[g]);
  const Matching m = bottleneck_matching(w);
  std::vector<std::size_t> gpu_of_pair(n);
  for (std::size_t g = 0; g < n; ++g) gpu_of_pair[m.assignment[g]] = g;
  return plan_from_pairing(p.partner, gpu_of_pair);
}

struct OracleResult {
  DeploymentPlan plan;
  double time = 0.0;
  std::size_t evaluated = 0;
};

inline constexpr std::size_t kDefaultOracleCap = 6;

/// Exhaustive search over all pairings and all GPU placements of the pairs.
/// Ties keep the first plan in lexicographic enumeration order.
inline OracleResult brute_force_colocation_hetero(const LayerProfile& a, const LayerProfile& b, const ClusterSpec& cluster,
                                                  std::size_t cap = kDefaultOracleCap) {
  const std::size_t n = a.experts();
  if (b.experts() != n || cluster.size() != n) throw std::invalid_argument("brute_force_colocation_hetero: dimension mismatch");
  if (n > cap) throw std::invalid_argument("brute_force_colocation_hetero: n = " + std::to_string(n) + " exceeds cap " + std::to_string(cap));

  // Buffers are reused across candidates; the arithmetic matches colocated_inference_time.
  const auto recv_a = a.tokens_received();
  const auto recv_b = b.tokens_received();
  auto blank = [n] { return ComputeTimes{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)}; };
  ColocatedInputs in{blank(), blank(), {std::vector<double>(n), std::vector<double>(n)}, {std::vector<double>(n), std::vector<double>(n)}};
  std::vector<std::size_t> ga(n), gb(n);

  OracleResult best{DeploymentPlan::colocated(identity_permutation(n), identity_permutation(n)),
                    std::numeric_limits<double>::infinity(), 0};
  std::vector<std::size_t> best_partner, best_gpus;
  auto partner = identity_permutation(n);
  do {
    auto gpu_of_pair = identity_permutation(n);
    do {
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] = gpu_of_pair[i];
        gb[partner[i]] = gpu_of_pair[i];
      }
      fill_component_times(a, ga, recv_a, cluster, in.a);
      fill_component_times(b, gb, recv_b, cluster, in.b);
      fill_comm_loads(a.dispatch, ga, cluster, in.first_a);
      fill_comm_loads(b.dispatch, gb, cluster, in.first_b);
      const double t = colocated_times(in).inference;
      ++best.evaluated;
      if (t < best.time) {
        best.time = t;
        best_partner = partner;
        best_gpus = gpu_of_pair;
      }
    } while (std::next_permutation(gpu_of_pair.begin(), gpu_of_pair.end()));
  } while (std::next_permutation(partner.begin(), partner.end()));
  best.plan = plan_from_pairing(best_partner, best_gpus);
  return best;
}

}  // namespace moesched
