#pragma once

// Reference strategies: random and shortest-first transmission orders,
// random colocation and assignment, and same-model colocation.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "moesched/commsched.hpp"
#include "moesched/core.hpp"
#include "moesched/placement.hpp"
#include "moesched/random.hpp"
#include "moesched/sim.hpp"

namespace moesched {

namespace rng_stream {
inline constexpr std::uint64_t kRec = 1;
inline constexpr std::uint64_t kRga = 2;
inline constexpr std::uint64_t kRcs = 3;
}  // namespace rng_stream

/// A transfer placed on the time axis.
struct TimedTransfer {
  std::size_t src = 0;
  std::size_t dst = 0;
  double start = 0.0;
  double end = 0.0;
};

/// Cuts timed transfers into phases at every start and end point.
inline CommSchedule phases_from_timeline(std::size_t n, const std::vector<TimedTransfer>& timed) {
  std::vector<double> cuts;
  for (const auto& t : timed) {
    cuts.push_back(t.start);
    cuts.push_back(t.end);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  CommSchedule s;
  s.gpus = n;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    Phase p;
    p.duration = cuts[k + 1] - cuts[k];
    for (const auto& t : timed)
      if (t.start <= cuts[k] && t.end >= cuts[k + 1]) p.transfers.push_back({t.src, t.dst, p.duration});
    s.phases.push_back(std::move(p));
  }
  s.finalize();
  return s;
}

/// Every sender walks its own destination list in order; a receiver takes
/// one transfer at a time. The earliest-starting transfer is committed
/// first, ties by earlier arrival, then by sender index. Destinations with
/// no traffic are skipped.
inline std::vector<TimedTransfer> serialize_orders(const TimeMatrix& t, const std::vector<std::vector<std::size_t>>& orders) {
  const std::size_t n = t.size();
  if (orders.size() != n) throw std::invalid_argument("one destination order per sender required");
  std::vector<std::vector<std::size_t>> queue(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : orders[i]) {
      if (j >= n) throw std::out_of_range("destination order names a missing GPU");
      if (j != i && t(i, j) > 0.0) queue[i].push_back(j);
    }

  std::vector<std::size_t> head(n, 0);
  std::vector<double> sender_ready(n, 0.0), receiver_free(n, 0.0);
  std::vector<TimedTransfer> out;
  for (;;) {
    std::size_t pick = n;
    double best_start = std::numeric_limits<double>::infinity();
    double best_end = best_start;
    for (std::size_t i = 0; i < n; ++i) {
      if (head[i] == queue[i].size()) continue;
      const std::size_t j = queue[i][head[i]];
      const double start = std::max(sender_ready[i], receiver_free[j]);
      const double end = start + t(i, j);
      if (start < best_start || (start == best_start && end < best_end)) {
        pick = i;
        best_start = start;
        best_end = end;
      }
    }
    if (pick == n) break;
    const std::size_t j = queue[pick][head[pick]++];
    sender_ready[pick] = receiver_free[j] = best_end;
    out.push_back({pick, j, best_start, best_end});
  }
  return out;
}

inline CommSchedule schedule_with_orders(const TrafficMatrix& d, const ClusterSpec& cluster,
                                         const std::vector<std::vector<std::size_t>>& orders) {
  return phases_from_timeline(d.size(), serialize_orders(time_normalize(d, cluster), orders));
}

/// Random per-sender destination order.
inline CommSchedule schedule_rcs(const TrafficMatrix& d, const ClusterSpec& cluster, std::uint64_t seed) {
  Rng rng(seed, rng_stream::kRcs);
  std::vector<std::vector<std::size_t>> orders(d.size());
  for (auto& o : orders) {
    o = identity_permutation(d.size());
    rng.shuffle(o);
  }
  return schedule_with_orders(d, cluster, orders);
}

/// Per-sender destinations by ascending volume.
inline CommSchedule schedule_sjf(const TrafficMatrix& d, const ClusterSpec& cluster) {
  std::vector<std::vector<std::size_t>> orders(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) orders[i] = stable_order(d.values().row(i), false);
  return schedule_with_orders(d, cluster, orders);
}

/// Uniformly random model-b partner per model-a expert.
inline std::vector<std::size_t> colocate_rec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, rng_stream::kRec);
  auto p = identity_permutation(n);
  rng.shuffle(p);
  return p;
}

/// Uniformly random expert-to-GPU assignment.
inline DeploymentPlan assign_rga(std::size_t n, const ClusterSpec& cluster, std::uint64_t seed) {
  if (cluster.size() != n) throw std::invalid_argument("assign_rga: GPU count differs from expert count");
  Rng rng(seed, rng_stream::kRga);
  auto p = identity_permutation(n);
  rng.shuffle(p);
  return DeploymentPlan::exclusive(std::move(p));
}

/// Experts of one model paired by received tokens, heaviest with lightest.
/// Slot k of the result holds the k-th pair.
inline std::vector<std::pair<std::size_t, std::size_t>> colocate_same_model(const LayerProfile& layer) {
  const std::size_t n = layer.experts();
  if (n % 2 != 0) throw std::invalid_argument("colocate_same_model: expert count " + std::to_string(n) + " is odd");
  const auto recv = layer.tokens_received();
  const auto order = stable_order(recv, true);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k < n / 2; ++k) pairs.emplace_back(order[k], order[n - 1 - k]);
  return pairs;
}

/// One model's layer on the GPUs listed in `gpus`, two of its experts per
/// GPU, inside an n-GPU cluster. GPUs not listed stay idle.
inline TimelineResult simulate_same_model_half(const LayerProfile& layer, std::span<const std::size_t> gpus,
                                               const ClusterSpec& cluster, const Scheduler& scheduler = build_schedule) {
  const std::size_t n = cluster.size();
  const auto pairs = colocate_same_model(layer);
  if (gpus.size() != pairs.size()) throw std::invalid_argument("simulate_same_model_half: one GPU per expert pair required");
  const auto recv = layer.tokens_received();

  std::vector<std::size_t> gpu_of(layer.experts());
  ComputeTimes ct{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const std::size_t g = gpus[k];
    const double scale = cluster[g].compute_scale;
    const auto [e, f] = pairs[k];
    gpu_of[e] = gpu_of[f] = g;
    ct.gate[g] = 2.0 * layer.gate_work / scale;
    ct.agg[g] = 2.0 * layer.agg_work / scale;
    ct.ffn[g] = (2.0 * layer.ffn_base_work + layer.ffn_work_per_token * (recv[e] + recv[f])) / scale;
  }
  DenseMatrix merged(n);
  for (std::size_t i = 0; i < layer.experts(); ++i)
    for (std::size_t j = 0; j < layer.experts(); ++j)
      if (gpu_of[i] != gpu_of[j]) merged(gpu_of[i], gpu_of[j]) += layer.dispatch(i, j);
  return simulate_synchronous(ct, TrafficMatrix(std::move(merged)), cluster, scheduler);
}

/// Both models run side by side: model a on the even GPUs, model b on the
/// odd ones, each with its own synchronous all-to-alls.
struct SameModelRun {
  TimelineResult a;
  TimelineResult b;
  double inference_time = 0.0;
  double utilization = 0.0;
  std::vector<double> gpu_busy;
};

inline SameModelRun simulate_same_model(const LayerProfile& la, const LayerProfile& lb, const ClusterSpec& cluster) {
  const std::size_t n = cluster.size();
  if (la.experts() != n || lb.experts() != n) throw std::invalid_argument("simulate_same_model: dimension mismatch");
  if (n % 2 != 0) throw std::invalid_argument("simulate_same_model: GPU count " + std::to_string(n) + " is odd");
  std::vector<std::size_t> even, odd;
  for (std::size_t g = 0; g < n; ++g) (g % 2 == 0 ? even : odd).push_back(g);

  SameModelRun r{simulate_same_model_half(la, even, cluster), simulate_same_model_half(lb, odd, cluster), 0.0, 0.0, {}};
  r.inference_time = std::max(r.a.inference_time, r.b.inference_time);
  r.gpu_busy.assign(n, 0.0);
  double busy = 0.0;
  for (std::size_t g = 0; g < n; ++g) {
    r.gpu_busy[g] = r.a.gpu_busy[g] + r.b.gpu_busy[g];
    busy += r.gpu_busy[g];
  }
  if (r.inference_time > 0.0) r.utilization = busy / (static_cast<double>(n) * r.inference_time);
  return r;
}

}  // namespace moesched
