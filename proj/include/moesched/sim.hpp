#pragma once

// Analytical per-layer timelines for exclusive and colocated deployments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moesched/commsched.hpp"
#include "moesched/core.hpp"

namespace moesched {

/// Per-GPU computation times of one model's layer.
struct ComputeTimes {
  std::vector<double> gate;
  std::vector<double> ffn;
  std::vector<double> agg;
};

/// Gate and aggregation work is identical per expert; FFN work is affine in
/// the tokens received. All of it is divided by the GPU's compute scale.
/// `recv` holds the tokens received per expert; `out` must be sized n.
inline void fill_component_times(const LayerProfile& layer, std::span<const std::size_t> gpu_of_expert,
                                 std::span<const double> recv, const ClusterSpec& cluster, ComputeTimes& out) {
  for (std::size_t e = 0; e < gpu_of_expert.size(); ++e) {
    const std::size_t g = gpu_of_expert[e];
    const double scale = cluster[g].compute_scale;
    out.gate[g] = layer.gate_work / scale;
    out.agg[g] = layer.agg_work / scale;
    out.ffn[g] = (layer.ffn_base_work + layer.ffn_work_per_token * recv[e]) / scale;
  }
}

inline ComputeTimes component_times(const LayerProfile& layer, std::span<const std::size_t> gpu_of_expert,
                                    const ClusterSpec& cluster) {
  const std::size_t n = layer.experts();
  if (gpu_of_expert.size() != n || cluster.size() != n)
    throw std::invalid_argument("component_times: plan, layer and cluster sizes differ");
  ComputeTimes out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  fill_component_times(layer, gpu_of_expert, layer.tokens_received(), cluster, out);
  return out;
}

inline ComputeTimes component_times(const LayerProfile& layer, const DeploymentPlan& plan, const ClusterSpec& cluster) {
  return component_times(layer, plan.assignment_a(), cluster);
}

/// Per-GPU send and receive time of one deployed all-to-all.
struct CommLoads {
  std::vector<double> send;
  std::vector<double> recv;

  CommLoads swapped() const { return {recv, send}; }
  double bmax() const {
    double m = 0.0;
    for (std::size_t g = 0; g < send.size(); ++g) m = std::max({m, send[g], recv[g]});
    return m;
  }
};

/// `out` must be sized n; it is overwritten.
inline void fill_comm_loads(const TrafficMatrix& d, std::span<const std::size_t> gpu_of_expert, const ClusterSpec& cluster,
                            CommLoads& out) {
  const std::size_t n = d.size();
  std::fill(out.send.begin(), out.send.end(), 0.0);
  std::fill(out.recv.begin(), out.recv.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gi = gpu_of_expert[i];
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k) continue;
      const std::size_t gk = gpu_of_expert[k];
      const double t = d(i, k) / std::min(cluster[gi].bandwidth, cluster[gk].bandwidth);
      out.send[gi] += t;
      out.recv[gk] += t;
    }
  }
}

inline CommLoads deployed_comm_loads(const TrafficMatrix& d, std::span<const std::size_t> gpu_of_expert,
                                     const ClusterSpec& cluster) {
  CommLoads out{std::vector<double>(d.size(), 0.0), std::vector<double>(d.size(), 0.0)};
  fill_comm_loads(d, gpu_of_expert, cluster, out);
  return out;
}

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

struct ComponentTimeline {
  std::string name;
  std::vector<Interval> per_gpu;
  double start = 0.0;
  double end = 0.0;
  bool compute = false;
};

struct TimelineResult {
  bool colocated = false;
  std::vector<ComponentTimeline> components;
  double inference_time = 0.0;
  double comm_first = 0.0;   ///< completion time of the (aggregated) first all-to-all window
  double comm_second = 0.0;  ///< duration of the (aggregated) second all-to-all window
  std::vector<double> gpu_busy;
  std::vector<double> gpu_utilization;
  double utilization = 0.0;

  const ComponentTimeline& component(std::string_view name) const {
    for (const auto& c : components)
      if (c.name == name) return c;
    throw std::out_of_range("no component named " + std::string(name));
  }
};

using Scheduler = std::function<CommSchedule(const TrafficMatrix&, const ClusterSpec&)>;

namespace detail {

inline double max_of(std::span<const double> v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

inline ComponentTimeline compute_block(std::string name, double start, std::span<const double> durations) {
  ComponentTimeline c{std::move(name), {}, start, start, true};
  for (double d : durations) {
    c.per_gpu.push_back({start, start + d});
    c.end = std::max(c.end, start + d);
  }
  return c;
}

inline ComponentTimeline comm_block(std::string name, std::span<const double> starts, std::span<const double> ends) {
  ComponentTimeline c{std::move(name), {}, 0.0, 0.0, false};
  c.start = starts.empty() ? 0.0 : *std::min_element(starts.begin(), starts.end());
  c.end = c.start;
  for (std::size_t g = 0; g < starts.size(); ++g) {
    c.per_gpu.push_back({starts[g], std::max(starts[g], ends[g])});
    c.end = std::max(c.end, c.per_gpu.back().end);
  }
  return c;
}

inline void finish_utilization(TimelineResult& r, std::size_t gpus) {
  r.gpu_busy.assign(gpus, 0.0);
  for (const auto& c : r.components) {
    if (!c.compute) continue;
    for (std::size_t g = 0; g < gpus; ++g) r.gpu_busy[g] += c.per_gpu[g].end - c.per_gpu[g].start;
  }
  r.gpu_utilization.assign(gpus, 0.0);
  if (r.inference_time > 0.0) {
    for (std::size_t g = 0; g < gpus; ++g) r.gpu_utilization[g] = r.gpu_busy[g] / r.inference_time;
    r.utilization = std::accumulate(r.gpu_utilization.begin(), r.gpu_utilization.end(), 0.0) / static_cast<double>(gpus);
  }
}

}  // namespace detail

/// One model running with synchronous all-to-alls: each collective starts
/// once every GPU finished the preceding computation, and the next
/// computation starts once the last transfer has landed. `first` is the
/// dispatch traffic in GPU coordinates.
inline TimelineResult simulate_synchronous(const ComputeTimes& ct, const TrafficMatrix& first, const ClusterSpec& cluster,
                                           const Scheduler& scheduler = build_schedule) {
  const std::size_t n = first.size();
  const CommSchedule s1 = scheduler(first, cluster);
  const CommSchedule s2 = scheduler(reverse_all_to_all(first), cluster);

  TimelineResult r;
  auto comm = [&](const char* name, double start, const CommSchedule& s) {
    const auto done = s.gpu_completion();
    std::vector<double> starts(n, start), ends(n);
    for (std::size_t g = 0; g < n; ++g) ends[g] = start + done[g];
    auto c = detail::comm_block(name, starts, ends);
    c.end = start + s.makespan;
    return c;
  };
  r.components.push_back(detail::compute_block("G", 0.0, ct.gate));
  r.components.push_back(comm("N", r.components.back().end, s1));
  r.components.push_back(detail::compute_block("F", r.components.back().end, ct.ffn));
  r.components.push_back(comm("C", r.components.back().end, s2));
  r.components.push_back(detail::compute_block("A", r.components.back().end, ct.agg));
  r.inference_time = r.components.back().end;
  r.comm_first = s1.makespan;
  r.comm_second = s2.makespan;
  detail::finish_utilization(r, n);
  return r;
}

/// Exclusive deployment, one expert per GPU. In a homogeneous cluster the
/// result is |G| + b_max(N) + max|F| + b_max(C) + |A| under the optimal
/// scheduler.
inline TimelineResult simulate_exclusive(const LayerProfile& layer, const DeploymentPlan& plan, const ClusterSpec& cluster,
                                         const Scheduler& scheduler = build_schedule) {
  if (plan.is_colocated()) throw std::invalid_argument("simulate_exclusive: plan is colocated");
  const auto& gpu_of = plan.assignment_a();
  return simulate_synchronous(component_times(layer, gpu_of, cluster), deploy(layer.dispatch, gpu_of), cluster, scheduler);
}

/// Per-GPU inputs of the colocated recurrence.
struct ColocatedInputs {
  ComputeTimes a;
  ComputeTimes b;
  CommLoads first_a;  ///< model a's dispatch all-to-all; its combine is the swap
  CommLoads first_b;
};

inline ColocatedInputs colocated_inputs(const LayerProfile& la, const LayerProfile& lb, const DeploymentPlan& plan,
                                        const ClusterSpec& cluster) {
  if (!plan.is_colocated()) throw std::invalid_argument("colocated plan required");
  if (la.experts() != lb.experts() || la.experts() != plan.size() || cluster.size() != plan.size())
    throw std::invalid_argument("colocated simulation: dimension mismatch");
  return {component_times(la, plan.assignment_a(), cluster), component_times(lb, plan.assignment_b(), cluster),
          deployed_comm_loads(la.dispatch, plan.assignment_a(), cluster),
          deployed_comm_loads(lb.dispatch, plan.assignment_b(), cluster)};
}

/// Aggregate start/end times of the colocated timeline. Model b's gate and
/// model a's dispatch open the layer; model a's gate closes it.
struct ColocatedTimes {
  double g_b = 0.0, n_a = 0.0;
  double f_a_start = 0.0, f_a = 0.0;
  double n_b = 0.0;
  double f_b_start = 0.0, f_b = 0.0;
  double c_a_start = 0.0, c_a = 0.0;
  double a_a_start = 0.0, a_a = 0.0;
  double c_b = 0.0;
  double a_b_start = 0.0, a_b = 0.0;
  double inference = 0.0;
};

inline ColocatedTimes colocated_times(const ColocatedInputs& in) {
  using detail::max_of;
  const std::size_t n = in.a.gate.size();
  ColocatedTimes t;
  t.g_b = max_of(in.b.gate);
  t.n_a = in.first_a.bmax();
  t.f_a_start = std::max(t.g_b, t.n_a);
  t.f_a = t.f_a_start + max_of(in.a.ffn);
  // b's dispatch on GPU g waits for its gate there and for a's dispatch on the same link.
  for (std::size_t g = 0; g < n; ++g) {
    t.n_b = std::max({t.n_b, std::max(in.first_a.send[g], in.b.gate[g]) + in.first_b.send[g],
                      std::max(in.first_a.recv[g], in.b.gate[g]) + in.first_b.recv[g]});
  }
  t.f_b_start = std::max(t.f_a, t.n_b);
  t.f_b = t.f_b_start + max_of(in.b.ffn);
  t.c_a_start = std::max(t.f_a, t.n_b);
  t.c_a = t.c_a_start + in.first_a.bmax();
  // b's combine on GPU g waits for its FFN barrier and for a's combine on the same link.
  // The combine is the transpose, so a GPU's combine send time is its dispatch receive time.
  for (std::size_t g = 0; g < n; ++g) {
    t.c_b = std::max({t.c_b, std::max(t.c_a_start + in.first_a.recv[g], t.f_b) + in.first_b.recv[g],
                      std::max(t.c_a_start + in.first_a.send[g], t.f_b) + in.first_b.send[g]});
  }
  t.a_a_start = std::max(t.f_b, t.c_a);
  t.a_a = t.a_a_start + max_of(in.a.agg);
  t.a_b_start = std::max(t.a_a, t.c_b);
  t.a_b = t.a_b_start + max_of(in.b.agg);
  t.inference = t.a_b + max_of(in.a.gate);
  return t;
}

inline double colocated_inference_time(const LayerProfile& la, const LayerProfile& lb, const DeploymentPlan& plan,
                                       const ClusterSpec& cluster) {
  return colocated_times(colocated_inputs(la, lb, plan, cluster)).inference;
}

/// Two models, one expert of each per GPU; computation on a GPU is
/// serialized, the two models' communication interleaves on the links.
inline TimelineResult simulate_colocated(const LayerProfile& la, const LayerProfile& lb, const DeploymentPlan& plan,
                                         const ClusterSpec& cluster) {
  const ColocatedInputs in = colocated_inputs(la, lb, plan, cluster);
  const ColocatedTimes t = colocated_times(in);
  const std::size_t n = plan.size();

  TimelineResult r;
  r.colocated = true;
  std::vector<double> zeros(n, 0.0), starts(n), ends(n);

  r.components.push_back(detail::compute_block("G_b", 0.0, in.b.gate));
  for (std::size_t g = 0; g < n; ++g) ends[g] = std::max(in.first_a.send[g], in.first_a.recv[g]);
  r.components.push_back(detail::comm_block("N_a", zeros, ends));
  r.components.push_back(detail::compute_block("F_a", t.f_a_start, in.a.ffn));
  for (std::size_t g = 0; g < n; ++g) {
    starts[g] = in.b.gate[g];
    ends[g] = std::max(std::max(in.first_a.send[g], in.b.gate[g]) + in.first_b.send[g],
                       std::max(in.first_a.recv[g], in.b.gate[g]) + in.first_b.recv[g]);
  }
  r.components.push_back(detail::comm_block("N_b", starts, ends));
  r.components.push_back(detail::compute_block("F_b", t.f_b_start, in.b.ffn));
  for (std::size_t g = 0; g < n; ++g) {
    starts[g] = t.c_a_start;
    ends[g] = t.c_a_start + std::max(in.first_a.send[g], in.first_a.recv[g]);
  }
  auto c_a = detail::comm_block("C_a", starts, ends);
  c_a.end = t.c_a;
  r.components.push_back(std::move(c_a));
  r.components.push_back(detail::compute_block("A_a", t.a_a_start, in.a.agg));
  for (std::size_t g = 0; g < n; ++g) {
    starts[g] = t.f_b;
    ends[g] = std::max(std::max(t.c_a_start + in.first_a.recv[g], t.f_b) + in.first_b.recv[g],
                       std::max(t.c_a_start + in.first_a.send[g], t.f_b) + in.first_b.send[g]);
  }
  r.components.push_back(detail::comm_block("C_b", starts, ends));
  r.components.push_back(detail::compute_block("A_b", t.a_b_start, in.b.agg));
  r.components.push_back(detail::compute_block("G_a", t.a_b, in.a.gate));

  r.inference_time = t.inference;
  r.comm_first = t.n_b;
  r.comm_second = t.c_b - t.c_a_start;
  detail::finish_utilization(r, n);
  return r;
}

/// Mean over GPUs of compute-busy time divided by inference time.
inline double gpu_utilization(const TimelineResult& r) {
  if (!(r.inference_time > 0.0)) throw std::invalid_argument("gpu_utilization: inference time is zero");
  return r.utilization;
}

/// Re-checks the start/end dependencies of a timeline. Empty means consistent.
inline std::vector<std::string> timeline_violations(const TimelineResult& r, double tol = kTimeTolerance) {
  std::vector<std::string> out;
  auto expect_eq = [&](const std::string& what, double lhs, double rhs) {
    if (std::abs(lhs - rhs) > tol) out.push_back(what + ": " + std::to_string(lhs) + " != " + std::to_string(rhs));
  };
  auto expect_ge = [&](const std::string& what, double lhs, double rhs) {
    if (lhs < rhs - tol) out.push_back(what + ": " + std::to_string(lhs) + " < " + std::to_string(rhs));
  };
  for (const auto& c : r.components) {
    expect_ge(c.name + " end >= start", c.end, c.start);
    for (const auto& iv : c.per_gpu) expect_ge(c.name + " per-GPU end >= start", iv.end, iv.start);
  }
  auto s = [&](const char* n) { return r.component(n).start; };
  auto e = [&](const char* n) { return r.component(n).end; };
  if (!r.colocated) {
    expect_eq("start(N) == end(G)", s("N"), e("G"));
    expect_eq("start(F) == end(N)", s("F"), e("N"));
    expect_eq("start(C) == end(F)", s("C"), e("F"));
    expect_eq("start(A) == end(C)", s("A"), e("C"));
    expect_eq("inference == end(A)", r.inference_time, e("A"));
    return out;
  }
  expect_eq("start(G_b) == 0", s("G_b"), 0.0);
  expect_eq("start(N_a) == 0", s("N_a"), 0.0);
  expect_eq("start(F_a) == max(end(G_b), end(N_a))", s("F_a"), std::max(e("G_b"), e("N_a")));
  const auto& gb = r.component("G_b");
  const auto& nb = r.component("N_b");
  for (std::size_t g = 0; g < nb.per_gpu.size(); ++g) expect_ge("start(N_b) >= G_b on GPU", nb.per_gpu[g].start, gb.per_gpu[g].end);
  expect_eq("start(F_b) == max(end(F_a), end(N_b))", s("F_b"), std::max(e("F_a"), e("N_b")));
  expect_ge("start(C_a) >= end(F_a)", s("C_a"), e("F_a"));
  expect_eq("start(A_a) == max(end(F_b), end(C_a))", s("A_a"), std::max(e("F_b"), e("C_a")));
  expect_ge("start(C_b) >= end(F_b)", s("C_b"), e("F_b"));
  expect_eq("start(A_b) == max(end(A_a), end(C_b))", s("A_b"), std::max(e("A_a"), e("C_b")));
  expect_eq("start(G_a) == end(A_b)", s("G_a"), e("A_b"));
  expect_eq("inference == end(A_b) + |G_a|", r.inference_time, e("G_a"));
  return out;
}

/// Layer-by-layer evaluation of a whole model, summed.
struct ModelRun {
  std::vector<TimelineResult> layers;
  double inference_time = 0.0;
  double utilization = 0.0;
};

inline ModelRun summarize_layers(std::vector<TimelineResult> layers) {
  ModelRun run{std::move(layers), 0.0, 0.0};
  double busy = 0.0;
  std::size_t gpus = 0;
  for (const auto& l : run.layers) {
    run.inference_time += l.inference_time;
    busy += std::accumulate(l.gpu_busy.begin(), l.gpu_busy.end(), 0.0);
    gpus = l.gpu_busy.size();
  }
  if (run.inference_time > 0.0 && gpus > 0) run.utilization = busy / (static_cast<double>(gpus) * run.inference_time);
  return run;
}

inline ModelRun simulate_model_exclusive(const ModelProfile& model, const DeploymentPlan& plan, const ClusterSpec& cluster,
                                         const Scheduler& scheduler = build_schedule) {
  std::vector<TimelineResult> layers;
  for (const auto& l : model.layers) layers.push_back(simulate_exclusive(l, plan, cluster, scheduler));
  return summarize_layers(std::move(layers));
}

inline ModelRun simulate_model_colocated(const ModelProfile& a, const ModelProfile& b, const DeploymentPlan& plan,
                                         const ClusterSpec& cluster) {
  if (a.layers.size() != b.layers.size()) throw std::invalid_argument("colocated models must have the same layer count");
  std::vector<TimelineResult> layers;
  for (std::size_t k = 0; k < a.layers.size(); ++k) layers.push_back(simulate_colocated(a.layers[k], b.layers[k], plan, cluster));
  return summarize_layers(std::move(layers));
}

/// Completion cost of one colocated expert pair on one GPU: both experts'
/// computation plus their combined send/receive time for the two
/// all-to-alls, at that GPU's speed.
inline double colocated_gpu_cost(const LayerProfile& la, const ExpertLoad& load_a, const LayerProfile& lb,
                                 const ExpertLoad& load_b, const GpuSpec& gpu) {
  const double work = la.gate_work + la.agg_work + la.ffn_base_work + la.ffn_work_per_token * load_a.recv +
                      lb.gate_work + lb.agg_work + lb.ffn_base_work + lb.ffn_work_per_token * load_b.recv;
  const double tokens = std::max(load_a.send + load_b.send, load_a.recv + load_b.recv);
  return work / gpu.compute_scale + 2.0 * tokens / gpu.bandwidth;
}

/// Evaluation traffic for an imprecise-statistics run: the mean of the base
/// layer and the first `level * 4` extra layers. Work values come from base.
inline LayerProfile inject_noise(const LayerProfile& base, std::span<const LayerProfile> extra_layers, double level) {
  static constexpr double kLevels[] = {0.0, 0.25, 0.5, 0.75};
  std::size_t count = 4;
  for (std::size_t k = 0; k < 4; ++k)
    if (level == kLevels[k]) count = k;
  if (count == 4) throw std::invalid_argument("noise level must be one of 0, 0.25, 0.5, 0.75");
  if (extra_layers.size() < count)
    throw std::invalid_argument("noise level " + std::to_string(level) + " needs " + std::to_string(count) + " extra layers");
  if (count == 0) return base;
  DenseMatrix sum = base.dispatch.values();
  for (std::size_t k = 0; k < count; ++k) {
    if (extra_layers[k].experts() != base.experts()) throw std::invalid_argument("noise layer size mismatch");
    for (std::size_t i = 0; i < sum.size(); ++i)
      for (std::size_t j = 0; j < sum.size(); ++j) sum(i, j) += extra_layers[k].dispatch(i, j);
  }
  for (std::size_t i = 0; i < sum.size(); ++i)
    for (std::size_t j = 0; j < sum.size(); ++j) sum(i, j) /= static_cast<double>(count + 1);
  return LayerProfile(base.gate_work, base.agg_work, base.ffn_work_per_token, base.ffn_base_work, TrafficMatrix(std::move(sum)));
}

}  // namespace moesched
