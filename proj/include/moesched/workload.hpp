#pragma once

// Synthetic MoE traffic with Zipf-like expert popularity.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "moesched/core.hpp"
#include "moesched/random.hpp"

namespace moesched {

struct SyntheticWorkloadSpec {
  std::size_t n = 8;
  double skew = 1.0;  ///< popularity of the rank-k expert is (k + 1)^-skew
  double total_tokens = 8000.0;
  std::size_t layer_count = 4;
  std::uint64_t seed = 0;
  double gate_work = 2.0;
  double agg_work = 1.0;
  double ffn_work_per_token = 0.01;
  double ffn_base_work = 1.0;

  void validate() const {
    if (n < 1) throw std::invalid_argument("synthetic.n must be >= 1");
    if (!std::isfinite(skew) || skew < 0.0) throw std::invalid_argument("synthetic.skew must be >= 0");
    if (!std::isfinite(total_tokens) || total_tokens < 0.0) throw std::invalid_argument("synthetic.total_tokens must be >= 0");
    if (layer_count < 1) throw std::invalid_argument("synthetic.layer_count must be >= 1");
  }

  bool operator==(const SyntheticWorkloadSpec&) const = default;
};

/// Each layer draws its own popularity ranking, jittered per expert. Expert i emits tokens in proportion to its popularity and sends
/// them to the other experts in proportion to theirs.
inline ModelProfile generate_workload(const SyntheticWorkloadSpec& spec, std::string model_id = "synthetic") {
  spec.validate();
  const std::size_t n = spec.n;
  Rng rng(spec.seed);
  std::vector<LayerProfile> layers;
  for (std::size_t l = 0; l < spec.layer_count; ++l) {
    auto rank = identity_permutation(n);
    rng.shuffle(rank);
    std::vector<double> pop(n);
    double pop_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pop[i] = std::pow(static_cast<double>(rank[i] + 1), -spec.skew) * std::exp(0.1 * rng.normal());
      pop_total += pop[i];
    }
    DenseMatrix d(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> share(n, 0.0);
      double share_total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        share[j] = pop[j] * rng.uniform(0.9, 1.1);
        share_total += share[j];
      }
      const double emitted = spec.total_tokens * pop[i] / pop_total;
      if (share_total <= 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) d(i, j) = emitted * share[j] / share_total;
    }
    layers.emplace_back(spec.gate_work, spec.agg_work, spec.ffn_work_per_token, spec.ffn_base_work, TrafficMatrix(std::move(d)));
  }
  return ModelProfile(std::move(model_id), std::move(layers));
}

}  // namespace moesched
