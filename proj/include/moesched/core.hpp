#pragma once

// Domain types shared by the scheduler, placement, simulator and CLI layers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace moesched {

/// Absolute tolerance for time comparisons.
inline constexpr double kTimeTolerance = 1e-9;

/// Dense row-major n x n matrix of doubles. Mutable working storage; the
/// invariant-carrying types below wrap it.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    DenseMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) {
        throw std::invalid_argument("matrix row " + std::to_string(i) + " has " +
                                    std::to_string(rows[i].size()) + " entries, expected " +
                                    std::to_string(rows.size()));
      }
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.n_));
    }
    return m;
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<const double> values() const { return data_; }

  double total() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  std::vector<double> row_sums() const {
    std::vector<double> out(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) out[i] += (*this)(i, j);
    return out;
  }

  std::vector<double> col_sums() const {
    std::vector<double> out(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) out[j] += (*this)(i, j);
    return out;
  }

  DenseMatrix transposed() const {
    DenseMatrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> rows(n_);
    for (std::size_t i = 0; i < n_; ++i) rows[i].assign(row(i).begin(), row(i).end());
    return rows;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// One problem found by a validation pass.
struct Violation {
  std::string what;
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the traffic-matrix rules on raw rows: square, non-empty, finite,
/// non-negative, zero diagonal.
inline ValidationReport validate_traffic_matrix(const std::vector<std::vector<double>>& rows) {
  ValidationReport report;
  if (rows.empty()) {
    report.violations.push_back({"empty matrix", 0, 0, 0.0});
    return report;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) {
      report.violations.push_back({"ragged row", i, rows[i].size(), 0.0});
      continue;
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const double v = rows[i][j];
      if (std::isnan(v)) {
        report.violations.push_back({"not a number", i, j, v});
      } else if (!std::isfinite(v)) {
        report.violations.push_back({"infinite entry", i, j, v});
      } else if (v < 0.0) {
        report.violations.push_back({"negative entry", i, j, v});
      } else if (i == j && v != 0.0) {
        report.violations.push_back({"nonzero diagonal", i, j, v});
      }
    }
  }
  return report;
}

inline ValidationReport validate_traffic_matrix(const DenseMatrix& m) {
  return validate_traffic_matrix(m.to_rows());
}

struct TrafficTag {};
struct TimeTag {};

/// Immutable n x n matrix with finite non-negative entries and a zero
/// diagonal. `Tag` separates token volumes from transfer durations.
template <class Tag>
class NonNegativeMatrix {
 public:
  NonNegativeMatrix() = default;

  /// Rejects negative, NaN or infinite entries; the diagonal is forced to 0.
  explicit NonNegativeMatrix(DenseMatrix m) : m_(std::move(m)) {
    if (m_.size() == 0) throw std::invalid_argument("matrix must have n >= 1");
    for (std::size_t i = 0; i < m_.size(); ++i) {
      for (std::size_t j = 0; j < m_.size(); ++j) {
        const double v = m_(i, j);
        if (!std::isfinite(v) || v < 0.0) {
          throw std::invalid_argument("matrix entry (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") must be finite and non-negative, got " + std::to_string(v));
        }
      }
      m_(i, i) = 0.0;
    }
  }

  static NonNegativeMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    return NonNegativeMatrix(DenseMatrix::from_rows(rows));
  }

  static NonNegativeMatrix zeros(std::size_t n) { return NonNegativeMatrix(DenseMatrix(n)); }

  std::size_t size() const { return m_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const DenseMatrix& values() const { return m_; }
  double total() const { return m_.total(); }
  std::vector<std::vector<double>> to_rows() const { return m_.to_rows(); }

  friend bool operator==(const NonNegativeMatrix&, const NonNegativeMatrix&) = default;

 private:
  DenseMatrix m_;
};

/// Token volumes d_ij sent from expert/GPU i to j in one all-to-all.
using TrafficMatrix = NonNegativeMatrix<TrafficTag>;
/// Transfer durations (time units) per ordered GPU pair.
using TimeMatrix = NonNegativeMatrix<TimeTag>;

/// The second all-to-all of a layer mirrors the first: result(j, i) == m(i, j).
template <class Tag>
NonNegativeMatrix<Tag> reverse_all_to_all(const NonNegativeMatrix<Tag>& m) {
  return NonNegativeMatrix<Tag>(m.values().transposed());
}

struct LineSums {
  std::vector<double> rows;
  std::vector<double> cols;
};

template <class Tag>
LineSums row_col_sums(const NonNegativeMatrix<Tag>& m) {
  return {m.values().row_sums(), m.values().col_sums()};
}

/// Per-expert send and receive totals.
struct ExpertLoad {
  double send = 0.0;
  double recv = 0.0;
};
using LoadVector = std::vector<ExpertLoad>;

template <class Tag>
LoadVector load_vector(const NonNegativeMatrix<Tag>& m) {
  const auto sums = row_col_sums(m);
  LoadVector out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = {sums.rows[i], sums.cols[i]};
  return out;
}

struct GpuSpec {
  double bandwidth = 1.0;      ///< tokens per time unit
  double compute_scale = 1.0;  ///< work units per time unit
};

/// GPUs behind a non-blocking big switch. A faster GPU never has a lower
/// bandwidth than a slower one.
class ClusterSpec {
 public:
  ClusterSpec() = default;

  explicit ClusterSpec(std::vector<GpuSpec> gpus) : gpus_(std::move(gpus)) {
    if (gpus_.empty()) throw std::invalid_argument("cluster must contain at least one GPU");
    for (std::size_t k = 0; k < gpus_.size(); ++k) {
      const auto& g = gpus_[k];
      if (!(g.bandwidth > 0.0) || !std::isfinite(g.bandwidth))
        throw std::invalid_argument("cluster.gpus[" + std::to_string(k) + "].bandwidth must be > 0");
      if (!(g.compute_scale > 0.0) || !std::isfinite(g.compute_scale))
        throw std::invalid_argument("cluster.gpus[" + std::to_string(k) + "].compute_scale must be > 0");
    }
    for (std::size_t i = 0; i < gpus_.size(); ++i) {
      for (std::size_t j = 0; j < gpus_.size(); ++j) {
        if (gpus_[i].compute_scale > gpus_[j].compute_scale && gpus_[i].bandwidth < gpus_[j].bandwidth) {
          throw std::invalid_argument("cluster.gpus[" + std::to_string(i) + "] has higher compute_scale but lower bandwidth than cluster.gpus[" +
                                      std::to_string(j) + "]");
        }
      }
    }
  }

  static ClusterSpec uniform(std::size_t n, double bandwidth = 1.0, double compute_scale = 1.0) {
    return ClusterSpec(std::vector<GpuSpec>(n, GpuSpec{bandwidth, compute_scale}));
  }

  std::size_t size() const { return gpus_.size(); }
  const std::vector<GpuSpec>& gpus() const { return gpus_; }
  const GpuSpec& operator[](std::size_t i) const { return gpus_[i]; }

  bool homogeneous() const {
    return std::all_of(gpus_.begin(), gpus_.end(), [&](const GpuSpec& g) {
      return g.bandwidth == gpus_.front().bandwidth && g.compute_scale == gpus_.front().compute_scale;
    });
  }

 private:
  std::vector<GpuSpec> gpus_;
};

/// Work and traffic of one MoE layer. Only the dispatch (first) all-to-all
/// is stored; the combine (second) all-to-all is its transpose.
struct LayerProfile {
  double gate_work = 0.0;
  double agg_work = 0.0;
  double ffn_work_per_token = 0.0;
  double ffn_base_work = 0.0;
  TrafficMatrix dispatch;

  LayerProfile() = default;
  LayerProfile(double gate, double agg, double per_token, double base, TrafficMatrix traffic)
      : gate_work(gate), agg_work(agg), ffn_work_per_token(per_token), ffn_base_work(base), dispatch(std::move(traffic)) {
    for (double w : {gate_work, agg_work, ffn_work_per_token, ffn_base_work}) {
      if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("layer work values must be finite and >= 0");
    }
  }

  std::size_t experts() const { return dispatch.size(); }
  TrafficMatrix combine() const { return reverse_all_to_all(dispatch); }
  /// Tokens each expert processes in its FFN (column sums of the dispatch).
  std::vector<double> tokens_received() const { return dispatch.values().col_sums(); }
};

struct ModelProfile {
  std::string model_id;
  std::vector<LayerProfile> layers;

  ModelProfile() = default;
  ModelProfile(std::string id, std::vector<LayerProfile> ls) : model_id(std::move(id)), layers(std::move(ls)) {
    if (layers.empty()) throw std::invalid_argument("model '" + model_id + "' must have at least one layer");
    for (const auto& l : layers) {
      if (l.experts() != layers.front().experts())
        throw std::invalid_argument("model '" + model_id + "' layers disagree on expert count");
    }
  }

  std::size_t experts() const { return layers.front().experts(); }
};

inline bool is_permutation_of_range(std::span<const std::size_t> p) {
  std::vector<bool> seen(p.size(), false);
  for (std::size_t v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline std::vector<std::size_t> identity_permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

/// Expert-to-GPU mapping for one model, or for two colocated models with
/// exactly one expert of each per GPU.
class DeploymentPlan {
 public:
  DeploymentPlan() = default;

  static DeploymentPlan exclusive(std::vector<std::size_t> gpu_of_expert) {
    DeploymentPlan p;
    p.a_ = std::move(gpu_of_expert);
    p.check();
    return p;
  }

  static DeploymentPlan colocated(std::vector<std::size_t> gpu_of_a, std::vector<std::size_t> gpu_of_b) {
    DeploymentPlan p;
    p.a_ = std::move(gpu_of_a);
    p.b_ = std::move(gpu_of_b);
    p.check();
    return p;
  }

  std::size_t size() const { return a_.size(); }
  bool is_colocated() const { return b_.has_value(); }
  const std::vector<std::size_t>& assignment_a() const { return a_; }
  const std::vector<std::size_t>& assignment_b() const {
    if (!b_) throw std::logic_error("plan has no second model");
    return *b_;
  }

  /// partner[i] = expert of model b sharing a GPU with expert i of model a.
  std::vector<std::size_t> pairing() const {
    const auto expert_b_on_gpu = inverse_permutation(assignment_b());
    std::vector<std::size_t> partner(a_.size());
    for (std::size_t i = 0; i < a_.size(); ++i) partner[i] = expert_b_on_gpu[a_[i]];
    return partner;
  }

  friend bool operator==(const DeploymentPlan&, const DeploymentPlan&) = default;

 private:
  void check() const {
    if (a_.empty()) throw std::invalid_argument("plan must cover at least one expert");
    if (!is_permutation_of_range(a_)) throw std::invalid_argument("assignment_a is not a permutation");
    if (b_) {
      if (b_->size() != a_.size()) throw std::invalid_argument("assignment_b size differs from assignment_a");
      if (!is_permutation_of_range(*b_)) throw std::invalid_argument("assignment_b is not a permutation");
    }
  }

  std::vector<std::size_t> a_;
  std::optional<std::vector<std::size_t>> b_;
};

/// Relabels expert indices to GPU indices: result(gpu[i], gpu[j]) = m(i, j).
template <class Tag>
NonNegativeMatrix<Tag> deploy(const NonNegativeMatrix<Tag>& m, std::span<const std::size_t> gpu_of_expert) {
  if (gpu_of_expert.size() != m.size()) throw std::invalid_argument("assignment size differs from matrix size");
  DenseMatrix out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out(gpu_of_expert[i], gpu_of_expert[j]) += m(i, j);
  return NonNegativeMatrix<Tag>(std::move(out));
}

struct CombinedTraffic {
  TrafficMatrix matrix;
  /// Volume that landed on a GPU's own diagonal and was dropped as local.
  double relocated_mass = 0.0;
};

/// Per-GPU sum of two colocated models' traffic, in GPU coordinates.
inline CombinedTraffic combine_colocated(const TrafficMatrix& d_a, const TrafficMatrix& d_b, const DeploymentPlan& plan) {
  if (d_a.size() != d_b.size() || d_a.size() != plan.size())
    throw std::invalid_argument("combine_colocated: dimension mismatch");
  if (!plan.is_colocated()) throw std::invalid_argument("combine_colocated: plan lacks assignment_b");
  const std::size_t n = d_a.size();
  DenseMatrix out(n);
  const auto& ga = plan.assignment_a();
  const auto& gb = plan.assignment_b();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out(ga[i], ga[j]) += d_a(i, j);
      out(gb[i], gb[j]) += d_b(i, j);
    }
  }
  double relocated = 0.0;
  for (std::size_t g = 0; g < n; ++g) relocated += out(g, g);
  return {TrafficMatrix(std::move(out)), relocated};
}

}  // namespace moesched
