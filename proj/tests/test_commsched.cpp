#include <gtest/gtest.h>

#include "moesched/commsched.hpp"
#include "moesched/random.hpp"
#include "oracles.hpp"

using namespace moesched;

namespace {

const TrafficMatrix kThreeGpu = TrafficMatrix::from_rows({{0, 1, 1}, {1, 0, 1}, {0, 0, 0}});

void expect_line_sums(const DenseMatrix& m, double target, double tol) {
  const auto r = m.row_sums(), c = m.col_sums();
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_NEAR(r[i], target, tol);
    EXPECT_NEAR(c[i], target, tol);
  }
}

}  // namespace

TEST(Bmax, Homogeneous) {
  EXPECT_EQ(bmax_homogeneous(kThreeGpu, 1.0), 2.0);
  EXPECT_EQ(bmax_homogeneous(TrafficMatrix::zeros(3), 7.0), 0.0);
  EXPECT_EQ(bmax_homogeneous(TrafficMatrix::from_rows({{0, 4}, {1, 0}}), 2.0), 2.0);
  EXPECT_THROW(bmax_homogeneous(kThreeGpu, 0.0), std::invalid_argument);
}

TEST(TimeNormalize, DividesByTheSlowerEndpoint) {
  EXPECT_EQ(time_normalize(kThreeGpu, ClusterSpec::uniform(3)).values(), kThreeGpu.values());
  const ClusterSpec mixed({{1, 1}, {1, 1}, {0.5, 0.5}});
  const auto t = time_normalize(kThreeGpu, mixed);
  EXPECT_EQ(t(0, 2), 2.0);
  EXPECT_EQ(t(1, 2), 2.0);
  EXPECT_EQ(t(0, 1), 1.0);
  EXPECT_EQ(t(1, 0), 1.0);
  EXPECT_EQ(bmax_heterogeneous(t), 4.0);
  const auto scaled = time_normalize(kThreeGpu, ClusterSpec::uniform(3, 4.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(scaled(i, j), kThreeGpu(i, j) / 4.0);
}

TEST(Bmax, HeterogeneousReducesToHomogeneous) {
  Rng rng(31);
  for (int k = 0; k < 50; ++k) {
    const TrafficMatrix d(oracle::random_traffic(rng, 1 + rng.below(8), 50.0, 0.3));
    const double b = rng.uniform(1.0, 10.0);
    EXPECT_NEAR(bmax_heterogeneous(time_normalize(d, ClusterSpec::uniform(d.size(), b))), bmax_homogeneous(d, b), 1e-12);
  }
  EXPECT_EQ(bmax_heterogeneous(TimeMatrix::zeros(4)), 0.0);
}

TEST(Augment, ThreeGpuForcesUniqueFill) {
  const auto a = augment(time_normalize(kThreeGpu, ClusterSpec::uniform(3)));
  EXPECT_EQ(a.b_max, 2.0);
  EXPECT_EQ(a.x.to_rows(), (std::vector<std::vector<double>>{{0, 0, 0}, {0, 0, 0}, {1, 1, 0}}));
  EXPECT_EQ(a.d_prime.to_rows(), (std::vector<std::vector<double>>{{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}));
}

TEST(Augment, BalancedMatrixNeedsNoFill) {
  const auto a = augment(TimeMatrix::from_rows({{0, 1, 2}, {2, 0, 1}, {1, 2, 0}}));
  EXPECT_EQ(a.x.total(), 0.0);
}

TEST(Augment, RandomMatricesBalanceWithNonNegativeFill) {
  Rng rng(32);
  for (int k = 0; k < 500; ++k) {
    const std::size_t n = 1 + rng.below(9);
    const TimeMatrix t(oracle::random_traffic(rng, n, 10.0, rng.uniform(0.0, 0.8)));
    const auto a = augment(t);
    for (double v : a.x.values()) EXPECT_GE(v, -1e-9);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(a.d_prime(i, j), t(i, j) + a.x(i, j), 1e-12);
    expect_line_sums(a.d_prime, a.b_max, 1e-9);
    // At most one diagonal cell carries fill.
    int diag = 0;
    for (std::size_t i = 0; i < n; ++i) diag += a.x(i, i) > 0.0;
    EXPECT_LE(diag, 1);
  }
}

TEST(Decompose, ThreeCycleGivesTwoUnitPhases) {
  const auto a = augment(TimeMatrix::from_rows({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}));
  const auto phases = decompose(a);
  ASSERT_EQ(phases.size(), 2u);
  DenseMatrix sum(3);
  for (const auto& p : phases) {
    EXPECT_EQ(p.duration, 1.0);
    EXPECT_TRUE(is_permutation_of_range(p.perm));
    for (std::size_t i = 0; i < 3; ++i) sum(i, p.perm[i]) += p.duration;
  }
  EXPECT_EQ(sum, a.d_prime);
}

TEST(Decompose, SinglePermutationIsOnePhase) {
  const auto a = augment(TimeMatrix::from_rows({{0, 3, 0}, {0, 0, 3}, {3, 0, 0}}));
  const auto phases = decompose(a);
  ASSERT_EQ(phases.size(), 1u);
  EXPECT_EQ(phases[0].duration, 3.0);
  EXPECT_EQ(phases[0].perm, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Decompose, RandomBalancedMatricesReconstruct) {
  Rng rng(33);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + rng.below(10);
    const auto a = augment(TimeMatrix(oracle::random_traffic(rng, n, 10.0, rng.uniform(0.0, 0.7))));
    const auto phases = decompose(a);
    EXPECT_LE(phases.size(), n * n - 2 * n + 2);
    DenseMatrix sum(n);
    double total = 0.0;
    for (const auto& p : phases) {
      EXPECT_GT(p.duration, 0.0);
      total += p.duration;
      for (std::size_t i = 0; i < n; ++i) sum(i, p.perm[i]) += p.duration;
    }
    EXPECT_NEAR(total, a.b_max, 1e-9);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(sum(i, j), a.d_prime(i, j), 1e-9);
  }
}

TEST(Decompose, UnbalancedInputThrows) {
  AugmentedMatrix bad{DenseMatrix::from_rows({{1, 0}, {1, 0}}), DenseMatrix(2), 1.0};
  EXPECT_THROW(decompose(bad), std::runtime_error);
}

TEST(BuildSchedule, ThreeGpuTakesTwoUnits) {
  const auto s = build_schedule(kThreeGpu, ClusterSpec::uniform(3));
  EXPECT_EQ(s.makespan, 2.0);
  EXPECT_TRUE(validate_schedule(s, kThreeGpu, ClusterSpec::uniform(3)).ok());
}

TEST(BuildSchedule, SingleTransfer) {
  const auto d = TrafficMatrix::from_rows({{0, 0, 0}, {0, 0, 6}, {0, 0, 0}});
  const ClusterSpec cluster({{4, 1}, {3, 1}, {2, 1}});
  const auto s = build_schedule(d, cluster);
  ASSERT_EQ(s.phases.size(), 1u);
  ASSERT_EQ(s.phases[0].transfers.size(), 1u);
  EXPECT_EQ(s.phases[0].transfers[0].src, 1u);
  EXPECT_EQ(s.phases[0].transfers[0].dst, 2u);
  EXPECT_EQ(s.phases[0].duration, 3.0);
  EXPECT_EQ(s.makespan, 3.0);
}

TEST(BuildSchedule, ZeroTrafficIsEmpty) {
  const auto s = build_schedule(TrafficMatrix::zeros(4), ClusterSpec::uniform(4));
  EXPECT_TRUE(s.phases.empty());
  EXPECT_EQ(s.makespan, 0.0);
}

TEST(BuildSchedule, RandomMixedBandwidthIsOptimalAndValid) {
  Rng rng(34);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 8;
    const TrafficMatrix d(oracle::random_traffic(rng, n, 100.0, 0.2));
    const auto cluster = oracle::random_cluster(rng, n);
    const auto s = build_schedule(d, cluster);
    const auto report = validate_schedule(s, d, cluster);
    EXPECT_TRUE(report.ok());
    EXPECT_NEAR(s.makespan, bmax_heterogeneous(time_normalize(d, cluster)), 1e-9);
    const auto done = s.gpu_completion();
    for (double t : done) EXPECT_LE(t, s.makespan + 1e-12);
  }
}

TEST(BuildSchedule, SmallIntegerMatricesMatchSlotSearch) {
  Rng rng(35);
  for (int k = 0; k < 60; ++k) {
    const std::size_t n = 2 + rng.below(3);
    std::vector<std::vector<int>> ints(n, std::vector<int>(n, 0));
    DenseMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) d(i, j) = ints[i][j] = static_cast<int>(rng.below(4));
    const auto s = build_schedule(TrafficMatrix(d), ClusterSpec::uniform(n));
    EXPECT_NEAR(s.makespan, oracle::SlotScheduleSearch(ints).minimum_slots(), 1e-9);
  }
}

TEST(ValidateSchedule, DetectsContention) {
  CommSchedule s;
  s.gpus = 3;
  s.phases.push_back({{{0, 2, 1.0}, {1, 2, 1.0}}, 1.0});
  s.finalize();
  const auto d = TrafficMatrix::from_rows({{0, 0, 1}, {0, 0, 1}, {0, 0, 0}});
  const auto r = validate_schedule(s, d, ClusterSpec::uniform(3));
  EXPECT_FALSE(r.contention.empty());
  EXPECT_FALSE(r.feasible());
}

TEST(ValidateSchedule, DetectsMissingTraffic) {
  auto s = build_schedule(kThreeGpu, ClusterSpec::uniform(3));
  s.phases.back().transfers.pop_back();
  const auto r = validate_schedule(s, kThreeGpu, ClusterSpec::uniform(3));
  EXPECT_FALSE(r.completeness.empty());
}

TEST(ValidateSchedule, DetectsSuboptimalMakespan) {
  CommSchedule s;
  s.gpus = 3;
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 0}, {0, 2}, {1, 2}})
    s.phases.push_back({{{i, j, 1.0}}, 1.0});
  s.finalize();
  const auto r = validate_schedule(s, kThreeGpu, ClusterSpec::uniform(3));
  EXPECT_TRUE(r.feasible());
  EXPECT_FALSE(r.optimality.empty());
}
