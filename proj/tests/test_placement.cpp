#include <gtest/gtest.h>

#include "moesched/placement.hpp"
#include "moesched/random.hpp"
#include "moesched/workload.hpp"
#include "oracles.hpp"

using namespace moesched;

namespace {

LoadVector symmetric(std::initializer_list<double> v) {
  LoadVector out;
  for (double x : v) out.push_back({x, x});
  return out;
}

LayerProfile layer_of(const DenseMatrix& d) { return LayerProfile(2.0, 1.0, 0.01, 1.0, TrafficMatrix(d)); }

}  // namespace

TEST(AssignExclusiveHetero, SortedOrder) {
  const ClusterSpec cluster({{10, 1}, {20, 2}, {40, 4}});
  const std::vector<double> loads{9, 4, 1};
  EXPECT_EQ(assign_exclusive_hetero(loads, cluster).assignment_a(), (std::vector<std::size_t>{2, 1, 0}));
}

TEST(AssignExclusiveHetero, EqualLoadsGiveIdentity) {
  const std::vector<double> loads{3, 3, 3, 3};
  EXPECT_EQ(assign_exclusive_hetero(loads, ClusterSpec::uniform(4)).assignment_a(), identity_permutation(4));
}

TEST(AssignExclusiveHetero, LengthMismatchThrows) {
  const std::vector<double> loads{1, 2};
  EXPECT_THROW(assign_exclusive_hetero(loads, ClusterSpec::uniform(3)), std::invalid_argument);
}

TEST(PairCase1, ZigZagExample) {
  const auto p = pair_case1(symmetric({1, 3, 5}), symmetric({2, 4, 6}));
  EXPECT_EQ(p.partner, (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_EQ(p.max_h, 7.0);
  EXPECT_EQ(oracle::min_pair_peak(symmetric({1, 3, 5}), symmetric({2, 4, 6})), 7.0);
}

TEST(PairCase1, ConstantLoads) {
  const auto p = pair_case1(symmetric({2, 2, 2}), symmetric({2, 2, 2}));
  EXPECT_EQ(p.max_h, 4.0);
}

TEST(PairCase1, AsymmetricLoadsSignalFallback) {
  LoadVector a{{1, 2}, {2, 1}};
  EXPECT_THROW(pair_case1(a, symmetric({1, 1})), std::domain_error);
}

TEST(PairCase1, RandomMatchesFactorialOracle) {
  Rng rng(41);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + rng.below(7);
    LoadVector a(n), b(n);
    for (auto& l : a) l.send = l.recv = static_cast<double>(rng.below(50));
    for (auto& l : b) l.send = l.recv = static_cast<double>(rng.below(50));
    EXPECT_EQ(pair_case1(a, b).max_h, oracle::min_pair_peak(a, b));
  }
}

TEST(PairBottleneck, RandomAsymmetricMatchesFactorialOracle) {
  Rng rng(42);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + rng.below(7);
    LoadVector a(n), b(n);
    for (auto& l : a) l = {rng.uniform(0, 10), rng.uniform(0, 10)};
    for (auto& l : b) l = {rng.uniform(0, 10), rng.uniform(0, 10)};
    const auto p = pair_bottleneck(a, b);
    EXPECT_TRUE(is_permutation_of_range(p.partner));
    EXPECT_EQ(p.max_h, oracle::min_pair_peak(a, b));
  }
}

TEST(ColocateHomogeneous, ZeroTrafficIsIdentity) {
  const auto l = layer_of(DenseMatrix(4));
  const auto plan = colocate_homogeneous(l, l);
  EXPECT_EQ(plan.assignment_a(), identity_permutation(4));
  EXPECT_EQ(plan.assignment_b(), identity_permutation(4));
}

TEST(ColocateHomogeneous, CaseIInputsMatchPairCase1) {
  // Symmetric matrices give send == recv per expert.
  const auto a = layer_of(DenseMatrix::from_rows({{0, 1, 2}, {1, 0, 3}, {2, 3, 0}}));
  const auto b = layer_of(DenseMatrix::from_rows({{0, 5, 1}, {5, 0, 1}, {1, 1, 0}}));
  const auto p = pair_case1(load_vector(a.dispatch), load_vector(b.dispatch));
  EXPECT_EQ(colocate_homogeneous(a, b).pairing(), p.partner);
}

TEST(ColocateHomogeneous, CombinedBmaxIsExhaustiveMinimum) {
  Rng rng(43);
  for (int k = 0; k < 30; ++k) {
    const auto a = layer_of(oracle::random_traffic(rng, 6, 20.0, 0.3));
    const auto b = layer_of(oracle::random_traffic(rng, 6, 20.0, 0.3));
    const auto plan = colocate_homogeneous(a, b);
    auto combined_bmax = [&](const std::vector<std::size_t>& partner) {
      return bmax_homogeneous(combine_colocated(a.dispatch, b.dispatch, plan_from_pairing(partner, identity_permutation(6))).matrix, 1.0);
    };
    double best = std::numeric_limits<double>::infinity();
    oracle::for_each_permutation(6, [&](const std::vector<std::size_t>& p) { best = std::min(best, combined_bmax(p)); });
    EXPECT_NEAR(combined_bmax(plan.pairing()), best, 1e-9);
  }
}

TEST(ColocateHeterogeneous, HomogeneousClusterReducesToHomogeneousPlan) {
  Rng rng(44);
  for (int k = 0; k < 20; ++k) {
    const auto a = layer_of(oracle::random_traffic(rng, 5, 20.0));
    const auto b = layer_of(oracle::random_traffic(rng, 5, 20.0));
    EXPECT_EQ(colocate_heterogeneous(a, b, ClusterSpec::uniform(5)).pairing(), colocate_homogeneous(a, b).pairing());
  }
}

TEST(ColocateHeterogeneous, ZeroTrafficIsIdentity) {
  const LayerProfile z(0, 0, 0, 0, TrafficMatrix::zeros(3));
  const auto plan = colocate_heterogeneous(z, z, ClusterSpec::uniform(3));
  EXPECT_EQ(plan.assignment_a(), identity_permutation(3));
  EXPECT_EQ(plan.assignment_b(), identity_permutation(3));
}

TEST(ColocateHeterogeneous, StageOneIsBottleneckOptimal) {
  Rng rng(45);
  for (int k = 0; k < 30; ++k) {
    const std::size_t n = 2 + rng.below(5);
    const auto a = layer_of(oracle::random_traffic(rng, n, 20.0));
    const auto b = layer_of(oracle::random_traffic(rng, n, 20.0));
    const auto plan = colocate_heterogeneous(a, b, oracle::random_cluster(rng, n));
    const auto la = load_vector(a.dispatch), lb = load_vector(b.dispatch);
    EXPECT_NEAR(make_pairing(la, lb, plan.pairing()).max_h, oracle::min_pair_peak(la, lb), 1e-12);
  }
}

TEST(BruteForceColocation, TwoGpuToyEnumeratesFourPlans) {
  const auto a = layer_of(DenseMatrix::from_rows({{0, 30}, {10, 0}}));
  const auto b = layer_of(DenseMatrix::from_rows({{0, 5}, {20, 0}}));
  const ClusterSpec cluster({{100, 1}, {50, 0.5}});
  const auto best = brute_force_colocation_hetero(a, b, cluster);
  EXPECT_EQ(best.evaluated, 4u);
  double manual = std::numeric_limits<double>::infinity();
  for (auto partner : {std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{1, 0}})
    for (auto gpus : {std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{1, 0}})
      manual = std::min(manual, colocated_inference_time(a, b, plan_from_pairing(partner, gpus), cluster));
  EXPECT_EQ(best.time, manual);
  EXPECT_EQ(colocated_inference_time(a, b, best.plan, cluster), best.time);
}

TEST(BruteForceColocation, NeverWorseThanHeuristic) {
  Rng rng(46);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 2 + rng.below(3);
    const auto a = layer_of(oracle::random_traffic(rng, n, 200.0));
    const auto b = layer_of(oracle::random_traffic(rng, n, 200.0));
    const auto cluster = oracle::random_cluster(rng, n);
    const double heuristic = colocated_inference_time(a, b, colocate_heterogeneous(a, b, cluster), cluster);
    EXPECT_LE(brute_force_colocation_hetero(a, b, cluster).time, heuristic + 1e-12);
  }
}

TEST(BruteForceColocation, CapIsEnforced) {
  const LayerProfile z(0, 0, 0, 0, TrafficMatrix::zeros(4));
  EXPECT_THROW(brute_force_colocation_hetero(z, z, ClusterSpec::uniform(4), 3), std::invalid_argument);
}

TEST(AssignExclusiveHetero, UniformBandwidthIsArgmin) {
  // With one link speed only the FFN time depends on the placement.
  Rng rng(47);
  for (int k = 0; k < 40; ++k) {
    const std::size_t n = 2 + rng.below(4);
    DenseMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = rng.uniform(0, 100);
    const LayerProfile l(2, 1, 0.05, 1, TrafficMatrix(d));
    std::vector<GpuSpec> gpus;
    for (std::size_t g = 0; g < n; ++g) gpus.push_back({100.0, rng.uniform(0.5, 2.0)});
    const ClusterSpec cluster(gpus);
    const double sorted = simulate_exclusive(l, assign_exclusive_hetero(l.tokens_received(), cluster), cluster).inference_time;
    oracle::for_each_permutation(n, [&](const std::vector<std::size_t>& p) {
      EXPECT_LE(sorted, simulate_exclusive(l, DeploymentPlan::exclusive(p), cluster).inference_time + 1e-9);
    });
  }
}
