#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "repchain/time_distribution.hpp"

using namespace repchain;

namespace {

hardware_chain perfect_chain(std::size_t n_nodes, double p_swap) {
  return hardware_chain::homogeneous(n_nodes, 1.0, 1.0, kernels::infinity, p_swap,
                                     coherence_mode::per_node);
}

time_distribution point_mass(std::int64_t n, std::int64_t t, double w) {
  std::vector<double> p(static_cast<std::size_t>(n), 0.0), v(p.size(), 0.0);
  p[static_cast<std::size_t>(t - 1)] = 1.0;
  v[static_cast<std::size_t>(t - 1)] = w;
  return {p, v};
}

time_distribution random_distribution(std::mt19937_64& rng, std::int64_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(n)), v(p.size());
  double total = 0.0;
  for (auto& x : p) total += (x = u(rng));
  const double scale = (0.3 + 0.7 * u(rng)) / total;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] *= scale;
    v[i] = p[i] * u(rng);
  }
  return {p, v};
}

attempt_profiles random_profiles(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  attempt_profiles prof;
  prof.fail_mass.resize(n);
  prof.succ_mass.resize(n);
  prof.succ_werner_mass.resize(n);
  double total = 0.0;
  std::vector<double> mass(n);
  for (auto& x : mass) total += (x = u(rng) * (u(rng) < 0.3 ? 0.0 : 1.0) + 1e-3);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mass[i] / total, s = u(rng);
    prof.succ_mass[i] = m * s;
    prof.fail_mass[i] = m * (1 - s);
    prof.succ_werner_mass[i] = prof.succ_mass[i] * u(rng);
  }
  return prof;
}

}  // namespace

TEST(Generation, GeometricLaw) {
  const auto d = geometric_generation(0.5, 0.9, 3);
  ASSERT_EQ(d.t_trunc(), 3);
  EXPECT_DOUBLE_EQ(d.mass(1), 0.5);
  EXPECT_DOUBLE_EQ(d.mass(2), 0.25);
  EXPECT_DOUBLE_EQ(d.mass(3), 0.125);
  for (int t = 1; t <= 3; ++t) EXPECT_DOUBLE_EQ(d.werner_mass(t), 0.9 * d.mass(t));
}

TEST(Generation, Deterministic) {
  const auto d = geometric_generation(1.0, 0.7, 1);
  EXPECT_DOUBLE_EQ(d.mass(1), 1.0);
  EXPECT_DOUBLE_EQ(d.coverage(), 1.0);
}

TEST(Generation, MeanTimeIsInverseProbability) {
  const auto d = geometric_generation(0.2, 1.0, 200);
  EXPECT_LE(d.deficit(), 1e-9);
  EXPECT_NEAR(summarize(d).mean_time, 5.0, 1e-6);
}

TEST(Generation, RejectsZeroProbability) {
  EXPECT_THROW(geometric_generation(0.0, 0.9, 10), validation_error);
  EXPECT_THROW(geometric_generation(0.5, 0.9, 0), validation_error);
}

TEST(TimeDistribution, InvariantsEnforced) {
  EXPECT_THROW(time_distribution({0.5}, {0.6}), validation_error);
  EXPECT_THROW(time_distribution({0.7, 0.7}, {0.0, 0.0}), validation_error);
  EXPECT_THROW(time_distribution({0.5}, {0.1, 0.1}), validation_error);
}

TEST(AttemptProfiles, SwapOfTwoPointMasses) {
  const auto chain = perfect_chain(3, 0.85);
  const auto a = point_mass(8, 3, 0.9), b = point_mass(8, 5, 0.8);
  const auto prof = make_attempt_profiles(a, {0, 1}, b, {1, 2}, merge_op::swap, chain);
  EXPECT_NEAR(prof.succ_mass[4], 0.85, 1e-15);
  EXPECT_NEAR(prof.fail_mass[4], 0.15, 1e-15);
  EXPECT_NEAR(prof.succ_werner_mass[4], 0.85 * 0.72, 1e-15);
}

TEST(AttemptProfiles, EarlierLinkDecaysWithItsOwnEndpoints) {
  hardware_chain chain = perfect_chain(3, 0.85);
  chain.nodes[0].t_coh = 4.0;
  chain.nodes[1].t_coh = 4.0;
  const auto a = point_mass(8, 3, 0.9), b = point_mass(8, 5, 0.8);
  for (bool fast : {true, false}) {
    const auto prof =
        fast ? make_attempt_profiles(a, {0, 1}, b, {1, 2}, merge_op::swap, chain)
             : make_attempt_profiles_reference(a, {0, 1}, b, {1, 2}, merge_op::swap, chain);
    EXPECT_NEAR(prof.succ_werner_mass[4], 0.85 * 0.9 * std::exp(-1.0) * 0.8, 1e-14);
  }
}

TEST(AttemptProfiles, DistillPerfectInputs) {
  const auto chain = perfect_chain(2, 0.85);
  const auto a = point_mass(4, 1, 1.0);
  const auto prof = make_attempt_profiles(a, {0, 1}, a, {0, 1}, merge_op::distill, chain);
  EXPECT_NEAR(prof.succ_mass[0], 1.0, 1e-15);
  EXPECT_NEAR(prof.succ_werner_mass[0], 1.0, 1e-15);
  EXPECT_NEAR(prof.fail_mass[0], 0.0, 1e-15);
}

TEST(AttemptProfiles, RejectsMismatchedHorizonsAndEndpoints) {
  const auto chain = perfect_chain(3, 0.85);
  const auto a = point_mass(8, 1, 1.0), b = point_mass(4, 1, 1.0);
  EXPECT_THROW(make_attempt_profiles(a, {0, 1}, b, {1, 2}, merge_op::swap, chain),
               validation_error);
  EXPECT_THROW(make_attempt_profiles(a, {0, 1}, a, {1, 3}, merge_op::swap, chain),
               validation_error);
  EXPECT_THROW(make_attempt_profiles(a, {1, 1}, a, {1, 2}, merge_op::swap, chain),
               validation_error);
}

// Random chain with finite coherence in both modes.
TEST(AttemptProfiles, FastPathMatchesReferenceAndConservesMass) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int seed = 0; seed < 100; ++seed) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(u(rng) * 256);
    hardware_chain chain;
    chain.mode = seed % 2 ? coherence_mode::per_node : coherence_mode::per_link_joint;
    chain.p_swap = 0.2 + 0.8 * u(rng);
    for (int j = 0; j < 4; ++j) chain.nodes.push_back({5.0 + 500.0 * u(rng)});
    for (int j = 0; j < 3; ++j) chain.links.push_back({0.5, 0.9, 5.0 + 500.0 * u(rng)});
    const auto a = random_distribution(rng, n), b = random_distribution(rng, n);
    const link_endpoints left{0, 2}, right{2, 3};
    for (auto op : {merge_op::swap, merge_op::distill}) {
      const auto& b_in = op == merge_op::swap ? b : a;
      const auto b_ends = op == merge_op::swap ? right : left;
      const auto fast = make_attempt_profiles(a, left, b_in, b_ends, op, chain);
      const auto ref = make_attempt_profiles_reference(a, left, b_in, b_ends, op, chain);
      double pa = 0, pb = 0, total = 0;
      for (auto x : a.masses()) pa += x;
      for (auto x : b_in.masses()) pb += x;
      for (std::size_t i = 0; i < fast.succ_mass.size(); ++i) {
        EXPECT_NEAR(fast.succ_mass[i], ref.succ_mass[i], 1e-10);
        EXPECT_NEAR(fast.fail_mass[i], ref.fail_mass[i], 1e-10);
        EXPECT_NEAR(fast.succ_werner_mass[i], ref.succ_werner_mass[i], 1e-10);
        EXPECT_GE(fast.succ_werner_mass[i], 0.0);
        EXPECT_LE(fast.succ_werner_mass[i], fast.succ_mass[i] + 1e-15);
        total += fast.fail_mass[i] + fast.succ_mass[i];
      }
      EXPECT_NEAR(total, pa * pb, 1e-12);
    }
  }
}

TEST(AttemptProfiles, PerTimeConservation) {
  std::mt19937_64 rng(5);
  const auto chain = hardware_chain::homogeneous(3, 0.5, 0.9, 40.0, 0.7,
                                                 coherence_mode::per_node);
  const auto a = random_distribution(rng, 64), b = random_distribution(rng, 64);
  const auto prof = make_attempt_profiles(a, {0, 1}, b, {1, 2}, merge_op::distill, chain);
  double ca = 0, cb = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    const double pa = a.masses()[i], pb = b.masses()[i];
    const double joint = pa * cb + pb * ca + pa * pb;
    EXPECT_NEAR(prof.succ_mass[i] + prof.fail_mass[i], joint, 1e-12);
    ca += pa;
    cb += pb;
  }
}

TEST(Compounding, GeometricRestarts) {
  attempt_profiles prof;
  const std::size_t n = 20;
  prof.succ_mass.assign(n, 0.0);
  prof.fail_mass.assign(n, 0.0);
  prof.succ_werner_mass.assign(n, 0.0);
  prof.succ_mass[0] = 0.85;
  prof.fail_mass[0] = 0.15;
  prof.succ_werner_mass[0] = 0.85 * 0.5;
  for (auto backend : {compound_backend::renewal, compound_backend::doubling}) {
    const auto d = compound_restarts(prof, backend);
    for (std::size_t t = 1; t <= n; ++t) {
      EXPECT_NEAR(d.mass(t), 0.85 * std::pow(0.15, double(t - 1)), 1e-15);
      EXPECT_NEAR(d.werner_mass(t), 0.5 * d.mass(t), 1e-15);
    }
  }
}

TEST(Compounding, NoFailuresIsIdentity) {
  std::mt19937_64 rng(9);
  auto prof = random_profiles(rng, 50);
  for (std::size_t i = 0; i < 50; ++i) {
    prof.succ_mass[i] += prof.fail_mass[i];
    prof.fail_mass[i] = 0.0;
  }
  for (auto backend : {compound_backend::renewal, compound_backend::doubling}) {
    const auto d = compound_restarts(prof, backend);
    for (std::size_t i = 0; i < 50; ++i) {
      EXPECT_NEAR(d.masses()[i], prof.succ_mass[i], 1e-15);
      EXPECT_NEAR(d.werner_masses()[i], prof.succ_werner_mass[i], 1e-15);
    }
  }
}

TEST(Compounding, UniformTwoStepAttempt) {
  attempt_profiles prof;
  prof.succ_mass = {0.25, 0.25, 0.0};
  prof.fail_mass = {0.25, 0.25, 0.0};
  prof.succ_werner_mass = {0.0, 0.0, 0.0};
  for (auto backend : {compound_backend::renewal, compound_backend::doubling}) {
    const auto d = compound_restarts(prof, backend);
    EXPECT_NEAR(d.mass(1), 0.25, 1e-15);
    EXPECT_NEAR(d.mass(2), 0.3125, 1e-15);
  }
}

TEST(Compounding, DoublingMatchesRenewal) {
  std::mt19937_64 rng(77);
  for (std::size_t n : {1, 2, 3, 7, 47, 48, 49, 64, 100, 255, 256, 513, 1000, 4096}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto prof = random_profiles(rng, n);
      const auto r = compound_restarts(prof, compound_backend::renewal);
      const auto d = compound_restarts(prof, compound_backend::doubling);
      for (std::size_t i = 0; i < n; ++i) {
        ASSERT_NEAR(r.masses()[i], d.masses()[i], 1e-9) << "n=" << n << " i=" << i;
        ASSERT_NEAR(r.werner_masses()[i], d.werner_masses()[i], 1e-9) << "n=" << n;
      }
    }
  }
}

TEST(Merge, IncreasingHorizonOnlyTruncates) {
  const auto chain = hardware_chain::homogeneous(3, 0.3, 0.95, 200.0, 0.85,
                                                 coherence_mode::per_link_joint);
  auto build = [&](std::int64_t n) {
    const auto g = geometric_generation(0.3, 0.95, n);
    const auto d = merge(g, {0, 1}, g, {0, 1}, merge_op::distill, chain);
    return merge(d, {0, 1}, g, {1, 2}, merge_op::swap, chain);
  };
  const auto small = build(64), large = build(512);
  for (std::int64_t t = 1; t <= 64; ++t) {
    EXPECT_NEAR(small.mass(t), large.mass(t), 1e-15);
    EXPECT_NEAR(small.werner_mass(t), large.werner_mass(t), 1e-15);
  }
}

TEST(Coverage, GeometricHalfNeedsEightSteps) {
  const auto d = ensure_coverage([](std::int64_t n) { return geometric_generation(0.5, 1.0, n); },
                                 {0.01, 1, 1 << 20});
  EXPECT_EQ(d.t_trunc(), 8);
  EXPECT_NEAR(d.coverage(), 1.0 - std::ldexp(1.0, -8), 1e-15);
}

TEST(Coverage, SlowGenerationExceedsSmallCap) {
  try {
    ensure_coverage([](std::int64_t n) { return geometric_generation(9.6e-8, 0.36, n); },
                    {0.01, 64, 4096});
    FAIL() << "expected truncation_cap_exceeded";
  } catch (const truncation_cap_exceeded& e) {
    EXPECT_LT(e.achieved_coverage(), 0.99);
    EXPECT_EQ(e.last_t_trunc(), 4096);
  }
}

TEST(Coverage, DeterministicReturnsAtInitialHorizon) {
  const auto d = ensure_coverage([](std::int64_t n) { return geometric_generation(1.0, 1.0, n); },
                                 {0.01, 16, 1024});
  EXPECT_EQ(d.t_trunc(), 16);
}

TEST(Coverage, RejectsBadPolicy) {
  auto build = [](std::int64_t n) { return geometric_generation(0.5, 1.0, n); };
  EXPECT_THROW(ensure_coverage(build, {0.0, 1, 8}), validation_error);
  EXPECT_THROW(ensure_coverage(build, {1.0, 1, 8}), validation_error);
  EXPECT_THROW(ensure_coverage(build, {0.1, 16, 8}), validation_error);
}

TEST(Summary, Examples) {
  const auto det = point_mass(6, 4, 0.7);
  const auto s = summarize(det);
  EXPECT_DOUBLE_EQ(s.mean_time, 4.0);
  EXPECT_DOUBLE_EQ(s.mean_werner, 0.7);
  EXPECT_DOUBLE_EQ(s.coverage, 1.0);

  const auto g = summarize(geometric_generation(0.5, 1.0, 20));
  EXPECT_NEAR(g.mean_time, 2.0, 1e-4);

  const auto mix = summarize(time_distribution({0.5, 0.0, 0.25}, {0.5, 0.0, 0.125}));
  EXPECT_NEAR(mix.mean_time, 5.0 / 3, 1e-15);
  EXPECT_NEAR(mix.mean_werner, 5.0 / 6, 1e-15);
  EXPECT_NEAR(mix.coverage, 0.75, 1e-15);

  EXPECT_THROW(summarize(time_distribution({0.0, 0.0}, {0.0, 0.0})), validation_error);
}

TEST(Summary, CsvDump) {
  std::ostringstream os;
  write_distribution_csv(os, geometric_generation(0.5, 0.5, 2));
  EXPECT_EQ(os.str(), "t,p,v\n1,0.5,0.25\n2,0.25,0.125\n");
}
