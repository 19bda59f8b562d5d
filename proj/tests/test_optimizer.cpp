#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "repchain/optimizer.hpp"

using namespace repchain;

namespace {

hardware_chain small_chain() {
  return hardware_chain::homogeneous(4, 0.3, 0.93, 400.0, 0.85, coherence_mode::per_link_joint);
}

std::string ledger_bytes(const search_result& r) {
  std::ostringstream os;
  write_ledger(os, r.history);
  write_summary(os, r.history);
  return os.str();
}

search_options opts(std::size_t shots, std::uint64_t seed, unsigned threads = 1) {
  search_options o;
  o.shots = shots;
  o.seed = seed;
  o.threads = threads;
  return o;
}

}  // namespace

TEST(BayesOpt, ToyObjectiveFindsOptimum) {
  int close = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto obs = bo::maximize(
        [](const bo::point& x) { return -(x[0] - 0.5) * (x[0] - 0.5); }, 4, 30, seed);
    std::size_t best = 0;
    for (std::size_t i = 1; i < obs.size(); ++i)
      if (obs[i].second > obs[best].second) best = i;
    close += std::abs(obs[best].first[0] - 0.5) <= 0.1;
  }
  EXPECT_GE(close, 18) << close << "/20 seeds within 0.1";
}

TEST(BayesOpt, SurrogateMatchesObservationsWithinNoise) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<bo::point> x;
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
      bo::point p{u(rng), u(rng), u(rng)};
      y.push_back(std::sin(6 * p[0]) + p[1] * p[2] + (rep % 2 ? noise(rng) : 0.0));
      x.push_back(p);
    }
    bo::gaussian_process gp;
    gp.fit(x, y);
    for (std::size_t i = 0; i < x.size(); ++i)
      EXPECT_LE(std::abs(gp.predict(x[i]).mean - y[i]), 3 * gp.noise_sd() + 1e-9)
          << "rep " << rep << " point " << i;
  }
}

TEST(BayesOpt, SurrogateSanityDuringSearch) {
  bo::bayes_optimizer opt(4, 3);
  for (int i = 0; i < 25; ++i) {
    const auto x = opt.ask();
    opt.tell(x, std::exp(-10 * (x[0] - 0.3) * (x[0] - 0.3)) + 0.1 * x[1]);
  }
  opt.ask();
  const auto& gp = opt.surrogate();
  for (std::size_t i = 0; i < opt.n_observations(); ++i)
    EXPECT_LE(std::abs(gp.predict(opt.observed_points()[i]).mean - opt.observed_values()[i]),
              3 * gp.noise_sd() + 1e-9);
}

TEST(BayesOpt, ExpectedImprovement) {
  EXPECT_DOUBLE_EQ(bo::expected_improvement(2.0, 0.0, 1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(bo::expected_improvement(0.5, 0.0, 1.0, 0.0), 0.0);
  EXPECT_NEAR(bo::expected_improvement(1.0, 1.0, 1.0, 0.0), 1.0 / std::sqrt(2 * M_PI), 1e-15);
  EXPECT_GT(bo::expected_improvement(0.0, 2.0, 1.0, 0.0),
            bo::expected_improvement(0.0, 1.0, 1.0, 0.0));
}

TEST(BayesOpt, LatinHypercubeStratifies) {
  bo::bo_config cfg;
  cfg.n_init = 10;
  bo::bayes_optimizer opt(4, 11, cfg);
  const auto& d = opt.initial_design();
  ASSERT_EQ(d.size(), 10u);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<int> bins(10, 0);
    for (const auto& x : d) ++bins[static_cast<std::size_t>(x[k] * 10)];
    for (int b : bins) EXPECT_EQ(b, 1);
  }
}

TEST(SearchSpace, Decode) {
  const search_space s{5, 2};
  EXPECT_EQ(s.k_max(), 14);
  const auto p = s.decode({0.25, 0.5, 0.0, 0.75});
  EXPECT_EQ(p.gamma, 0.25);
  EXPECT_EQ(p.K, 7);
  EXPECT_EQ(p.eta, -1.0);
  EXPECT_EQ(p.tau, 0.75);
  EXPECT_EQ(s.decode({1, 1, 1, 1}).K, 14);
  EXPECT_EQ(s.decode({1, 1, 1, 1}).eta, 1.0);
}

TEST(Optimize, LedgerIsCompleteAndReproducible) {
  const auto chain = small_chain();
  evaluation_service svc(chain);
  const auto res = bayesian_optimize(svc, 2, opts(20, 9));
  ASSERT_EQ(res.history.size(), 20u);
  const protocol_evaluator fresh(chain);
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    const auto& r = res.history[i];
    EXPECT_EQ(r.trial_index, i);
    EXPECT_EQ(r.seed, 9 + i);
    const auto p = parse_protocol(r.protocol_text);
    EXPECT_EQ(serialize(p), r.protocol_text);
    EXPECT_EQ(encode(r.params, 4, 2, r.seed), p);
    ASSERT_TRUE(r.result.has_value());
    EXPECT_EQ(r.objective, r.result->skr);
    EXPECT_NEAR(fresh.evaluate(p).skr, r.objective, 1e-12);
  }
  double best = 0.0;
  for (const auto& r : res.history) best = std::max(best, r.objective);
  EXPECT_EQ(res.best.objective, best);
}

TEST(Optimize, IncumbentIsMonotone) {
  evaluation_service svc(small_chain());
  const auto res = bayesian_optimize(svc, 2, opts(25, 4));
  std::ostringstream os;
  write_summary(os, res.history);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "trial_index,gamma,K,eta,tau,skr,best_so_far");
  double prev = -1.0;
  int rows = 0;
  while (std::getline(in, line)) {
    const double b = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(b, prev);
    prev = b;
    ++rows;
  }
  EXPECT_EQ(rows, 25);
  EXPECT_EQ(prev, res.best.objective);
}

TEST(Optimize, DeterministicAcrossRunsAndThreads) {
  const auto chain = small_chain();
  evaluation_service a(chain), b(chain);
  const auto r1 = bayesian_optimize(a, 2, opts(15, 21, 1));
  const auto r2 = bayesian_optimize(b, 2, opts(15, 21, 4));
  EXPECT_EQ(ledger_bytes(r1), ledger_bytes(r2));
  const auto s1 = random_search(a, 2, opts(15, 21, 1));
  const auto s2 = random_search(b, 2, opts(15, 21, 3));
  EXPECT_EQ(ledger_bytes(s1), ledger_bytes(s2));
}

TEST(Optimize, ShotsEqualToInitialDesign) {
  evaluation_service svc(small_chain());
  const auto res = bayesian_optimize(svc, 1, opts(10, 2));
  EXPECT_EQ(res.history.size(), 10u);
  EXPECT_THROW(bayesian_optimize(svc, 1, opts(9, 2)), validation_error);
  EXPECT_THROW(bayesian_optimize(svc, 1, opts(0, 2)), validation_error);
}

TEST(Optimize, FailedTrialsScoreZeroAndLoopContinues) {
  const auto chain = hardware_chain::homogeneous(3, 1e-4, 0.99, 1e7, 0.85,
                                                 coherence_mode::per_link_joint);
  eval_options eo;
  eo.coverage.t_cap = 1 << 12;
  evaluation_service svc(chain, eo);
  const auto res = bayesian_optimize(svc, 1, opts(12, 1));
  ASSERT_EQ(res.history.size(), 12u);
  for (const auto& r : res.history) {
    EXPECT_EQ(r.status, trial_status::truncation_cap_exceeded);
    EXPECT_EQ(r.objective, 0.0);
    EXPECT_FALSE(r.result.has_value());
  }
  std::ostringstream os;
  write_ledger(os, res.history);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("status"), "truncation_cap_exceeded");
  EXPECT_TRUE(j.at("metrics").is_null());
}

TEST(RandomSearch, ForcedZeroBudget) {
  evaluation_service svc(small_chain());
  const auto res = random_search(svc, 0, opts(1, 5));
  ASSERT_EQ(res.history.size(), 1u);
  EXPECT_EQ(res.history[0].params.K, 0);
  EXPECT_EQ(parse_protocol(res.history[0].protocol_text).total_rounds(), 0);
  EXPECT_THROW(random_search(svc, 0, opts(0, 5)), validation_error);
}

TEST(RandomSearch, NeverBeatsBruteForce) {
  evaluation_service svc(small_chain());
  const auto bf = brute_force(svc, 1, big_int(1000));
  EXPECT_EQ(bf.table.size(), 64u);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LE(random_search(svc, 1, opts(30, seed)).best.objective, bf.best.objective);
    EXPECT_LE(bayesian_optimize(svc, 1, opts(30, seed)).best.objective, bf.best.objective);
  }
  const auto r1 = random_search(svc, 1, opts(30, 77));
  const auto r2 = random_search(svc, 1, opts(30, 77));
  EXPECT_EQ(ledger_bytes(r1), ledger_bytes(r2));
}

TEST(BruteForce, SingleProtocolSpace) {
  evaluation_service svc(hardware_chain::homogeneous(3, 0.5, 0.95, 300.0, 0.85,
                                                     coherence_mode::per_node));
  const auto bf = brute_force(svc, 0, big_int(10));
  ASSERT_EQ(bf.table.size(), 1u);
  EXPECT_EQ(bf.best.protocol_text, "((L0:0)(L1:0):0)");
  EXPECT_EQ(bf.best_index, 0u);
}

TEST(BruteForce, ArgmaxTiesBreakByEnumerationOrder) {
  // Perfect hardware: every protocol without distillation has SKR 1, the
  // bare link first among them.
  evaluation_service svc(hardware_chain::homogeneous(2, 1.0, 1.0, kernels::infinity, 1.0,
                                                     coherence_mode::per_node));
  const auto bf = brute_force(svc, 2, big_int(10));
  EXPECT_EQ(bf.best_index, 0u);
  for (const auto& e : bf.table) EXPECT_DOUBLE_EQ(e.objective, 1.0);
}

TEST(BruteForce, RefusesOversizedSpace) {
  evaluation_service svc(small_chain());
  try {
    brute_force(svc, 2, big_int(100));
    FAIL() << "expected refusal";
  } catch (const space_too_large& e) {
    EXPECT_NE(std::string(e.what()).find("486"), std::string::npos) << e.what();
  }
}

TEST(BruteForce, ZeroRateScenarioUnderSmallCap) {
  const auto chain = hardware_chain::homogeneous(2, 9.6e-8, 0.36, 3.6e5, 0.85,
                                                 coherence_mode::per_link_joint);
  eval_options eo;
  eo.coverage.t_cap = 1 << 14;
  evaluation_service svc(chain, eo);
  const auto bf = brute_force(svc, 2, big_int(10));
  ASSERT_EQ(bf.table.size(), 3u);
  for (const auto& e : bf.table) EXPECT_EQ(e.objective, 0.0);
}

TEST(BruteForce, ParallelTableMatchesSerial) {
  const auto chain = small_chain();
  evaluation_service a(chain), b(chain);
  const auto s = brute_force(a, 1, big_int(1000), 1);
  const auto p = brute_force(b, 1, big_int(1000), 4);
  std::ostringstream x, y;
  write_brute_force_table(x, s);
  write_brute_force_table(y, p);
  EXPECT_EQ(x.str(), y.str());
}
