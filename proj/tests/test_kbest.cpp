#include "fastsd/baselines.hpp"
#include "fastsd/kbest.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace fastsd;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

RealSystem instance(int n_t, int n_r, Modulation m, double snr_db, std::uint64_t seed) {
  return sample_instance(n_t, n_r, Constellation(m), snr_db, seed);
}

detail::Rotated rotated(const RealSystem& sys) {
  std::uint64_t unused = 0;
  return detail::rotate(sys.H, sys.y, unused);
}

}  // namespace

TEST(Ksd, FullWidthEqualsMl) {
  for (std::uint64_t t = 0; t < 200; ++t) {
    const RealSystem sys = instance(4, 4, Modulation::QPSK, static_cast<double>(t % 12), 10 + t);
    EXPECT_EQ(decode_ksd(sys, 256).s_hat, detect_ml_bruteforce(sys).s_hat);
  }
  for (std::uint64_t t = 0; t < 50; ++t) {
    const RealSystem sys = instance(2, 2, Modulation::QAM16, 6.0, 300 + t);
    EXPECT_EQ(decode_ksd(sys, 256).s_hat, detect_ml_bruteforce(sys).s_hat);
  }
}

TEST(Ksd, WidthOneIsDecisionFeedback) {
  for (auto mod : {Modulation::QPSK, Modulation::QAM16, Modulation::QAM64}) {
    for (std::uint64_t t = 0; t < 100; ++t) {
      const RealSystem sys = instance(4, 4, mod, 8.0, 400 + t);
      const auto rot = rotated(sys);
      EXPECT_EQ(decode_ksd(sys, 1).s_hat, oracle::greedy_decision_feedback(rot.R, rot.z, sys.constellation));
    }
  }
}

TEST(Ksd, MatchesReferenceImplementation) {
  for (auto [mod, K] : {std::pair{Modulation::QPSK, 4}, {Modulation::QPSK, 16}, {Modulation::QAM16, 8},
                        {Modulation::QAM64, 5}}) {
    for (std::uint64_t t = 0; t < 100; ++t) {
      const RealSystem sys = instance(4, 4, mod, 4.0 + static_cast<double>(t % 3) * 4.0, 500 + t);
      const auto rot = rotated(sys);
      EXPECT_EQ(decode_ksd(sys, K).s_hat, oracle::reference_kbest(rot.R, rot.z, sys.constellation, K));
    }
  }
}

TEST(Ksd, ReportedMetricIsTheRotatedMetric) {
  const RealSystem sys = instance(4, 4, Modulation::QAM16, 5.0, 600);
  const auto rot = rotated(sys);
  const DetectionResult r = decode_ksd(sys, 8);
  EXPECT_NEAR(r.metric, ml_metric(r.s_hat, rot.z, rot.R), 1e-9);
}

TEST(Ksd, ConventionalProfileSaturates) {
  const RealSystem sys = instance(8, 8, Modulation::QPSK, 6.0, 700);
  for (int K : {1, 3, 8, 16, 64}) {
    const DetectionResult r = decode_ksd(sys, K);
    ASSERT_EQ(r.survivors.size(), 16u);
    std::size_t reachable = 1;
    for (std::size_t m = 0; m < r.survivors.size(); ++m) {
      reachable = std::min<std::size_t>(reachable * 2, 1u << 20);
      EXPECT_EQ(r.survivors[m], std::min<std::size_t>(static_cast<std::size_t>(K), reachable)) << "K " << K;
    }
  }
}

TEST(Ksd, NodeCountMatchesProfile) {
  const RealSystem sys = instance(4, 4, Modulation::QAM16, 6.0, 701);
  const DetectionResult r = decode_ksd(sys, 5);
  std::uint64_t expect = 4;  // root children
  for (std::size_t m = 0; m + 1 < r.survivors.size(); ++m) expect += 4 * r.survivors[m];
  EXPECT_EQ(r.visited_nodes(), expect);
}

TEST(Ksd, BestPartialMetricNonDecreasing) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    const RealSystem sys = instance(6, 6, Modulation::QAM16, 8.0, 800 + t);
    const DetectionResult r = decode_ksd(sys, 8);
    ASSERT_EQ(r.radius_trace.size(), 12u);
    for (std::size_t k = 1; k < r.radius_trace.size(); ++k) {
      EXPECT_GE(r.radius_trace[k].radius_sq, r.radius_trace[k - 1].radius_sq);
      EXPECT_GT(r.radius_trace[k].node, r.radius_trace[k - 1].node);
    }
    EXPECT_EQ(r.radius_trace.back().radius_sq, r.metric);
  }
}

TEST(Ksd, InvalidWidthThrows) {
  const RealSystem sys = instance(2, 2, Modulation::QPSK, 6.0, 1);
  EXPECT_THROW(decode_ksd(sys, 0), Error);
  Rng rng(1);
  KbestConfig cfg;
  cfg.K = 0;
  EXPECT_THROW(decode_fdl_ksd(sys, oracle::random_params(4, 2, Modulation::QPSK, 0.1, 0.1, rng), cfg), Error);
}

TEST(FdlKsd, NoiselessRecoversTransmitVector) {
  Rng rng(2);
  for (auto mod : {Modulation::QPSK, Modulation::QAM16}) {
    const auto params = oracle::random_params(8, 3, mod, 0.1, 0.1, rng);
    for (std::uint64_t t = 0; t < 20; ++t) {
      const RealSystem sys = instance(4, 4, mod, kInf, 900 + t);
      EXPECT_EQ(decode_fdl_ksd(sys, params).s_hat, sys.s_true);
    }
  }
}

TEST(FdlKsd, AllPrunedReturnsNetworkSolution) {
  // A narrow beam loses the network's path early and everything left
  // exceeds phi(s_hat) before the leaf layer.
  Rng rng(3);
  const auto params = oracle::random_params(8, 3, Modulation::QPSK, 0.1, 0.1, rng);
  KbestConfig cfg;
  cfg.K = 1;
  int terminated = 0;
  for (std::uint64_t t = 0; t < 300; ++t) {
    const RealSystem sys = instance(4, 4, Modulation::QPSK, 0.0, 1000 + t);
    const DetectionResult r = decode_fdl_ksd(sys, params, cfg);
    if (!r.early_terminated) continue;
    ++terminated;
    EXPECT_EQ(r.s_hat, quantize(forward(params, sys.H, sys.y).soft, sys.constellation));
    EXPECT_EQ(r.survivors.back(), 0u);
  }
  EXPECT_GT(terminated, 0);
}

TEST(FdlKsd, EmptyConventionalRadiusFallsBackToNetworkMetric) {
  Rng rng(7);
  const auto params = oracle::random_params(8, 3, Modulation::QPSK, 0.1, 0.1, rng);
  KbestConfig tiny;
  tiny.alpha = 1e-12;
  KbestConfig phi_only;
  phi_only.alpha = kInf;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const RealSystem sys = instance(4, 4, Modulation::QPSK, 4.0, 1400 + t);
    const DetectionResult a = decode_fdl_ksd(sys, params, tiny);
    const DetectionResult b = decode_fdl_ksd(sys, params, phi_only);
    EXPECT_EQ(a.restarts, 1u);
    EXPECT_EQ(b.restarts, 0u);
    EXPECT_EQ(a.s_hat, b.s_hat);
    EXPECT_EQ(a.survivors, b.survivors);
    EXPECT_GT(a.visited_nodes(), b.visited_nodes());
  }
}

TEST(FdlKsd, NeverWorseThanNetworkOrPlainKbestOnSameOrder) {
  Rng rng(4);
  const auto params = oracle::random_params(16, 4, Modulation::QPSK, 0.2, 0.1, rng);
  KbestConfig pruned;
  pruned.K = 8;
  KbestConfig plain = pruned;
  plain.early_reject = false;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const RealSystem sys = instance(8, 8, Modulation::QPSK, static_cast<double>(t % 13), 1100 + t);
    DetectionResult scratch;
    const FsNetSeed seed = fsnet_seed(sys, params, true, scratch);
    const DetectionResult a = decode_fdl_ksd(sys, params, pruned);
    const DetectionResult b = decode_fdl_ksd(sys, params, plain);
    const double tol = 1e-12 * std::max(1.0, seed.phi_hat);
    ASSERT_LE(a.metric, seed.phi_hat + tol) << "trial " << t;
    ASSERT_LE(a.metric, b.metric + tol) << "trial " << t;
    if (a.restarts == 0) {
      ASSERT_LE(a.visited_nodes(), b.visited_nodes());
    }
  }
}

TEST(FdlKsd, WithoutOptionsEqualsConventional) {
  Rng rng(5);
  const auto params = oracle::random_params(8, 3, Modulation::QAM16, 0.1, 0.1, rng);
  KbestConfig cfg;
  cfg.K = 6;
  cfg.early_reject = false;
  cfg.layer_order = false;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const RealSystem sys = instance(4, 4, Modulation::QAM16, 7.0, 1200 + t);
    const DetectionResult a = decode_fdl_ksd(sys, params, cfg);
    const DetectionResult b = decode_ksd(sys, 6);
    EXPECT_EQ(a.s_hat, b.s_hat);
    EXPECT_EQ(a.survivors, b.survivors);
    EXPECT_EQ(a.visited_nodes(), b.visited_nodes());
  }
}

TEST(FdlKsd, SurvivorProfileBounds) {
  Rng rng(6);
  const auto params = oracle::random_params(16, 4, Modulation::QPSK, 0.2, 0.1, rng);
  KbestConfig cfg;
  cfg.K = 8;
  for (std::uint64_t t = 0; t < 300; ++t) {
    const RealSystem sys = instance(8, 8, Modulation::QPSK, static_cast<double>(t % 13), 1300 + t);
    const DetectionResult r = decode_fdl_ksd(sys, params, cfg);
    const auto& prof = survivor_profile(r);
    ASSERT_EQ(prof.size(), 16u);
    bool dead = false;
    for (std::size_t m = 0; m < prof.size(); ++m) {
      EXPECT_LE(prof[m], 8u);
      const std::size_t parents = m == 0 ? 1 : prof[m - 1];
      EXPECT_LE(prof[m], 2 * parents);
      if (dead) {
        EXPECT_EQ(prof[m], 0u);
      }
      dead = dead || prof[m] == 0;
    }
    EXPECT_EQ(dead, r.early_terminated);
  }
}
