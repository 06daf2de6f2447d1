#include "simlauncher/proposal.hpp"

#include <gtest/gtest.h>

using namespace simlauncher;

namespace {

// One-dimensional world: critics score Q(s, a) = w * a, the actor and BC emit fixed actions.
struct Bandit {
  Actor actor;
  BcPolicy bc;
  CriticEnsemble critics;
};

Bandit bandit(double a_rl, double a_bc, double w, int k = 3) {
  Bandit b;
  b.actor.spec = {1, {}, 2, Activation::relu};
  b.actor.params = ParamVector::Zero(4);
  b.actor.params[2] = std::atanh(a_rl);
  b.actor.params[3] = -50.0;
  b.bc.spec = {1, {}, 1, Activation::relu};
  b.bc.params = ParamVector::Zero(2);
  b.bc.params[1] = std::atanh(a_bc);
  b.critics.spec = {2, {}, 1, Activation::relu};
  for (int i = 0; i < k; ++i) {
    ParamVector p = ParamVector::Zero(3);
    p[1] = w;
    b.critics.online.push_back(p);
    b.critics.target.push_back(p);
    b.critics.opt.push_back(AdamState::for_size(3));
  }
  return b;
}

}  // namespace

TEST(BetaSchedule, StartsAtBetaZero) {
  const BetaSchedule s{50.0, 3000, 1e6};
  const Beta b = beta_at(s, 0);
  EXPECT_EQ(b.value, 50.0);
  EXPECT_FALSE(b.argmax);
}

TEST(BetaSchedule, DoublesEveryPeriod) {
  const BetaSchedule s{50.0, 3000, 1e6};
  EXPECT_DOUBLE_EQ(beta_at(s, 3000).value, 100.0);
  EXPECT_DOUBLE_EQ(beta_at(s, 6000).value, 200.0);
  EXPECT_DOUBLE_EQ(beta_at(s, 1500).value, 50.0 * std::sqrt(2.0));
}

TEST(BetaSchedule, SwitchesToArgmaxPastBetaMax) {
  const BetaSchedule s{50.0, 3000, 1e6};
  // 50 * 2^k > 1e6 first at k = 15 (2^15 = 32768 -> 1.6e6).
  EXPECT_FALSE(beta_at(s, 14 * 3000).argmax);
  const Beta b = beta_at(s, 15 * 3000);
  EXPECT_TRUE(b.argmax);
  EXPECT_TRUE(std::isinf(b.value));
}

TEST(BetaSchedule, Validation) {
  EXPECT_THROW((BetaSchedule{0.0, 10, 1e6}.validate()), std::invalid_argument);
  EXPECT_THROW((BetaSchedule{50.0, 0, 1e6}.validate()), std::invalid_argument);
  EXPECT_THROW((BetaSchedule{50.0, 10, 10.0}.validate()), std::invalid_argument);
  EXPECT_THROW(beta_at(BetaSchedule{}, -1), std::invalid_argument);
}

TEST(Logistic, StableInBothTails) {
  EXPECT_EQ(logistic(0.0), 0.5);
  EXPECT_NEAR(1.0 - logistic(25.0), 1.3887943864771144e-11, 1e-15);
  EXPECT_NEAR(logistic(-25.0) / 1.3887943864771144e-11, 1.0, 1e-12);
  EXPECT_GT(logistic(-800.0), -1e-300);
  EXPECT_EQ(logistic(800.0), 1.0);
  EXPECT_NEAR(logistic(-3.0) + logistic(3.0), 1.0, 1e-15);
}

TEST(BcProbability, UniformAtZeroBeta) {
  EXPECT_EQ(bc_probability(0.3, -4.0, {0.0, false}), 0.5);
}

TEST(BcProbability, AnalyticLogistic) {
  const double p = bc_probability(0.5, 1.0, {50.0, false});
  EXPECT_NEAR(1.0 - p, 1.3887943864771144e-11, 1e-15);
}

TEST(BcProbability, ArgmaxModeIsDeterministicWithTiesToRl) {
  const Beta inf{std::numeric_limits<double>::infinity(), true};
  EXPECT_EQ(bc_probability(0.5, 0.2, inf), 0.0);
  EXPECT_EQ(bc_probability(0.2, 0.5, inf), 1.0);
  EXPECT_EQ(bc_probability(0.5, 0.5, inf), 0.0);
}

TEST(Propose, ScoresCandidatesWithMeanCritic) {
  Bandit b = bandit(0.2, 0.6, 1.0);
  b.critics.online[1][1] = 2.0;  // member weights 1, 2, 1 -> mean 4/3
  Rng rng(1);
  const ProposalDecision d = propose(Vec::Zero(1), b.actor, b.bc, b.critics, {1.0, false}, rng);
  EXPECT_NEAR(d.q_rl, 0.2 * 4.0 / 3.0, 1e-4);
  EXPECT_NEAR(d.q_bc, 0.6 * 4.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(d.p_bc, logistic(d.q_bc - d.q_rl));
}

TEST(Propose, ArgmaxPicksRlWhenBcIsWorse) {
  const Bandit b = bandit(0.7, 0.1, 1.0);
  Rng rng(2);
  const Beta inf{std::numeric_limits<double>::infinity(), true};
  for (int i = 0; i < 1000; ++i) {
    const ProposalDecision d = propose(Vec::Zero(1), b.actor, b.bc, b.critics, inf, rng);
    ASSERT_EQ(d.source, ProposalSource::rl);
    ASSERT_EQ(d.p_bc, 0.0);
  }
}

TEST(Propose, ArgmaxPicksBcWhenBcIsBetter) {
  const Bandit b = bandit(-0.3, 0.4, 1.0);
  Rng rng(2);
  const Beta inf{std::numeric_limits<double>::infinity(), true};
  for (int i = 0; i < 100; ++i) {
    const ProposalDecision d = propose(Vec::Zero(1), b.actor, b.bc, b.critics, inf, rng);
    ASSERT_EQ(d.source, ProposalSource::bc);
    ASSERT_EQ(d.action, b.bc.act(Vec::Zero(1)));
  }
}

TEST(Propose, EmpiricalFrequencyMatchesLogisticOnGrid) {
  // Q(s, a) = a with candidate actions set so that q_rl, q_bc range over {-0.5, 0, 0.5}.
  for (double q_rl : {-0.5, 0.0, 0.5})
    for (double q_bc : {-0.5, 0.0, 0.5})
      for (double beta : {0.0, 1.0, 50.0}) {
        const Bandit b = bandit(q_rl, q_bc, 1.0);
        Rng rng(7);
        const int n = 10000;
        int bc = 0;
        double p = 0.0;
        for (int i = 0; i < n; ++i) {
          const ProposalDecision d = propose(Vec::Zero(1), b.actor, b.bc, b.critics, {beta, false}, rng);
          bc += d.source == ProposalSource::bc ? 1 : 0;
          p = d.p_bc;
        }
        const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / n);
        EXPECT_LE(std::abs(bc / double(n) - p), 3.0 * se + 1e-12) << q_rl << " " << q_bc << " " << beta;
        EXPECT_NEAR(p, logistic(beta * (q_bc - q_rl)), 1e-3);
      }
}

TEST(Propose, RejectsMismatchedShapes) {
  Bandit b = bandit(0.1, 0.1, 1.0);
  Rng rng(3);
  EXPECT_THROW(propose(Vec::Zero(2), b.actor, b.bc, b.critics, {1.0, false}, rng), std::invalid_argument);
  b.critics.online.clear();
  EXPECT_THROW(propose(Vec::Zero(1), b.actor, b.bc, b.critics, {1.0, false}, rng), std::invalid_argument);
}
