#include "simlauncher/rollout.hpp"
#include "simlauncher/sac_core.hpp"

#include <gtest/gtest.h>

using namespace simlauncher;

namespace {

SacHypers tiny_hypers() {
  SacHypers h;
  h.ensemble_size = 3;
  h.subsample = 2;
  h.grad_steps = 1;
  h.batch_size = 32;
  h.actor_hidden = {16, 16};
  h.critic_hidden = {16, 16};
  return h;
}

Batch random_batch(int obs_dim, int act_dim, int n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::bernoulli_distribution coin(0.3);
  Batch b;
  b.obs = Mat(obs_dim, n);
  b.next_obs = Mat(obs_dim, n);
  b.action = Mat(act_dim, n);
  b.reward = Vec(n);
  b.terminated = Vec(n);
  b.truncated = Vec::Zero(n);
  for (auto* m : {&b.obs, &b.next_obs})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < b.action.size(); ++i) b.action.data()[i] = std::tanh(n01(rng));
  for (int j = 0; j < n; ++j) {
    b.terminated[j] = coin(rng) ? 1.0 : 0.0;
    b.reward[j] = b.terminated[j];
  }
  b.source.assign(static_cast<std::size_t>(n), SourceTag::replay);
  return b;
}

// Single linear layer whose action weights and bias are given; obs weights zero.
ParamVector linear_critic(const MlpSpec& spec, int obs_dim, const std::vector<double>& action_w, double bias) {
  ParamVector p = ParamVector::Zero(spec.param_count());
  for (std::size_t i = 0; i < action_w.size(); ++i) p[obs_dim + static_cast<Eigen::Index>(i)] = action_w[i];
  p[p.size() - 1] = bias;
  return p;
}

// Actor with a fixed mean action and clamped minimum log_std.
Actor fixed_actor(int obs_dim, int act_dim, double action) {
  Actor a;
  a.spec = {static_cast<std::size_t>(obs_dim), {}, static_cast<std::size_t>(2 * act_dim), Activation::relu};
  a.params = ParamVector::Zero(a.spec.param_count());
  const Eigen::Index bias = a.spec.param_count() - 2 * act_dim;
  for (int i = 0; i < act_dim; ++i) {
    a.params[bias + i] = std::atanh(action);
    a.params[bias + act_dim + i] = -50.0;
  }
  a.opt = AdamState::for_size(a.params.size());
  return a;
}

BcPolicy fixed_bc(int obs_dim, int act_dim, double action) {
  BcPolicy bc;
  bc.spec = {static_cast<std::size_t>(obs_dim), {}, static_cast<std::size_t>(act_dim), Activation::relu};
  bc.params = ParamVector::Zero(bc.spec.param_count());
  for (int i = 0; i < act_dim; ++i) bc.params[bc.spec.param_count() - act_dim + i] = std::atanh(action);
  return bc;
}

CriticEnsemble linear_ensemble(int obs_dim, int act_dim, int k, const std::vector<double>& w, double bias) {
  CriticEnsemble e;
  e.spec = {static_cast<std::size_t>(obs_dim + act_dim), {}, 1, Activation::relu};
  for (int i = 0; i < k; ++i) {
    e.online.push_back(linear_critic(e.spec, obs_dim, w, bias));
    e.target.push_back(e.online.back());
    e.opt.push_back(AdamState::for_size(e.online.back().size()));
  }
  return e;
}

BufferStore oracle_demos(int episodes, std::uint64_t seed) {
  BufferStore d(kDemoCapacity);
  TwinEnv env = make_env(TaskId::push_place, Variant::sim, {}, seed);
  Rng rng(seed);
  for (int i = 0; i < episodes; ++i)
    for (auto& t : run_episode(env, oracle_policy(TaskId::push_place), rng, PolicyInput::privileged,
                               SourceTag::sim_demo)
                       .transitions)
      d.push(t);
  return d;
}

}  // namespace

TEST(QValues, SingletonMatchesForward) {
  SacHypers h = tiny_hypers();
  h.ensemble_size = 1;
  h.subsample = 1;
  const SacLearner l = make_learner(4, 2, h, 1);
  const Vec o = Vec::Random(4), a = Vec::Random(2);
  Vec in(6);
  in << o, a;
  const Vec q = q_values(l.critics, o, a);
  ASSERT_EQ(q.size(), 1);
  EXPECT_EQ(q[0], forward(l.critics.online[0], l.critics.spec, in)[0]);
}

TEST(QValues, DuplicatedMembersAgree) {
  SacLearner l = make_learner(4, 2, tiny_hypers(), 1);
  l.critics.online[2] = l.critics.online[0];
  const Vec q = q_values(l.critics, Vec::Random(4), Vec::Random(2));
  EXPECT_EQ(q[0], q[2]);
  EXPECT_NE(q[0], q[1]);
}

TEST(QValues, MatchesMemberwiseForward) {
  const SacLearner l = make_learner(4, 2, tiny_hypers(), 3);
  const Vec o = Vec::Random(4), a = Vec::Random(2);
  Vec in(6);
  in << o, a;
  const Vec q = q_values(l.critics, o, a);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(q[k], forward(l.critics.online[static_cast<std::size_t>(k)], l.critics.spec, in)[0]);
}

TEST(SubsampledMin, FullSubsetIsGlobalMin) {
  Rng rng(1);
  const Vec q = (Vec(4) << 0.3, -0.2, 0.9, 0.1).finished();
  EXPECT_EQ(subsampled_min(q, 4, rng), -0.2);
}

TEST(SubsampledMin, ExplicitSubset) {
  const Vec q = (Vec(3) << 0.5, 0.2, 0.9).finished();
  EXPECT_EQ(min_over(q, {0, 2}), 0.5);
}

TEST(SubsampledMin, NeverBelowGlobalMinAndSubsetsAreUniform) {
  Rng rng(2);
  std::normal_distribution<double> n01;
  std::array<int, 10> picked{};
  for (int i = 0; i < 10000; ++i) {
    Vec q(10);
    for (auto& v : q) v = n01(rng);
    ASSERT_GE(subsampled_min(q, 2, rng), q.minCoeff());
    const auto s = draw_subset(10, 2, rng);
    ASSERT_NE(s[0], s[1]);
    ++picked[static_cast<std::size_t>(s[0])];
    ++picked[static_cast<std::size_t>(s[1])];
  }
  const double sigma = std::sqrt(20000 * 0.1 * 0.9);
  for (int c : picked) EXPECT_LT(std::abs(c - 2000), 4 * sigma);
}

TEST(TdTargetStandard, TerminalIsReward) {
  Rng rng(1);
  const SacLearner l = make_learner(3, 2, tiny_hypers(), 1);
  Batch b = random_batch(3, 2, 16, rng);
  b.terminated.setOnes();
  b.reward.setOnes();
  const Vec y = td_target_standard(b, l.actor, l.critics, l.alpha, l.hypers, rng);
  EXPECT_EQ(y, Vec::Ones(16));
}

TEST(TdTargetStandard, Substitution) {
  Rng rng(1);
  SacHypers h = tiny_hypers();
  const CriticEnsemble e = linear_ensemble(3, 2, 3, {0.0, 0.0}, 0.8);
  const Actor actor = fixed_actor(3, 2, 0.1);
  Batch b = random_batch(3, 2, 8, rng);
  b.terminated.setZero();
  b.reward.setZero();
  const Vec y = td_target_standard(b, actor, e, AlphaState{}, h, rng, {false, nullptr});
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(y[j], 0.776, 1e-12);
}

TEST(TdTargetStandard, MyopicLimit) {
  Rng rng(1);
  SacLearner l = make_learner(3, 2, tiny_hypers(), 1);
  SacHypers h = l.hypers;
  h.gamma = 0.0;
  const Batch b = random_batch(3, 2, 16, rng);
  EXPECT_EQ(td_target_standard(b, l.actor, l.critics, l.alpha, h, rng), b.reward);
}

TEST(TdTargetProposal, Substitution) {
  Rng rng(1);
  const CriticEnsemble e = linear_ensemble(3, 1, 3, {1.0}, 0.0);
  const Actor actor = fixed_actor(3, 1, 0.5);
  const BcPolicy bc = fixed_bc(3, 1, 0.8);
  Batch b = random_batch(3, 1, 8, rng);
  b.terminated.setZero();
  b.reward.setOnes();
  const Vec y = td_target_proposal(b, actor, bc, e, AlphaState{}, tiny_hypers(), rng, {false, nullptr});
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(y[j], 1.776, 1e-9);
}

TEST(TdTargetProposal, IdenticalActionsReduceToStandard) {
  Rng rng(1);
  const CriticEnsemble e = linear_ensemble(3, 1, 3, {1.0}, 0.2);
  const Actor actor = fixed_actor(3, 1, 0.3);
  const BcPolicy bc = fixed_bc(3, 1, 0.3);
  const Batch b = random_batch(3, 1, 16, rng);
  Rng r1(5), r2(5);
  const Vec ys = td_target_standard(b, actor, e, AlphaState{}, tiny_hypers(), r1, {false, nullptr});
  const Vec yp = td_target_proposal(b, actor, bc, e, AlphaState{}, tiny_hypers(), r2, {false, nullptr});
  EXPECT_LT((ys - yp).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(TdTargetProposal, DominatesStandardWithSharedRng) {
  Rng data(7);
  const SacLearner l = make_learner(4, 2, tiny_hypers(), 2);
  BcPolicy bc;
  bc.spec = {4, {16}, 2, Activation::relu};
  bc.params = init_mlp(bc.spec, 9);
  for (int i = 0; i < 100; ++i) {
    const Batch b = random_batch(4, 2, 32, data);
    Rng r1(100 + i), r2(100 + i);
    const Vec ys = td_target_standard(b, l.actor, l.critics, l.alpha, l.hypers, r1, {false, nullptr});
    const Vec yp = td_target_proposal(b, l.actor, bc, l.critics, l.alpha, l.hypers, r2, {false, nullptr});
    for (int j = 0; j < 32; ++j) ASSERT_GE(yp[j], ys[j]);
    for (int j = 0; j < 32; ++j) {
      if (b.terminated[j] > 0.5) {
        ASSERT_EQ(yp[j], b.reward[j]);
      }
    }
  }
}

TEST(TdTargetProposal, RejectsMismatchedBc) {
  Rng rng(1);
  const SacLearner l = make_learner(4, 2, tiny_hypers(), 2);
  const BcPolicy bc = fixed_bc(3, 2, 0.0);
  EXPECT_THROW(td_target_proposal(random_batch(4, 2, 4, rng), l.actor, bc, l.critics, l.alpha, l.hypers, rng),
               std::invalid_argument);
}

TEST(Shaping, AddsPotentialDifference) {
  Rng rng(3);
  const CriticEnsemble e = linear_ensemble(2, 1, 2, {0.0}, 0.0);
  const Actor actor = fixed_actor(2, 1, 0.0);
  Batch b = random_batch(2, 1, 8, rng);
  const Potential phi = [](const Vec& s) { return s[0]; };
  const Vec y = td_target_standard(b, actor, e, AlphaState{}, tiny_hypers(), rng, {false, &phi});
  for (int j = 0; j < 8; ++j) {
    const double next = b.terminated[j] > 0.5 ? 0.0 : b.next_obs(0, j);
    EXPECT_NEAR(y[j], b.reward[j] + 0.97 * next - b.obs(0, j), 1e-12);
  }
}

TEST(CriticUpdate, FixedPointHasZeroLoss) {
  Rng rng(2);
  SacLearner l = make_learner(3, 2, tiny_hypers(), 4);
  const Batch b = random_batch(3, 2, 16, rng);
  const Vec y = forward_batch(l.critics.online[0], l.critics.spec, concat_rows(b.obs, b.action)).row(0).transpose();
  CriticEnsemble one = l.critics;
  one.online.resize(1);
  one.target.resize(1);
  one.opt.resize(1);
  const ParamVector before = one.online[0];
  EXPECT_EQ(critic_update(one, b, y), 0.0);
  EXPECT_EQ(one.online[0], before);
}

TEST(CriticUpdate, SingleSampleLossIsSquaredError) {
  Rng rng(2);
  CriticEnsemble e = linear_ensemble(3, 1, 1, {0.5}, 0.25);
  Batch b = random_batch(3, 1, 1, rng);
  const double q = 0.5 * b.action(0, 0) + 0.25;
  const Vec y = Vec::Constant(1, -0.4);
  EXPECT_NEAR(critic_update(e, b, y), (q + 0.4) * (q + 0.4), 1e-15);
}

TEST(CriticUpdate, FitsFrozenBatch) {
  Rng rng(3);
  SacHypers h = tiny_hypers();
  h.critic_hidden = {32, 32};
  h.critic_lr = 1e-3;
  SacLearner l = make_learner(3, 2, h, 5);
  const Batch b = random_batch(3, 2, 32, rng);
  Vec y(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : y) v = u(rng);
  double loss = 1.0;
  for (int i = 0; i < 2000; ++i) loss = critic_update(l.critics, b, y);
  EXPECT_LT(loss, 1e-3);
}

TEST(ActorUpdate, LargeAlphaRaisesEntropy) {
  Rng rng(4);
  SacLearner l = make_learner(3, 2, tiny_hypers(), 6);
  l.alpha.log_alpha = std::log(100.0);
  // Start well below the squashed-Gaussian entropy maximum (sigma near 0.87).
  const Eigen::Index bias = l.actor.params.size() - 4;
  l.actor.params.segment(bias + 2, 2).setConstant(-2.0);
  const Batch b = random_batch(3, 2, 32, rng);
  const PolicySample s0 = l.actor.sample(b.obs, rng);
  const double start = s0.log_std.mean();
  ActorUpdateResult last;
  for (int i = 0; i < 100; ++i) last = actor_update(l.actor, l.critics, l.alpha, b, rng);
  EXPECT_GT(last.mean_log_std, start + 0.01);
  EXPECT_GT(-last.log_probs.mean(), -s0.log_prob.mean());
}

TEST(ActorUpdate, ConstantCriticGivesPureEntropyGradient) {
  Rng rng(5);
  SacLearner l = make_learner(3, 2, tiny_hypers(), 7);
  l.critics = linear_ensemble(3, 2, 3, {0.0, 0.0}, 1.7);
  const Batch b = random_batch(3, 2, 32, rng);
  Actor a1 = l.actor, a2 = l.actor;
  Rng r1(9), r2(9);
  const auto res = actor_update(a1, l.critics, l.alpha, b, r1);
  // Reference: gradient of alpha * mean(log_pi) alone, with the same draws.
  draw_subset(3, 2, r2);
  const PolicySample s = a2.sample(b.obs, r2);
  const Mat head = policy_head_upstream(s, Mat::Zero(2, 32), Vec::Constant(32, l.alpha.alpha() / 32.0));
  adam_step(a2.opt, a2.params, backward_batch(a2.params, a2.spec, s.tape, head));
  EXPECT_NEAR(res.loss, l.alpha.alpha() * res.log_probs.mean() - 1.7, 1e-12);
  EXPECT_LT((a1.params - a2.params).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ActorUpdate, BanditConvergesToOptimum) {
  Rng rng(6);
  SacHypers h = tiny_hypers();
  h.ensemble_size = 2;
  h.critic_hidden = {64, 64};
  h.critic_lr = 1e-3;
  h.actor_lr = 3e-3;
  SacLearner l = make_learner(1, 1, h, 8);
  // Fit both critics to Q(s, a) = -(a - 0.5)^2 on a fixed grid.
  Batch grid;
  const int n = 64;
  grid.obs = Mat::Zero(1, n);
  grid.next_obs = Mat::Zero(1, n);
  grid.action = Mat(1, n);
  grid.reward = Vec::Zero(n);
  grid.terminated = Vec::Zero(n);
  grid.truncated = Vec::Zero(n);
  Vec y(n);
  for (int j = 0; j < n; ++j) {
    grid.action(0, j) = -1.0 + 2.0 * j / (n - 1);
    y[j] = -(grid.action(0, j) - 0.5) * (grid.action(0, j) - 0.5);
  }
  for (int i = 0; i < 3000; ++i) critic_update(l.critics, grid, y);
  l.alpha.log_alpha = std::log(1e-4);
  Batch obs = grid;
  for (int i = 0; i < 500; ++i) actor_update(l.actor, l.critics, l.alpha, obs, rng);
  EXPECT_NEAR(l.actor.mean_action(Mat::Zero(1, 1))(0, 0), 0.5, 0.1);
}

TEST(AlphaUpdate, SignOfGradient) {
  AlphaState above, below, equal;
  for (AlphaState* s : {&above, &below, &equal}) {
    s->target_entropy = -2.0;
    s->log_alpha = std::log(0.1);
  }
  // entropy = -mean(log_pi)
  alpha_update(above, Vec::Constant(4, 1.0));   // entropy -1 > -2
  alpha_update(below, Vec::Constant(4, 3.0));   // entropy -3 < -2
  alpha_update(equal, Vec::Constant(4, 2.0));   // entropy -2
  EXPECT_LT(above.log_alpha, std::log(0.1));
  EXPECT_GT(below.log_alpha, std::log(0.1));
  EXPECT_EQ(equal.log_alpha, std::log(0.1));
}

TEST(LearnerStep, CountsOneUpdateEachPerGradStep) {
  const BufferStore demos = oracle_demos(5, 1);
  const BufferStore empty(8);
  SacHypers h = tiny_hypers();
  for (int g : {1, 3}) {
    h.grad_steps = g;
    SacLearner l = make_learner(5, 3, h, 1);
    Rng rng(2);
    const auto m = learner_step(l, {&empty, &demos, &empty}, {}, rng);
    EXPECT_EQ(l.counters.critic_updates, g);
    EXPECT_EQ(l.counters.polyak_updates, g);
    EXPECT_EQ(l.counters.actor_updates, 1);
    EXPECT_EQ(l.counters.alpha_updates, 1);
    EXPECT_EQ(l.counters.learner_steps, 1);
    EXPECT_EQ(m.batch_counts.size(), static_cast<std::size_t>(g + 1));
    for (const auto& c : m.batch_counts) EXPECT_EQ(c, (std::array<int, 3>{0, 32, 0}));
  }
}

TEST(LearnerStep, PolyakMovesTargets) {
  const BufferStore demos = oracle_demos(3, 1);
  const BufferStore empty(8);
  SacLearner l = make_learner(5, 3, tiny_hypers(), 1);
  const ParamVector t0 = l.critics.target[0];
  Rng rng(2);
  learner_step(l, {&empty, &demos, &empty}, {}, rng);
  const ParamVector expect = polyak_update(t0, l.critics.online[0], l.hypers.rho);
  EXPECT_EQ(l.critics.target[0], expect);
}

TEST(LearnerStep, DeterministicFromIdenticalStates) {
  const BufferStore demos = oracle_demos(5, 1);
  const BufferStore empty(8);
  SacLearner a = make_learner(5, 3, tiny_hypers(), 1);
  SacLearner b = a;
  Rng r1(3), r2(3);
  for (int i = 0; i < 5; ++i) {
    const auto ma = learner_step(a, {&empty, &demos, &demos}, {}, r1);
    const auto mb = learner_step(b, {&empty, &demos, &demos}, {}, r2);
    ASSERT_EQ(ma, mb);
  }
  EXPECT_EQ(a.actor.params, b.actor.params);
}

TEST(LearnerStep, ProposalTargetRequiresBc) {
  const BufferStore demos = oracle_demos(1, 1);
  SacLearner l = make_learner(5, 3, tiny_hypers(), 1);
  Rng rng(1);
  LearnerConfig cfg;
  cfg.target = TargetKind::proposal;
  EXPECT_THROW(learner_step(l, {&demos, &demos, &demos}, cfg, rng), std::invalid_argument);
}

TEST(LearnerStep, DemoOnlyCriticLossDecreases) {
  const BufferStore demos = oracle_demos(40, 2);
  const BufferStore empty(8);
  SacHypers h = tiny_hypers();
  h.critic_hidden = {64, 64};
  h.actor_hidden = {64, 64};
  h.batch_size = 64;
  SacLearner l = make_learner(5, 3, h, 3);
  Rng rng(4);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double c = learner_step(l, {&empty, &demos, &empty}, {}, rng).critic_loss;
    if (i < 50) early += c / 50;
    if (i >= 450) late += c / 50;
  }
  EXPECT_LT(late, early);
}

TEST(LearnerPersistence, RoundTripIsBitwise) {
  const BufferStore demos = oracle_demos(2, 1);
  SacLearner l = make_learner(5, 3, tiny_hypers(), 1);
  Rng rng(1);
  for (int i = 0; i < 3; ++i) learner_step(l, {&demos, &demos, &demos}, {}, rng);
  Checkpoint ck;
  save_learner(ck, l);
  const SacLearner r = load_learner(Checkpoint::decode(ck.encode()));
  EXPECT_EQ(r.hypers, l.hypers);
  EXPECT_EQ(r.actor.params, l.actor.params);
  EXPECT_EQ(r.actor.opt.first_moment, l.actor.opt.first_moment);
  EXPECT_EQ(r.actor.opt.step, l.actor.opt.step);
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    EXPECT_EQ(r.critics.online[ku], l.critics.online[ku]);
    EXPECT_EQ(r.critics.target[ku], l.critics.target[ku]);
    EXPECT_EQ(r.critics.opt[ku].second_moment, l.critics.opt[ku].second_moment);
  }
  EXPECT_EQ(r.alpha.log_alpha, l.alpha.log_alpha);
  EXPECT_EQ(r.counters, l.counters);
  Checkpoint again;
  save_learner(again, r);
  EXPECT_EQ(again.encode(), ck.encode());
}

TEST(LearnerPersistence, ContinuesIdentically) {
  const BufferStore demos = oracle_demos(2, 1);
  SacLearner a = make_learner(5, 3, tiny_hypers(), 1);
  Rng rng(1);
  learner_step(a, {&demos, &demos, &demos}, {}, rng);
  Checkpoint ck;
  save_learner(ck, a);
  SacLearner b = load_learner(Checkpoint::decode(ck.encode()));
  Rng r1 = rng, r2 = decode_rng(encode_rng(rng));
  EXPECT_EQ(learner_step(a, {&demos, &demos, &demos}, {}, r1), learner_step(b, {&demos, &demos, &demos}, {}, r2));
}

TEST(Checkpoint, CorruptSectionNameIsRejected) {
  Checkpoint ck;
  ck.put("alpha", std::vector<double>{1.0});
  std::string bytes = ck.encode();
  const auto pos = bytes.find("alpha");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos] = '\xff';
  EXPECT_THROW(Checkpoint::decode(bytes), FormatError);
  bytes[pos] = '\x01';
  EXPECT_THROW(Checkpoint::decode(bytes), FormatError);
}

TEST(Checkpoint, MagicVersionAndMissingSections) {
  Checkpoint ck;
  ck.put("a", std::vector<double>{1.0, 2.0});
  std::string bytes = ck.encode();
  EXPECT_EQ(bytes.substr(0, 4), "SLCK");
  std::string bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(Checkpoint::decode(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(Checkpoint::decode(bad), FormatError);
  EXPECT_THROW(Checkpoint::decode(bytes.substr(0, bytes.size() - 1)), FormatError);
  const Checkpoint r = Checkpoint::decode(bytes);
  EXPECT_THROW(r.get("b"), FormatError);
  EXPECT_THROW(r.get_sized("a", 3), FormatError);
  EXPECT_THROW(ck.put("a", std::vector<double>{}), std::invalid_argument);
}

TEST(Checkpoint, EncodingMatchesByteLayout) {
  Checkpoint ck;
  ck.put("xy", std::vector<double>{1.0});
  const std::string bytes = ck.encode();
  std::string want = "SLCK";
  auto le = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  le(1, 4);
  le(1, 4);
  le(2, 4);
  want += "xy";
  le(1, 8);
  le(0x3ff0000000000000ULL, 8);
  EXPECT_EQ(bytes, want);
}
