#include "simlauncher/study.hpp"

#include <gtest/gtest.h>

using namespace simlauncher;

namespace {

TrainConfig small_config(MethodPreset m, std::int64_t budget = 300) {
  TrainConfig c;
  c.method = m;
  c.seed = 3;
  c.sac.ensemble_size = 2;
  c.sac.subsample = 2;
  c.sac.grad_steps = 1;
  c.sac.batch_size = 32;
  c.sac.actor_hidden = {16, 16};
  c.sac.critic_hidden = {16, 16};
  c.run.budget = budget;
  c.run.eval_trials = 2;
  c.run.wall_clock = false;
  return c;
}

BufferStore retag(const BufferStore& b, SourceTag tag) {
  BufferStore out(kDemoCapacity);
  for (std::size_t i = 0; i < b.size(); ++i) {
    Transition t = b.at(i);
    t.source = tag;
    out.push(t);
  }
  return out;
}

// Oracle demos stand in for the pretraining pipeline so runs stay fast.
RunInputs small_inputs(MethodPreset m) {
  const PresetTraits t = preset_traits(m);
  const auto& c = task_constants(TaskId::push_place);
  RunInputs in;
  TwinEnv sim = make_env(TaskId::push_place, Variant::sim, {}, 1);
  TwinEnv real = make_env(TaskId::push_place, Variant::real, GapConfig::study_default(TaskId::push_place, 3), 2);
  const DemoSet ds = collect_oracle_demos(sim, 5, 4);
  const DemoSet dr = collect_oracle_demos(real, 5, 5);
  if (t.baseline_buffer) {
    in.d_real = retag(dr.buffer, SourceTag::real_demo);
  } else {
    if (t.sim_demos) in.d_sim = retag(ds.buffer, SourceTag::sim_demo);
    if (t.real_demos) in.d_real = retag(dr.buffer, SourceTag::real_demo);
  }
  if (t.uses_bc()) in.bc = bc_train(ds.buffer, default_bc_spec(c.obs_dim, c.act_dim), 20, 6);
  return in;
}

}  // namespace

TEST(RunningSuccess, WindowedMean) {
  std::vector<bool> h(15, true);
  for (int i = 0; i < 5; ++i) h.push_back(false);
  h.insert(h.begin(), 30, false);
  EXPECT_DOUBLE_EQ(running_success(h, 20), 0.75);
  EXPECT_DOUBLE_EQ(running_success({true, true, true}, 20), 1.0);
  EXPECT_DOUBLE_EQ(running_success(std::vector<bool>(25, false), 20), 0.0);
  EXPECT_THROW(running_success({}, 20), std::invalid_argument);
  EXPECT_DOUBLE_EQ(running_success({true, false}, 1), 0.0);
}

TEST(DeriveSeed, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 1; s <= 13; ++s) seen.insert(derive_seed(7, s));
  EXPECT_EQ(seen.size(), 13u);
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(8, 3));
}

TEST(Evaluate, OracleAlwaysSucceeds) {
  TwinEnv env = make_env(TaskId::push_place, Variant::sim, {}, 1);
  EXPECT_EQ(evaluate(oracle_policy(TaskId::push_place), env, 20, 2, PolicyInput::privileged), 1.0);
}

TEST(Evaluate, RandomPolicyRarelySucceeds) {
  TwinEnv env = make_env(TaskId::push_place, Variant::sim, {}, 1);
  auto rng = std::make_shared<Rng>(9);
  const ActionFn random = [rng](const Vec&) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec a(3);
    for (int i = 0; i < 3; ++i) a[i] = u(*rng);
    return a;
  };
  EXPECT_LE(evaluate(random, env, 50, 3), 0.1);
}

TEST(Evaluate, SingleTrialIsBinary) {
  TwinEnv env = make_env(TaskId::peg_insert, Variant::sim, {}, 1);
  const double v = evaluate(oracle_policy(TaskId::peg_insert), env, 1, 3, PolicyInput::privileged);
  EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_THROW(evaluate(oracle_policy(TaskId::peg_insert), env, 0, 3), std::invalid_argument);
}

TEST(Presets, ParseRoundTrip) {
  for (auto m : {MethodPreset::ours, MethodPreset::ours_no_sim_demo, MethodPreset::ours_no_real_demo,
                 MethodPreset::ours_no_ap, MethodPreset::rlpd, MethodPreset::ibrl})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("sac"), std::invalid_argument);
}

TEST(Presets, Fractions) {
  using F = std::array<double, 3>;
  EXPECT_EQ(preset_fractions(MethodPreset::ours, true, true), (F{0.5, 0.25, 0.25}));
  EXPECT_EQ(preset_fractions(MethodPreset::ours_no_real_demo, true, false), (F{0.5, 0.25, 0.25}));
  EXPECT_EQ(preset_fractions(MethodPreset::rlpd, false, true), (F{0.5, 0.0, 0.5}));
  EXPECT_EQ(preset_fractions(MethodPreset::ibrl, true, false), (F{0.5, 0.5, 0.0}));
}

TEST(Presets, Traits) {
  EXPECT_TRUE(preset_traits(MethodPreset::ours).uses_bc());
  EXPECT_FALSE(preset_traits(MethodPreset::rlpd).uses_bc());
  EXPECT_FALSE(preset_traits(MethodPreset::ours_no_ap).uses_bc());
  EXPECT_FALSE(preset_traits(MethodPreset::ours_no_real_demo).append_success);
  EXPECT_TRUE(preset_traits(MethodPreset::ours_no_sim_demo).append_success);
}

TEST(Presets, InputsMustMatchPreset) {
  const TrainConfig c = small_config(MethodPreset::ours);
  RunInputs in = small_inputs(MethodPreset::ours);
  in.bc.reset();
  EXPECT_THROW(RunState(c, in), std::invalid_argument);
  RunInputs extra = small_inputs(MethodPreset::ours_no_sim_demo);
  extra.d_sim = small_inputs(MethodPreset::ours).d_sim;
  EXPECT_THROW(RunState(small_config(MethodPreset::ours_no_sim_demo), extra), std::invalid_argument);
}

TEST(StudyCurves, Composition) {
  const TrainConfig base = small_config(MethodPreset::ours);
  const auto abl = study_curves(StudyKind::ablations, base);
  ASSERT_EQ(abl.size(), 4u);
  EXPECT_EQ(abl[0].name, "ours");
  EXPECT_EQ(abl[3].config.method, MethodPreset::ours_no_ap);
  const auto boot = study_curves(StudyKind::sim_demo_bootstrap, base);
  ASSERT_EQ(boot.size(), 3u);
  EXPECT_EQ(boot[0].name, "rlpd_sim100");
  EXPECT_EQ(boot[0].config.demos.baseline_n, 100);
  EXPECT_EQ(boot[0].config.demos.baseline_source, BaselineSource::sim_policy);
  EXPECT_EQ(boot[2].name, "rlpd_real20");
  EXPECT_EQ(boot[2].config.demos.baseline_source, BaselineSource::real_oracle);
  EXPECT_EQ(study_curves(StudyKind::baselines, base).size(), 3u);
  EXPECT_EQ(study_curves(StudyKind::hybrid_vs_success, base)[1].config.demos.sim_mode, DemoMode::hybrid);
}

TEST(BetaFromConfig, DefaultsToTenthOfBudget) {
  TrainConfig c;
  c.run.budget = 30000;
  EXPECT_EQ(c.beta_schedule().doubling_period, 3000);
  EXPECT_EQ(c.beta_schedule().beta0, 50.0);
}

TEST(RunTraining, RlpdNeverInvokesBcOrProposal) {
  const RunResult r = run_training(small_config(MethodPreset::rlpd), small_inputs(MethodPreset::rlpd));
  EXPECT_EQ(r.counters.bc_invocations, 0);
  EXPECT_EQ(r.counters.propose_calls, 0);
  EXPECT_EQ(r.counters.env_steps, 300);
  EXPECT_EQ(r.counters.d_real_appends, 0);
  for (const auto& row : r.rows) EXPECT_EQ(row.beta, 0.0);
}

TEST(RunTraining, NoApSkipsProposal) {
  const RunResult r = run_training(small_config(MethodPreset::ours_no_ap), small_inputs(MethodPreset::ours_no_ap));
  EXPECT_EQ(r.counters.propose_calls, 0);
  EXPECT_EQ(r.counters.bc_invocations, 0);
}

TEST(RunTraining, OursCountersHoldInvariants) {
  const RunResult r = run_training(small_config(MethodPreset::ours), small_inputs(MethodPreset::ours));
  const auto& k = r.counters;
  EXPECT_EQ(k.env_steps, 300);
  EXPECT_EQ(k.propose_calls, 300);
  EXPECT_EQ(k.bc_invocations, 600);  // one per proposal plus one per learner step
  EXPECT_EQ(k.learner_violations, 0);
  EXPECT_EQ(k.d_real_violations, 0);
  EXPECT_EQ(k.composition_violations, 0);
  EXPECT_EQ(k.batches_checked, 600);  // one critic batch and one actor batch per learner step
  EXPECT_EQ(static_cast<std::int64_t>(r.rows.size()), k.episodes);
  std::int64_t p = 0;
  for (const auto& row : r.rows) {
    EXPECT_GT(row.env_step, p);
    p = row.env_step;
    EXPECT_DOUBLE_EQ(row.beta, 50.0 * std::exp2((row.env_step - 1) / 30.0));
  }
}

TEST(RunTraining, MetricsAreDeterministicInSyncMode) {
  const TrainConfig c = small_config(MethodPreset::ours);
  const RunResult a = run_training(c, small_inputs(MethodPreset::ours));
  const RunResult b = run_training(c, small_inputs(MethodPreset::ours));
  EXPECT_EQ(metrics_csv(a.rows), metrics_csv(b.rows));
  EXPECT_EQ(a.final_checkpoint.encode(), b.final_checkpoint.encode());
}

TEST(RunTraining, MetricsHeader) {
  EXPECT_EQ(metrics_csv({}), "env_step,episode,return,length,running_success,critic_loss,actor_loss,alpha,beta,p_bc,wall_ms\n");
}

TEST(RunCheckpoint, SaveLoadIsBitwise) {
  const TrainConfig c = small_config(MethodPreset::ours);
  RunState s(c, small_inputs(MethodPreset::ours));
  advance(s, 137);
  const std::string bytes = save_run(s).encode();
  const RunState t = load_run(c, Checkpoint::decode(bytes));
  EXPECT_EQ(save_run(t).encode(), bytes);
}

TEST(RunCheckpoint, ResumeMatchesUninterrupted) {
  const TrainConfig c = small_config(MethodPreset::ours, 400);
  RunState full(c, small_inputs(MethodPreset::ours));
  advance(full, 400);
  RunState first(c, small_inputs(MethodPreset::ours));
  advance(first, 250);
  RunState resumed = load_run(c, Checkpoint::decode(save_run(first).encode()));
  advance(resumed, 400);
  EXPECT_EQ(metrics_csv(resumed.rows), metrics_csv(full.rows));
  EXPECT_EQ(save_run(resumed).encode(), save_run(full).encode());
}

TEST(RunTraining, AsyncCompletesBudget) {
  TrainConfig c = small_config(MethodPreset::ours);
  c.run.mode = RunMode::async;
  c.run.snapshot_interval = 10;
  c.run.queue_capacity = 8;
  const RunResult r = run_training(c, small_inputs(MethodPreset::ours));
  EXPECT_EQ(r.counters.env_steps, 300);
  EXPECT_EQ(r.counters.propose_calls, 300);
  EXPECT_EQ(r.counters.learner_violations, 0);
  EXPECT_EQ(r.counters.d_real_violations, 0);
}

TEST(FirstStepReaching, FindsFirstRow) {
  std::vector<MetricsRow> rows(3);
  rows[0].env_step = 10;
  rows[0].running_success = 0.5;
  rows[1].env_step = 20;
  rows[1].running_success = 0.95;
  rows[2].env_step = 30;
  rows[2].running_success = 0.8;
  EXPECT_EQ(first_step_reaching(rows, 0.9), 20);
  EXPECT_FALSE(first_step_reaching(rows, 0.99).has_value());
  EXPECT_EQ(running_success_at(rows, 25), 0.95);
  EXPECT_EQ(running_success_at(rows, 5), 0.0);
}
