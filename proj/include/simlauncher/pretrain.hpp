// Simulation pretraining: privileged-state SAC, demo collection, behaviour
// cloning and BC rollouts in the gapped variant.
#pragma once

#include "simlauncher/rollout.hpp"
#include "simlauncher/sac_core.hpp"

namespace simlauncher {

enum class DemoMode { success_only, hybrid };

inline const char* to_string(DemoMode m) { return m == DemoMode::success_only ? "success_only" : "hybrid"; }

inline DemoMode parse_demo_mode(std::string_view s) {
  if (s == "success_only") return DemoMode::success_only;
  if (s == "hybrid") return DemoMode::hybrid;
  throw std::invalid_argument("unknown demo mode '" + std::string(s) + "'");
}

/// Dense potential over the privileged state, used only for sim pretraining.
inline Potential task_potential(TaskId task) {
  const TaskConstants* c = &task_constants(task);
  switch (task) {
    case TaskId::push_place:
      return [c](const Vec& s) {
        const double d_ao = std::hypot(s[2] - s[0], s[3] - s[1]);
        const double d_og = std::hypot(s[2] - c->goal_center[0], s[3] - c->goal_center[1]);
        return 0.3 * s[4] - 0.3 * d_ao - 0.3 * d_og;
      };
    case TaskId::peg_insert:
      return [c](const Vec& s) {
        const double d_ao = std::hypot(s[2] - s[0], s[3] - s[1]);
        const double d_os = 2.0 * std::abs(s[2] - c->slot_x) + std::abs(s[3] - (c->slot_y + 2.0 * c->insert_depth));
        return 0.3 * s[4] - 0.3 * d_ao - 0.3 * d_os;
      };
    case TaskId::highdim_grasp:
      return [c](const Vec& s) {
        const double d_ao = std::hypot(s[2] - s[0], s[3] - s[1]);
        double f = 0.0;
        for (int i = 0; i < 9; ++i) f += std::abs(s[6 + i] - c->closure_pattern[static_cast<std::size_t>(i)]);
        return -0.3 * d_ao - 0.3 * f / 9.0 + 0.3 * s[5] + 0.3 * s[5] * s[4];
      };
  }
  throw std::invalid_argument("unknown task");
}

struct PolicyCheckpoint {
  std::int64_t env_step = 0;
  Actor actor;
};

struct StatePolicyOptions {
  SacHypers hypers = [] {
    SacHypers h;
    h.ensemble_size = 2;
    h.subsample = 2;
    h.grad_steps = 1;
    h.batch_size = 128;
    h.actor_hidden = {64, 64};
    h.critic_hidden = {64, 64};
    return h;
  }();
  int warmup_steps = 1000;  // uniform random actions before the first update
  int eval_episodes = 50;
  double success_threshold = 0.9;
  bool shaping = true;
  int checkpoints = 10;
};

struct StatePolicyResult {
  SacLearner learner;
  std::vector<PolicyCheckpoint> checkpoints;
  double final_success = 0.0;
  bool failed = false;
};

inline ActionFn mean_action_fn(const Actor& actor) {
  return [&actor](const Vec& x) -> Vec { return actor.mean_action(x).col(0); };
}

inline ActionFn sampled_action_fn(const Actor& actor, Rng& rng) {
  return [&actor, &rng](const Vec& x) -> Vec { return actor.sample(x, rng).action.col(0); };
}

/// SAC on privileged states in the sim variant, standard target, no demo buffers.
/// Checkpoints land at env steps floor(k * budget / 10), k = 1..10.
inline StatePolicyResult train_state_policy(TaskId task, std::int64_t budget_env_steps, std::uint64_t seed,
                                            const StatePolicyOptions& opt = {}) {
  if (budget_env_steps < 1) throw std::invalid_argument("train_state_policy: budget must be >= 1");
  TwinEnv env = make_env(task, Variant::sim, GapConfig::identity(), seed);
  StatePolicyResult res;
  res.learner = make_learner(env.obs_dim(), env.act_dim(), opt.hypers, seed);
  BufferStore replay(kReplayCapacity), none_a(1), none_b(1);
  const Potential potential = task_potential(task);
  LearnerConfig lc;
  lc.fractions = {1.0, 0.0, 0.0};
  lc.target = TargetKind::standard;
  lc.target_options.shaping = opt.shaping ? &potential : nullptr;

  Rng rng(seed * 0x2545F4914F6CDD1DULL + 17);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::size_t next_ck = 1;
  auto ck_step = [&](std::size_t k) {
    return static_cast<std::int64_t>(k) * budget_env_steps / static_cast<std::int64_t>(opt.checkpoints);
  };
  env.reset(rng);
  Vec s = env.privileged_state();
  for (std::int64_t t = 0; t < budget_env_steps; ++t) {
    Vec a(env.act_dim());
    if (t < opt.warmup_steps) {
      for (auto& v : a) v = uni(rng);
    } else {
      a = res.learner.actor.sample(s, rng).action.col(0);
    }
    StepResult r = env.step(a);
    Vec s2 = env.privileged_state();
    replay.push(Transition::make(s, a, r.reward, s2, r.terminated, r.truncated, SourceTag::replay));
    if (t + 1 >= opt.warmup_steps) learner_step(res.learner, {&replay, &none_a, &none_b}, lc, rng);
    if (r.terminated || r.truncated) {
      env.reset(rng);
      s = env.privileged_state();
    } else {
      s = std::move(s2);
    }
    while (next_ck <= static_cast<std::size_t>(opt.checkpoints) && t + 1 == ck_step(next_ck)) {
      res.checkpoints.push_back({t + 1, res.learner.actor});
      ++next_ck;
    }
  }
  // Budgets smaller than the checkpoint count produce repeated early steps.
  while (res.checkpoints.size() < static_cast<std::size_t>(opt.checkpoints))
    res.checkpoints.push_back({ck_step(res.checkpoints.size() + 1), res.learner.actor});

  TwinEnv eval_env = make_env(task, Variant::sim, GapConfig::identity(), seed + 99);
  res.final_success =
      evaluate(mean_action_fn(res.learner.actor), eval_env, opt.eval_episodes, seed + 7, PolicyInput::privileged);
  res.failed = res.final_success < opt.success_threshold;
  return res;
}

inline void save_policy_checkpoints(Checkpoint& ck, const std::vector<PolicyCheckpoint>& cks) {
  ck.put("policy.count", std::vector<double>{static_cast<double>(cks.size())});
  for (std::size_t k = 0; k < cks.size(); ++k) {
    const std::string p = "policy." + std::to_string(k);
    put_spec(ck, p + ".spec", cks[k].actor.spec);
    ck.put(p + ".params", cks[k].actor.params);
    ck.put(p + ".step", std::vector<double>{static_cast<double>(cks[k].env_step)});
  }
}

/// Actors come back without optimizer state; they are only rolled out.
inline std::vector<PolicyCheckpoint> load_policy_checkpoints(const Checkpoint& ck) {
  const auto n = static_cast<std::size_t>(ck.get_sized("policy.count", 1)[0]);
  std::vector<PolicyCheckpoint> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::string p = "policy." + std::to_string(k);
    out[k].actor.spec = get_spec(ck, p + ".spec");
    const auto& v = ck.get_sized(p + ".params", out[k].actor.spec.param_count());
    out[k].actor.params = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    out[k].env_step = static_cast<std::int64_t>(ck.get_sized(p + ".step", 1)[0]);
  }
  return out;
}

struct DemoSet {
  BufferStore buffer{kDemoCapacity};
  std::vector<Trajectory> trajectories;
  int attempts = 0;
  std::vector<int> per_checkpoint;  // hybrid only
};

struct DemoCollectionError : std::runtime_error {
  int achieved;
  int attempts;
  DemoCollectionError(const std::string& what, int achieved_, int attempts_)
      : std::runtime_error(what), achieved(achieved_), attempts(attempts_) {}
};

inline constexpr int kSuccessOnlyAttemptCap = 1000;

/// success_only: roll the final policy (mean action) and keep successes; hybrid: split the
/// trajectories evenly over the checkpoints, sample actions stochastically, keep everything.
inline DemoSet collect_demos(const std::vector<PolicyCheckpoint>& checkpoints, TaskId task, int n_traj, DemoMode mode,
                             std::uint64_t seed) {
  if (n_traj < 1) throw std::invalid_argument("collect_demos: n_traj must be >= 1");
  if (checkpoints.empty()) throw std::invalid_argument("collect_demos: no policy checkpoints");
  TwinEnv env = make_env(task, Variant::sim, GapConfig::identity(), seed);
  Rng rng(seed ^ 0xd1b54a32d192ed03ULL);
  DemoSet out;
  auto keep = [&](Trajectory&& t) {
    for (const auto& tr : t.transitions) out.buffer.push(tr);
    out.trajectories.push_back(std::move(t));
  };
  if (mode == DemoMode::success_only) {
    const Actor& actor = checkpoints.back().actor;
    const ActionFn pol = mean_action_fn(actor);
    int got = 0;
    while (got < n_traj) {
      if (out.attempts >= std::max(kSuccessOnlyAttemptCap, n_traj)) {
        throw DemoCollectionError("collect_demos: success rate too low (" + std::to_string(got) + " successes in " +
                                      std::to_string(out.attempts) + " attempts)",
                                  got, out.attempts);
      }
      ++out.attempts;
      Trajectory t = run_episode(env, pol, rng, PolicyInput::privileged, SourceTag::sim_demo);
      if (t.success) {
        keep(std::move(t));
        ++got;
      }
    }
    if (static_cast<double>(got) / out.attempts < 0.05)
      throw DemoCollectionError("collect_demos: success rate below 5%", got, out.attempts);
    return out;
  }
  const auto nck = static_cast<int>(checkpoints.size());
  for (int k = 0; k < nck; ++k) {
    const int share = n_traj / nck + (k < n_traj % nck ? 1 : 0);
    out.per_checkpoint.push_back(share);
    const ActionFn pol = sampled_action_fn(checkpoints[static_cast<std::size_t>(k)].actor, rng);
    for (int i = 0; i < share; ++i) {
      ++out.attempts;
      keep(run_episode(env, pol, rng, PolicyInput::privileged, SourceTag::sim_demo));
    }
  }
  return out;
}

struct BcOptions {
  int batch_size = 256;
  double learning_rate = 1e-3;
};

inline MlpSpec default_bc_spec(int obs_dim, int act_dim) {
  return {static_cast<std::size_t>(obs_dim), {128, 128}, static_cast<std::size_t>(act_dim), Activation::relu};
}

/// Mean-squared error between tanh(mlp(obs)) and demo actions, Adam, shuffled minibatches.
inline BcPolicy bc_train(const BufferStore& demos, const MlpSpec& spec, int epochs, std::uint64_t seed,
                         const BcOptions& opt = {}) {
  if (demos.empty()) throw std::invalid_argument("bc_train: empty demo buffer");
  if (spec.input_dim != demos.obs_dim() || spec.output_dim != demos.act_dim())
    throw std::invalid_argument("bc_train: spec does not match demo dimensions");
  BcPolicy pol{spec, init_mlp(spec, seed), 0.0};
  AdamState adam = AdamState::for_size(pol.params.size(), opt.learning_rate);
  Rng rng(seed + 0x632be59bd9b4e019ULL);
  std::vector<const Transition*> all;
  for (std::size_t i = 0; i < demos.size(); ++i) all.push_back(&demos.at(i));
  const Batch full = detail::gather(all);
  const auto n = static_cast<Eigen::Index>(all.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += opt.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(opt.batch_size, n - start);
      Mat x(full.obs.rows(), m), y(full.action.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) {
        x.col(j) = full.obs.col(order[static_cast<std::size_t>(start + j)]);
        y.col(j) = full.action.col(order[static_cast<std::size_t>(start + j)]);
      }
      MlpTape tape;
      const Mat out = forward_batch(pol.params, spec, x, &tape);
      const Mat pred = out.array().tanh().matrix();
      const Mat diff = pred - y;
      // d/d(out) of mean over samples of sum over dims of diff^2.
      const Mat up = ((2.0 / static_cast<double>(m)) * diff.array() * (1.0 - pred.array().square())).matrix();
      adam_step(adam, pol.params, backward_batch(pol.params, spec, tape, up));
    }
  }
  pol.final_loss = (pol.act_batch(full.obs) - full.action).colwise().squaredNorm().mean();
  return pol;
}

inline ActionFn bc_action_fn(const BcPolicy& bc) {
  return [&bc](const Vec& obs) -> Vec { return bc.act(obs); };
}

/// Rolls the BC mean action in the given (real) variant and keeps successes, tagged real_demo.
inline DemoSet collect_real_demos(const BcPolicy& bc, TwinEnv& real_env, int n_success, std::uint64_t seed) {
  if (n_success < 1) throw std::invalid_argument("collect_real_demos: n_success must be >= 1");
  Rng rng(seed ^ 0x9fb21c651e98df25ULL);
  DemoSet out;
  const ActionFn pol = bc_action_fn(bc);
  int got = 0;
  const int cap = 100 * n_success;
  while (got < n_success) {
    if (out.attempts >= cap)
      throw DemoCollectionError("collect_real_demos: attempt cap exceeded with " + std::to_string(got) + " of " +
                                    std::to_string(n_success) + " successes",
                                got, out.attempts);
    ++out.attempts;
    Trajectory t = run_episode(real_env, pol, rng, PolicyInput::observation, SourceTag::real_demo);
    if (t.success) {
      for (const auto& tr : t.transitions) out.buffer.push(tr);
      out.trajectories.push_back(std::move(t));
      ++got;
    }
  }
  return out;
}

/// Human-demonstration analog: the scripted oracle acting on privileged state in the given
/// variant, successes only, tagged real_demo.
inline DemoSet collect_oracle_demos(TwinEnv& env, int n_success, std::uint64_t seed) {
  Rng rng(seed ^ 0x94d049bb133111ebULL);
  DemoSet out;
  const ActionFn pol = oracle_policy(env.task());
  int got = 0;
  while (got < n_success) {
    if (out.attempts >= 100 * n_success)
      throw DemoCollectionError("collect_oracle_demos: attempt cap exceeded", got, out.attempts);
    ++out.attempts;
    Trajectory t = run_episode(env, pol, rng, PolicyInput::privileged, SourceTag::real_demo);
    if (t.success) {
      for (const auto& tr : t.transitions) out.buffer.push(tr);
      out.trajectories.push_back(std::move(t));
      ++got;
    }
  }
  return out;
}

/// Distinct cells of a 20x20 grid over [-1,1]^2 visited by the object, recovered from the
/// noiseless observation through the task feature map.
inline int object_coverage_cells(const BufferStore& demos, TaskId task, int grid = 20) {
  const auto& c = task_constants(task);
  std::vector<char> seen(static_cast<std::size_t>(grid * grid), 0);
  auto mark = [&](const std::vector<float>& o) {
    const double ox = o[2] / c.feature_map[2];
    const double oy = o[3] / c.feature_map[3];
    const int ix = std::clamp(static_cast<int>(std::floor((ox + 1.0) / 2.0 * grid)), 0, grid - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((oy + 1.0) / 2.0 * grid)), 0, grid - 1);
    seen[static_cast<std::size_t>(iy * grid + ix)] = 1;
  };
  for (std::size_t i = 0; i < demos.size(); ++i) {
    mark(demos.at(i).obs);
    mark(demos.at(i).next_obs);
  }
  return static_cast<int>(std::count(seen.begin(), seen.end(), 1));
}

}  // namespace simlauncher
