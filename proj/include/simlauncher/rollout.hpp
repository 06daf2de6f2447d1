// Episode rollouts and success-rate evaluation shared by the pretraining and
// online stages.
#pragma once

#include "simlauncher/buffers.hpp"
#include "simlauncher/twin_envs.hpp"

namespace simlauncher {

/// What a policy is fed: the (possibly gapped) observation or the exact privileged state.
enum class PolicyInput { observation, privileged };

using ActionFn = std::function<Vec(const Vec&)>;

/// Runs one episode to termination or truncation. Transitions always record observe() output.
inline Trajectory run_episode(TwinEnv& env, const ActionFn& policy, Rng& reset_rng, PolicyInput input,
                              SourceTag tag = SourceTag::replay) {
  Trajectory traj;
  Vec obs = env.reset(reset_rng);
  for (;;) {
    const Vec a = policy(input == PolicyInput::privileged ? env.privileged_state() : obs);
    StepResult r = env.step(a);
    traj.transitions.push_back(Transition::make(obs, a.cwiseMax(-1.0).cwiseMin(1.0), r.reward, r.obs, r.terminated,
                                                r.truncated, tag));
    traj.episode_return += static_cast<int>(r.reward);
    obs = std::move(r.obs);
    if (r.terminated || r.truncated) {
      traj.success = r.success;
      break;
    }
  }
  return traj;
}

/// Success fraction over `trials` fresh resets.
inline double evaluate(const ActionFn& policy, TwinEnv& env, int trials, std::uint64_t seed,
                       PolicyInput input = PolicyInput::observation) {
  if (trials < 1) throw std::invalid_argument("evaluate: trials must be >= 1");
  Rng rng(seed);
  int wins = 0;
  for (int i = 0; i < trials; ++i) wins += run_episode(env, policy, rng, input).success ? 1 : 0;
  return static_cast<double>(wins) / trials;
}

inline ActionFn oracle_policy(TaskId task, double gain = 0.6) {
  const TaskConstants* c = &task_constants(task);
  return [c, gain](const Vec& priv) { return scripted_oracle(*c, priv, gain); };
}

}  // namespace simlauncher
