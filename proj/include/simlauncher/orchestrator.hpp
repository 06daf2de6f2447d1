// Online hybrid RL loop: method presets, run configuration, input pipeline,
// synchronous and asynchronous execution, metrics and run checkpoints.
#pragma once

#include "simlauncher/pretrain.hpp"
#include "simlauncher/proposal.hpp"

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

namespace simlauncher {

enum class MethodPreset { ours, ours_no_sim_demo, ours_no_real_demo, ours_no_ap, rlpd, ibrl };

inline const char* to_string(MethodPreset m) {
  switch (m) {
    case MethodPreset::ours: return "ours";
    case MethodPreset::ours_no_sim_demo: return "ours_no_sim_demo";
    case MethodPreset::ours_no_real_demo: return "ours_no_real_demo";
    case MethodPreset::ours_no_ap: return "ours_no_ap";
    case MethodPreset::rlpd: return "rlpd";
    case MethodPreset::ibrl: return "ibrl";
  }
  return "?";
}

inline MethodPreset parse_method(std::string_view s) {
  for (auto m : {MethodPreset::ours, MethodPreset::ours_no_sim_demo, MethodPreset::ours_no_real_demo,
                 MethodPreset::ours_no_ap, MethodPreset::rlpd, MethodPreset::ibrl})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

struct PresetTraits {
  bool action_proposal = false;
  TargetKind target = TargetKind::standard;
  bool sim_demos = false;        // D_sim from sim-policy rollouts
  bool real_demos = false;       // D_real from BC rollouts in the real variant
  bool append_success = false;   // successful online episodes grow D_real
  bool baseline_buffer = false;  // single 20-trajectory demo buffer, two-way split

  bool uses_bc() const { return action_proposal || target == TargetKind::proposal; }
};

inline PresetTraits preset_traits(MethodPreset m) {
  PresetTraits t;
  switch (m) {
    case MethodPreset::ours: t = {true, TargetKind::proposal, true, true, true, false}; break;
    case MethodPreset::ours_no_sim_demo: t = {true, TargetKind::proposal, false, true, true, false}; break;
    case MethodPreset::ours_no_real_demo: t = {true, TargetKind::proposal, true, false, false, false}; break;
    case MethodPreset::ours_no_ap: t = {false, TargetKind::standard, true, true, true, false}; break;
    case MethodPreset::rlpd: t = {false, TargetKind::standard, false, false, false, true}; break;
    case MethodPreset::ibrl: t = {true, TargetKind::proposal, false, false, false, true}; break;
  }
  return t;
}

enum class RunMode { sync, async };

inline const char* to_string(RunMode m) { return m == RunMode::sync ? "sync" : "async"; }

inline RunMode parse_run_mode(std::string_view s) {
  if (s == "sync") return RunMode::sync;
  if (s == "async") return RunMode::async;
  throw std::invalid_argument("unknown run mode '" + std::string(s) + "'");
}

/// Where the single demo buffer of the rlpd / ibrl presets comes from.
enum class BaselineSource { real_oracle, sim_policy };

inline const char* to_string(BaselineSource s) { return s == BaselineSource::real_oracle ? "real_oracle" : "sim_policy"; }

inline BaselineSource parse_baseline_source(std::string_view s) {
  if (s == "real_oracle") return BaselineSource::real_oracle;
  if (s == "sim_policy") return BaselineSource::sim_policy;
  throw std::invalid_argument("unknown baseline source '" + std::string(s) + "'");
}

struct GapSettings {
  double bias = 0.02;            // per-dimension magnitude, random sign
  std::int64_t bias_seed = -1;   // -1: use the run seed
  double noise_std = 0.01;
  double action_gain = 0.9;
  int latency_steps = 1;
  double drift_x = 0.0;
  double drift_y = 0.0;

  GapConfig resolve(TaskId task, std::uint64_t run_seed) const {
    const auto s = bias_seed < 0 ? run_seed : static_cast<std::uint64_t>(bias_seed);
    GapConfig g = GapConfig::study_default(task, s, bias);
    g.obs_noise_std = noise_std;
    g.action_gain = action_gain;
    g.latency_steps = latency_steps;
    if (drift_x != 0.0 || drift_y != 0.0) g.drift = {drift_x, drift_y};
    g.validate(task_constants(task).obs_dim);
    return g;
  }
  bool operator==(const GapSettings&) const = default;
};

struct DemoSettings {
  int n_sim = 100;
  DemoMode sim_mode = DemoMode::success_only;
  int n_real = 20;
  int n_bc = 200;        // success-only sim demos used to train the BC policy
  int bc_steps = 5000;   // BC gradient steps; epochs derived from the demo count
  int baseline_n = 20;
  BaselineSource baseline_source = BaselineSource::real_oracle;
  std::int64_t pretrain_budget = 30000;
  bool operator==(const DemoSettings&) const = default;
};

struct RunSettings {
  std::int64_t budget = 30000;
  int eval_trials = 20;
  int window = 20;
  RunMode mode = RunMode::sync;
  bool wall_clock = true;    // false writes wall_ms = 0 so metrics files are reproducible
  int snapshot_interval = 50;  // async: learner steps between parameter snapshots
  int queue_capacity = 64;     // async: bounded transition queue
  bool operator==(const RunSettings&) const = default;
};

struct TrainConfig {
  TaskId task = TaskId::push_place;
  MethodPreset method = MethodPreset::ours;
  std::uint64_t seed = 1;
  GapSettings gap;
  SacHypers sac;
  double beta0 = 50.0;
  std::int64_t beta_doubling_period = 0;  // 0: one tenth of the budget
  double beta_max = 1e6;
  DemoSettings demos;
  RunSettings run;

  BetaSchedule beta_schedule() const {
    BetaSchedule b;
    b.beta0 = beta0;
    b.doubling_period =
        beta_doubling_period > 0 ? beta_doubling_period : std::max<std::int64_t>(1, run.budget / 10);
    b.beta_max = beta_max;
    return b;
  }

  void validate() const {
    sac.validate();
    beta_schedule().validate();
    if (run.budget < 0) throw std::invalid_argument("budget must be >= 0");
    if (run.eval_trials < 1) throw std::invalid_argument("eval_trials must be >= 1");
    if (run.window < 1) throw std::invalid_argument("window must be >= 1");
    if (run.snapshot_interval < 1 || run.queue_capacity < 1)
      throw std::invalid_argument("snapshot_interval and queue_capacity must be >= 1");
    if (demos.n_sim < 1 || demos.n_real < 1 || demos.n_bc < 1 || demos.baseline_n < 1 || demos.bc_steps < 1)
      throw std::invalid_argument("demo counts must be >= 1");
    if (demos.pretrain_budget < 1) throw std::invalid_argument("pretrain_budget must be >= 1");
    gap.resolve(task, seed);
  }
  bool operator==(const TrainConfig&) const = default;
};

/// Sampling fractions (replay, D_sim slot, D_real slot) for a preset, given which demo slots hold data.
inline std::array<double, 3> preset_fractions(MethodPreset m, bool sim_slot, bool real_slot) {
  const PresetTraits t = preset_traits(m);
  if (!t.baseline_buffer) return {0.5, 0.25, 0.25};  // empty slots are redistributed by the sampler
  return {0.5, sim_slot ? 0.5 : 0.0, real_slot ? 0.5 : 0.0};
}

// ---------------------------------------------------------------------------
// Inputs: demo buffers and BC policy produced by the pretraining pipeline

struct RunInputs {
  BufferStore d_sim{kDemoCapacity};
  BufferStore d_real{kDemoCapacity};
  std::optional<BcPolicy> bc;
  double bc_sim_success = std::numeric_limits<double>::quiet_NaN();  // informational
  double pretrain_success = std::numeric_limits<double>::quiet_NaN();
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t pretrain = 1, sim_demos = 2, bc_demos = 3, bc = 4, real_demos = 5, real_env = 6,
                               learner = 7, act = 8, learn = 9, reset = 10, eval = 11, baseline = 12, eval_env = 13;
}

inline int bc_epochs_for(std::size_t transitions, int steps, int batch = 256) {
  const auto per_epoch = std::max<std::size_t>(1, (transitions + static_cast<std::size_t>(batch) - 1) /
                                                      static_cast<std::size_t>(batch));
  return std::max(1, static_cast<int>((static_cast<std::size_t>(steps) + per_epoch - 1) / per_epoch));
}

/// Memoizes the expensive pipeline stages so a study reuses one pretraining per (task, seed).
class InputCache {
 public:
  const StatePolicyResult& state_policy(TaskId task, std::uint64_t seed, std::int64_t budget) {
    const std::string key = std::string(to_string(task)) + "/" + std::to_string(seed) + "/" + std::to_string(budget);
    auto it = policies_.find(key);
    if (it == policies_.end())
      it = policies_
               .emplace(key, std::make_shared<StatePolicyResult>(
                                 train_state_policy(task, budget, derive_seed(seed, seed_stream::pretrain))))
               .first;
    return *it->second;
  }

  const DemoSet& sim_demos(TaskId task, std::uint64_t seed, std::int64_t budget, int n, DemoMode mode,
                           std::uint64_t stream) {
    const std::string key = std::string(to_string(task)) + "/" + std::to_string(seed) + "/" + std::to_string(budget) +
                            "/" + std::to_string(n) + "/" + to_string(mode) + "/" + std::to_string(stream);
    auto it = demos_.find(key);
    if (it == demos_.end()) {
      const auto& sp = state_policy(task, seed, budget);
      it = demos_
               .emplace(key, std::make_shared<DemoSet>(
                                 collect_demos(sp.checkpoints, task, n, mode, derive_seed(seed, stream))))
               .first;
    }
    return *it->second;
  }

  const BcPolicy& sim_bc(TaskId task, std::uint64_t seed, std::int64_t budget, int n_bc, int bc_steps) {
    const std::string key = std::string(to_string(task)) + "/" + std::to_string(seed) + "/" + std::to_string(budget) +
                            "/" + std::to_string(n_bc) + "/" + std::to_string(bc_steps);
    auto it = bcs_.find(key);
    if (it == bcs_.end()) {
      const DemoSet& d = sim_demos(task, seed, budget, n_bc, DemoMode::success_only, seed_stream::bc_demos);
      const auto& c = task_constants(task);
      it = bcs_
               .emplace(key, std::make_shared<BcPolicy>(bc_train(
                                 d.buffer, default_bc_spec(c.obs_dim, c.act_dim),
                                 bc_epochs_for(d.buffer.size(), bc_steps), derive_seed(seed, seed_stream::bc))))
               .first;
    }
    return *it->second;
  }

 private:
  std::map<std::string, std::shared_ptr<StatePolicyResult>> policies_;
  std::map<std::string, std::shared_ptr<DemoSet>> demos_;
  std::map<std::string, std::shared_ptr<BcPolicy>> bcs_;
};

/// Runs the pipeline stages a preset needs: sim pretraining, D_sim, BC distillation and
/// BC rollouts in the real variant, or the baseline's single demo buffer.
inline RunInputs build_inputs(const TrainConfig& cfg, InputCache& cache) {
  cfg.validate();
  const PresetTraits t = preset_traits(cfg.method);
  const auto& c = task_constants(cfg.task);
  const GapConfig gap = cfg.gap.resolve(cfg.task, cfg.seed);
  const auto& d = cfg.demos;
  RunInputs in;
  auto copy_into = [](BufferStore& dst, const BufferStore& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.push(src.at(i));
  };
  if (t.baseline_buffer) {
    if (d.baseline_source == BaselineSource::real_oracle) {
      TwinEnv real = make_env(cfg.task, Variant::real, gap, derive_seed(cfg.seed, seed_stream::baseline));
      const DemoSet ds = collect_oracle_demos(real, d.baseline_n, derive_seed(cfg.seed, seed_stream::baseline));
      copy_into(in.d_real, ds.buffer);
    } else {
      const DemoSet& ds =
          cache.sim_demos(cfg.task, cfg.seed, d.pretrain_budget, d.baseline_n, DemoMode::success_only,
                          seed_stream::sim_demos);
      copy_into(in.d_sim, ds.buffer);
      in.pretrain_success = cache.state_policy(cfg.task, cfg.seed, d.pretrain_budget).final_success;
    }
    if (t.uses_bc()) {
      const BufferStore& src = in.d_real.empty() ? in.d_sim : in.d_real;
      in.bc = bc_train(src, default_bc_spec(c.obs_dim, c.act_dim), bc_epochs_for(src.size(), d.bc_steps),
                       derive_seed(cfg.seed, seed_stream::bc));
    }
    return in;
  }
  in.pretrain_success = cache.state_policy(cfg.task, cfg.seed, d.pretrain_budget).final_success;
  if (t.sim_demos)
    copy_into(in.d_sim,
              cache.sim_demos(cfg.task, cfg.seed, d.pretrain_budget, d.n_sim, d.sim_mode, seed_stream::sim_demos).buffer);
  const BcPolicy& bc = cache.sim_bc(cfg.task, cfg.seed, d.pretrain_budget, d.n_bc, d.bc_steps);
  if (t.uses_bc()) in.bc = bc;
  if (t.real_demos) {
    TwinEnv real = make_env(cfg.task, Variant::real, gap, derive_seed(cfg.seed, seed_stream::real_demos));
    copy_into(in.d_real,
              collect_real_demos(bc, real, d.n_real, derive_seed(cfg.seed, seed_stream::real_demos)).buffer);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  std::int64_t env_step = 0;
  std::int64_t episode = 0;
  int episode_return = 0;
  int length = 0;
  double running_success = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double beta = 0.0;  // +inf in argmax mode; 0 for presets without proposal
  double p_bc = 0.0;  // mean over the episode's proposal calls
  double wall_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "env_step,episode,return,length,running_success,critic_loss,actor_loss,alpha,beta,p_bc,wall_ms";

inline double running_success(const std::vector<bool>& history, int window = 20) {
  if (history.empty()) throw std::invalid_argument("running_success: empty history");
  if (window < 1) throw std::invalid_argument("running_success: window must be >= 1");
  const std::size_t n = std::min(history.size(), static_cast<std::size_t>(window));
  const auto wins = std::count(history.end() - static_cast<std::ptrdiff_t>(n), history.end(), true);
  return static_cast<double>(wins) / static_cast<double>(n);
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.env_step) + "," + std::to_string(r.episode) + "," + std::to_string(r.episode_return) +
           "," + std::to_string(r.length) + "," + format_double(r.running_success) + "," +
           format_double(r.critic_loss) + "," + format_double(r.actor_loss) + "," + format_double(r.alpha) + "," +
           format_double(r.beta) + "," + format_double(r.p_bc) + "," + format_double(r.wall_ms) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run state

/// Invariant counters checked during every run.
struct RunCounters {
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t propose_calls = 0;
  std::int64_t bc_invocations = 0;
  std::int64_t d_real_appends = 0;
  std::int64_t d_real_growth = 0;
  std::int64_t d_real_violations = 0;
  std::int64_t learner_violations = 0;
  std::int64_t batches_checked = 0;
  std::int64_t composition_violations = 0;

  static constexpr std::size_t kFields = 10;
  std::array<std::int64_t, kFields> as_array() const {
    return {env_steps,      episodes,           propose_calls,      bc_invocations,  d_real_appends,
            d_real_growth,  d_real_violations,  learner_violations, batches_checked, composition_violations};
  }
  void from_array(const std::array<std::int64_t, kFields>& a) {
    env_steps = a[0];
    episodes = a[1];
    propose_calls = a[2];
    bc_invocations = a[3];
    d_real_appends = a[4];
    d_real_growth = a[5];
    d_real_violations = a[6];
    learner_violations = a[7];
    batches_checked = a[8];
    composition_violations = a[9];
  }
  bool operator==(const RunCounters&) const = default;
};

struct EpisodeAccumulator {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double p_bc = 0.0;
  std::int64_t learner_calls = 0;
  std::int64_t proposals = 0;
};

struct RunState {
  TrainConfig cfg;
  PresetTraits traits;
  std::array<double, 3> fractions{};
  BetaSchedule beta;
  SacLearner learner;
  TwinEnv env;
  Rng act_rng, learn_rng, reset_rng;
  Vec obs;
  BufferStore replay{kReplayCapacity};
  BufferStore d_sim{kDemoCapacity};
  BufferStore d_real{kDemoCapacity};
  std::optional<BcPolicy> bc;
  Trajectory episode;  // in progress
  std::vector<bool> successes;
  std::vector<MetricsRow> rows;
  RunCounters counters;
  EpisodeAccumulator acc;
  double wall_offset_ms = 0.0;

  RunState(const TrainConfig& c, RunInputs in)
      : cfg(c),
        traits(preset_traits(c.method)),
        beta(c.beta_schedule()),
        env(make_env(c.task, Variant::real, c.gap.resolve(c.task, c.seed), derive_seed(c.seed, seed_stream::real_env))),
        act_rng(derive_seed(c.seed, seed_stream::act)),
        learn_rng(derive_seed(c.seed, seed_stream::learn)),
        reset_rng(derive_seed(c.seed, seed_stream::reset)),
        d_sim(std::move(in.d_sim)),
        d_real(std::move(in.d_real)),
        bc(std::move(in.bc)) {
    cfg.validate();
    if (traits.uses_bc() && !bc) throw std::invalid_argument("run: preset " + std::string(to_string(c.method)) + " needs a BC policy");
    if (traits.sim_demos && d_sim.empty()) throw std::invalid_argument("run: preset needs a nonempty D_sim");
    if (traits.real_demos && d_real.empty()) throw std::invalid_argument("run: preset needs a nonempty D_real");
    if (traits.baseline_buffer && d_sim.empty() == d_real.empty())
      throw std::invalid_argument("run: baseline presets take exactly one demo buffer");
    if (!traits.baseline_buffer && !traits.sim_demos && !d_sim.empty())
      throw std::invalid_argument("run: preset excludes D_sim");
    if (!traits.baseline_buffer && !traits.real_demos && !d_real.empty())
      throw std::invalid_argument("run: preset excludes D_real");
    fractions = preset_fractions(c.method, !d_sim.empty(), !d_real.empty());
    learner = make_learner(env.obs_dim(), env.act_dim(), c.sac, derive_seed(c.seed, seed_stream::learner));
    obs = env.reset(reset_rng);
  }
};

/// What the acting side needs: immutable copies of the actor and the online critics.
struct PolicySnapshot {
  Actor actor;
  CriticEnsemble critics;
};

struct StepAction {
  Vec action;
  bool proposed = false;
  double p_bc = 0.0;
};

inline StepAction choose_action(const RunState& s, const Actor& actor, const CriticEnsemble& critics, const Vec& obs,
                                std::int64_t t, Rng& rng) {
  StepAction out;
  if (s.traits.action_proposal) {
    const ProposalDecision d = propose(obs, actor, *s.bc, critics, beta_at(s.beta, t), rng);
    out.action = d.action;
    out.proposed = true;
    out.p_bc = d.p_bc;
  } else {
    out.action = actor.sample(obs, rng).action.col(0);
  }
  return out;
}

namespace detail {

inline LearnerConfig learner_config(const RunState& s) {
  LearnerConfig lc;
  lc.fractions = s.fractions;
  lc.target = s.traits.target;
  lc.bc = s.traits.target == TargetKind::proposal ? &*s.bc : nullptr;
  return lc;
}

/// One learner_step plus the per-step invariant checks.
inline void learn_once(RunState& s) {
  const LearnerCounters before = s.learner.counters;
  const std::size_t d_real_before = s.d_real.size();
  const LearnerMetrics m = learner_step(s.learner, {&s.replay, &s.d_sim, &s.d_real}, learner_config(s), s.learn_rng);
  if (s.traits.target == TargetKind::proposal) ++s.counters.bc_invocations;
  const auto& a = s.learner.counters;
  const auto g = s.learner.hypers.grad_steps;
  if (a.critic_updates - before.critic_updates != g || a.polyak_updates - before.polyak_updates != g ||
      a.actor_updates - before.actor_updates != 1 || a.alpha_updates - before.alpha_updates != 1)
    ++s.counters.learner_violations;
  if (s.d_real.size() != d_real_before) ++s.counters.d_real_violations;
  const bool all_nonempty = !s.replay.empty() && !s.d_sim.empty() && !s.d_real.empty();
  if (all_nonempty && s.fractions == std::array<double, 3>{0.5, 0.25, 0.25}) {
    const int n = s.learner.hypers.batch_size;
    for (const auto& c : m.batch_counts) {
      ++s.counters.batches_checked;
      if (c != std::array<int, 3>{n / 2, n / 4, n / 4}) ++s.counters.composition_violations;
    }
  }
  s.acc.critic_loss += m.critic_loss;
  s.acc.actor_loss += m.actor_loss;
  ++s.acc.learner_calls;
}

inline void record_step(RunState& s, const Vec& obs, const StepAction& a, const StepResult& r) {
  Transition tr = Transition::make(obs, a.action, r.reward, r.obs, r.terminated, r.truncated, SourceTag::replay);
  s.replay.push(tr);
  s.episode.transitions.push_back(std::move(tr));
  s.episode.episode_return += static_cast<int>(r.reward);
  if (a.proposed) {
    ++s.counters.propose_calls;
    ++s.counters.bc_invocations;
    s.acc.p_bc += a.p_bc;
    ++s.acc.proposals;
  }
  ++s.counters.env_steps;
}

/// Success-gated append to D_real, then one metrics row.
inline void finish_episode(RunState& s, bool success, double wall_ms) {
  s.episode.success = success;
  const std::size_t before = s.d_real.size();
  const bool appended = s.traits.append_success && append_success_trajectory(s.d_real, s.episode);
  const std::size_t expected = appended ? std::min(before + s.episode.transitions.size(), s.d_real.capacity()) : before;
  if (s.d_real.size() != expected || (appended && !success)) ++s.counters.d_real_violations;
  if (appended) {
    ++s.counters.d_real_appends;
    s.counters.d_real_growth += static_cast<std::int64_t>(s.d_real.size() - before);
  }
  s.successes.push_back(success);
  MetricsRow row;
  row.env_step = s.counters.env_steps;
  row.episode = s.counters.episodes;
  row.episode_return = s.episode.episode_return;
  row.length = static_cast<int>(s.episode.transitions.size());
  row.running_success = running_success(s.successes, s.cfg.run.window);
  if (s.acc.learner_calls > 0) {
    row.critic_loss = s.acc.critic_loss / static_cast<double>(s.acc.learner_calls);
    row.actor_loss = s.acc.actor_loss / static_cast<double>(s.acc.learner_calls);
  }
  row.alpha = s.learner.alpha.alpha();
  if (s.traits.action_proposal) {
    const Beta b = beta_at(s.beta, std::max<std::int64_t>(0, s.counters.env_steps - 1));
    row.beta = b.argmax ? std::numeric_limits<double>::infinity() : b.value;
  }
  if (s.acc.proposals > 0) row.p_bc = s.acc.p_bc / static_cast<double>(s.acc.proposals);
  row.wall_ms = wall_ms;
  s.rows.push_back(row);
  ++s.counters.episodes;
  s.episode = Trajectory{};
  s.acc = EpisodeAccumulator{};
}

class WallClock {
 public:
  WallClock(bool enabled, double offset) : enabled_(enabled), offset_(offset), start_(std::chrono::steady_clock::now()) {}
  double now_ms() const {
    if (!enabled_) return 0.0;
    return offset_ + std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  double offset_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Synchronous loop: act, step, store, learn, once per env step, until `until_step` or the budget.
inline void advance_sync(RunState& s, std::int64_t until_step) {
  const std::int64_t stop = std::min(until_step, s.cfg.run.budget);
  detail::WallClock clock(s.cfg.run.wall_clock, s.wall_offset_ms);
  while (s.counters.env_steps < stop) {
    const std::int64_t t = s.counters.env_steps;
    const StepAction a = choose_action(s, s.learner.actor, s.learner.critics, s.obs, t, s.act_rng);
    StepResult r = s.env.step(a.action);
    detail::record_step(s, s.obs, a, r);
    detail::learn_once(s);
    s.obs = r.obs;
    if (r.terminated || r.truncated) {
      detail::finish_episode(s, r.success, clock.now_ms());
      s.obs = s.env.reset(s.reset_rng);
    }
  }
  s.wall_offset_ms = clock.now_ms();
}

/// Acting and learning on two threads joined by a bounded queue. The actor acts on parameter
/// snapshots refreshed every `snapshot_interval` learner steps. Only statistically reproducible.
inline void advance_async(RunState& s, std::int64_t until_step) {
  const std::int64_t stop = std::min(until_step, s.cfg.run.budget);
  if (s.counters.env_steps >= stop) return;
  detail::WallClock clock(s.cfg.run.wall_clock, s.wall_offset_ms);

  struct Message {
    Vec obs;
    StepAction action;
    StepResult result;
  };
  std::mutex mu;
  std::condition_variable cv_space, cv_items;
  std::deque<Message> queue;
  std::shared_ptr<const PolicySnapshot> snapshot =
      std::make_shared<const PolicySnapshot>(PolicySnapshot{s.learner.actor, s.learner.critics});
  std::exception_ptr actor_error;
  bool abort = false;
  const auto capacity = static_cast<std::size_t>(s.cfg.run.queue_capacity);
  const std::int64_t first = s.counters.env_steps;

  // The acting thread owns the env, the observation and the acting/reset streams until joined.
  std::thread acting([&] {
    try {
      for (std::int64_t t = first; t < stop; ++t) {
        std::shared_ptr<const PolicySnapshot> snap;
        {
          std::lock_guard<std::mutex> lk(mu);
          snap = snapshot;
        }
        Message m;
        m.obs = s.obs;
        m.action = choose_action(s, snap->actor, snap->critics, s.obs, t, s.act_rng);
        m.result = s.env.step(m.action.action);
        s.obs = (m.result.terminated || m.result.truncated) ? s.env.reset(s.reset_rng) : m.result.obs;
        std::unique_lock<std::mutex> lk(mu);
        cv_space.wait(lk, [&] { return queue.size() < capacity || abort; });
        if (abort) return;
        queue.push_back(std::move(m));
        cv_items.notify_one();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(mu);
      actor_error = std::current_exception();
      cv_items.notify_one();
    }
  });

  std::exception_ptr learner_error;
  try {
    std::int64_t since_snapshot = 0;
    while (s.counters.env_steps < stop) {
      Message m;
      {
        std::unique_lock<std::mutex> lk(mu);
        cv_items.wait(lk, [&] { return !queue.empty() || actor_error; });
        if (queue.empty()) break;
        m = std::move(queue.front());
        queue.pop_front();
        cv_space.notify_one();
      }
      detail::record_step(s, m.obs, m.action, m.result);
      detail::learn_once(s);
      if (m.result.terminated || m.result.truncated) detail::finish_episode(s, m.result.success, clock.now_ms());
      if (++since_snapshot >= s.cfg.run.snapshot_interval) {
        since_snapshot = 0;
        auto next = std::make_shared<const PolicySnapshot>(PolicySnapshot{s.learner.actor, s.learner.critics});
        std::lock_guard<std::mutex> lk(mu);
        snapshot = std::move(next);
      }
    }
  } catch (...) {
    learner_error = std::current_exception();
  }
  {
    std::lock_guard<std::mutex> lk(mu);
    abort = true;
    cv_space.notify_all();
  }
  acting.join();
  if (learner_error) std::rethrow_exception(learner_error);
  if (actor_error) std::rethrow_exception(actor_error);
  s.wall_offset_ms = clock.now_ms();
}

inline void advance(RunState& s, std::int64_t until_step) {
  if (s.cfg.run.mode == RunMode::sync)
    advance_sync(s, until_step);
  else
    advance_async(s, until_step);
}

// ---------------------------------------------------------------------------
// Run checkpoints

namespace detail {

inline void put_transitions(Checkpoint& ck, const std::string& name, const std::vector<const Transition*>& ts,
                            std::size_t capacity) {
  const std::size_t od = ts.empty() ? 0 : ts.front()->obs.size();
  const std::size_t ad = ts.empty() ? 0 : ts.front()->action.size();
  ck.put(name + ".meta", std::vector<double>{static_cast<double>(capacity), static_cast<double>(ts.size()),
                                             static_cast<double>(od), static_cast<double>(ad)});
  std::vector<double> data;
  data.reserve(ts.size() * (2 * od + ad + 4));
  for (const Transition* t : ts) {
    data.insert(data.end(), t->obs.begin(), t->obs.end());
    data.insert(data.end(), t->action.begin(), t->action.end());
    data.push_back(t->reward);
    data.insert(data.end(), t->next_obs.begin(), t->next_obs.end());
    data.push_back(t->terminated ? 1.0 : 0.0);
    data.push_back(t->truncated ? 1.0 : 0.0);
    data.push_back(static_cast<double>(static_cast<std::uint8_t>(t->source)));
  }
  ck.put(name + ".data", std::move(data));
}

inline std::vector<Transition> get_transitions(const Checkpoint& ck, const std::string& name, std::size_t* capacity) {
  const auto& meta = ck.get_sized(name + ".meta", 4);
  const auto n = static_cast<std::size_t>(meta[1]), od = static_cast<std::size_t>(meta[2]),
             ad = static_cast<std::size_t>(meta[3]);
  if (capacity) *capacity = static_cast<std::size_t>(meta[0]);
  const auto& d = ck.get_sized(name + ".data", n * (2 * od + ad + 4));
  std::vector<Transition> out(n);
  std::size_t p = 0;
  auto take = [&](std::size_t k) {
    std::vector<float> v(k);
    for (auto& x : v) x = static_cast<float>(d[p++]);
    return v;
  };
  for (auto& t : out) {
    t.obs = take(od);
    t.action = take(ad);
    t.reward = static_cast<std::uint8_t>(d[p++]);
    t.next_obs = take(od);
    t.terminated = d[p++] != 0.0;
    t.truncated = d[p++] != 0.0;
    const auto src = static_cast<int>(d[p++]);
    if (src < 0 || src > 2 || t.reward > 1) throw FormatError("checkpoint: malformed transition in " + name);
    t.source = static_cast<SourceTag>(src);
  }
  return out;
}

inline void put_buffer(Checkpoint& ck, const std::string& name, const BufferStore& b) {
  std::vector<const Transition*> ts;
  for (std::size_t i = 0; i < b.size(); ++i) ts.push_back(&b.at(i));
  put_transitions(ck, name, ts, b.capacity());
}

inline BufferStore get_buffer(const Checkpoint& ck, const std::string& name) {
  std::size_t cap = 0;
  auto ts = get_transitions(ck, name, &cap);
  BufferStore b(cap);
  for (auto& t : ts) b.push(std::move(t));
  return b;
}

inline std::vector<double> to_doubles(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

/// Everything needed to continue a synchronous run bit-for-bit.
inline Checkpoint save_run(const RunState& s) {
  Checkpoint ck;
  save_learner(ck, s.learner);
  ck.put("run.rng.act", encode_rng(s.act_rng));
  ck.put("run.rng.learn", encode_rng(s.learn_rng));
  ck.put("run.rng.reset", encode_rng(s.reset_rng));
  ck.put("env.rng.noise", encode_rng(s.env.noise_rng()));
  const EnvState& e = s.env.state();
  std::vector<double> es{e.agent[0], e.agent[1], e.object[0], e.object[1], e.held ? 1.0 : 0.0, e.lift};
  es.insert(es.end(), e.fingers.begin(), e.fingers.end());
  es.push_back(e.step);
  ck.put("env.state", es);
  std::vector<double> pend;
  for (const Vec& a : s.env.pending_actions()) pend.insert(pend.end(), a.data(), a.data() + a.size());
  ck.put("env.pending", pend);
  ck.put("run.obs", detail::to_doubles(s.obs));
  detail::put_buffer(ck, "buffer.replay", s.replay);
  detail::put_buffer(ck, "buffer.d_sim", s.d_sim);
  detail::put_buffer(ck, "buffer.d_real", s.d_real);
  std::vector<const Transition*> ep;
  for (const auto& t : s.episode.transitions) ep.push_back(&t);
  detail::put_transitions(ck, "episode", ep, 1);
  ck.put("episode.return", std::vector<double>{static_cast<double>(s.episode.episode_return)});
  if (s.bc) s.bc->save(ck, "bc");
  std::vector<double> succ;
  for (bool b : s.successes) succ.push_back(b ? 1.0 : 0.0);
  ck.put("run.successes", succ);
  std::vector<double> rows;
  for (const auto& r : s.rows)
    rows.insert(rows.end(), {static_cast<double>(r.env_step), static_cast<double>(r.episode),
                             static_cast<double>(r.episode_return), static_cast<double>(r.length), r.running_success,
                             r.critic_loss, r.actor_loss, r.alpha, r.beta, r.p_bc, r.wall_ms});
  ck.put("run.metrics", rows);
  std::vector<double> cnt;
  for (auto v : s.counters.as_array()) cnt.push_back(static_cast<double>(v));
  ck.put("run.counters", cnt);
  ck.put("run.accumulator",
         std::vector<double>{s.acc.critic_loss, s.acc.actor_loss, s.acc.p_bc, static_cast<double>(s.acc.learner_calls),
                             static_cast<double>(s.acc.proposals), s.wall_offset_ms});
  return ck;
}

/// Rebuilds a run from its configuration and a checkpoint written by save_run.
inline RunState load_run(const TrainConfig& cfg, const Checkpoint& ck) {
  RunInputs in;
  in.d_sim = detail::get_buffer(ck, "buffer.d_sim");
  in.d_real = detail::get_buffer(ck, "buffer.d_real");
  if (ck.has("bc.params")) in.bc = BcPolicy::load(ck, "bc");
  RunState s(cfg, std::move(in));
  s.learner = load_learner(ck);
  if (s.learner.obs_dim != s.env.obs_dim() || s.learner.act_dim != s.env.act_dim() || !(s.learner.hypers == cfg.sac))
    throw FormatError("checkpoint: learner does not match the configuration");
  s.act_rng = decode_rng(ck.get("run.rng.act"));
  s.learn_rng = decode_rng(ck.get("run.rng.learn"));
  s.reset_rng = decode_rng(ck.get("run.rng.reset"));
  const auto& es = ck.get_sized("env.state", 16);
  EnvState e;
  e.agent = {es[0], es[1]};
  e.object = {es[2], es[3]};
  e.held = es[4] != 0.0;
  e.lift = es[5];
  for (std::size_t i = 0; i < 9; ++i) e.fingers[i] = es[6 + i];
  e.step = static_cast<int>(es[15]);
  const auto& pend = ck.get("env.pending");
  const auto ad = static_cast<std::size_t>(s.env.act_dim());
  if (pend.size() % ad != 0) throw FormatError("checkpoint: malformed pending actions");
  std::deque<Vec> pending;
  for (std::size_t i = 0; i < pend.size(); i += ad)
    pending.push_back(Eigen::Map<const Vec>(pend.data() + i, static_cast<Eigen::Index>(ad)));
  s.env.restore(e, std::move(pending), decode_rng(ck.get("env.rng.noise")));
  s.obs = ck.get_vec("run.obs");
  if (s.obs.size() != s.env.obs_dim()) throw FormatError("checkpoint: observation size mismatch");
  s.replay = detail::get_buffer(ck, "buffer.replay");
  s.episode.transitions = detail::get_transitions(ck, "episode", nullptr);
  s.episode.episode_return = static_cast<int>(ck.get_sized("episode.return", 1)[0]);
  for (double v : ck.get("run.successes")) s.successes.push_back(v != 0.0);
  const auto& rows = ck.get("run.metrics");
  if (rows.size() % 11 != 0) throw FormatError("checkpoint: malformed metrics");
  for (std::size_t i = 0; i < rows.size(); i += 11) {
    MetricsRow r;
    r.env_step = static_cast<std::int64_t>(rows[i]);
    r.episode = static_cast<std::int64_t>(rows[i + 1]);
    r.episode_return = static_cast<int>(rows[i + 2]);
    r.length = static_cast<int>(rows[i + 3]);
    r.running_success = rows[i + 4];
    r.critic_loss = rows[i + 5];
    r.actor_loss = rows[i + 6];
    r.alpha = rows[i + 7];
    r.beta = rows[i + 8];
    r.p_bc = rows[i + 9];
    r.wall_ms = rows[i + 10];
    s.rows.push_back(r);
  }
  const auto& cnt = ck.get_sized("run.counters", RunCounters::kFields);
  std::array<std::int64_t, RunCounters::kFields> ca{};
  for (std::size_t i = 0; i < ca.size(); ++i) ca[i] = static_cast<std::int64_t>(cnt[i]);
  s.counters.from_array(ca);
  const auto& acc = ck.get_sized("run.accumulator", 6);
  s.acc = {acc[0], acc[1], acc[2], static_cast<std::int64_t>(acc[3]), static_cast<std::int64_t>(acc[4])};
  s.wall_offset_ms = acc[5];
  return s;
}

// ---------------------------------------------------------------------------

struct RunResult {
  std::vector<MetricsRow> rows;
  RunCounters counters;
  double final_eval_success = 0.0;  // deterministic policy in the real variant
  Checkpoint final_checkpoint;
};

/// Mean-action success of the current actor in a fresh real-variant env.
inline double evaluate_actor(const RunState& s, int trials) {
  TwinEnv env =
      make_env(s.cfg.task, Variant::real, s.cfg.gap.resolve(s.cfg.task, s.cfg.seed), derive_seed(s.cfg.seed, seed_stream::eval_env));
  return evaluate(mean_action_fn(s.learner.actor), env, trials, derive_seed(s.cfg.seed, seed_stream::eval));
}

inline RunResult run_training(const TrainConfig& cfg, RunInputs inputs) {
  RunState s(cfg, std::move(inputs));
  advance(s, cfg.run.budget);
  RunResult res;
  res.final_eval_success = evaluate_actor(s, cfg.run.eval_trials);
  res.final_checkpoint = save_run(s);
  res.rows = std::move(s.rows);
  res.counters = s.counters;
  return res;
}

/// First env step at which running success reaches `level`, or nullopt.
inline std::optional<std::int64_t> first_step_reaching(const std::vector<MetricsRow>& rows, double level) {
  for (const auto& r : rows)
    if (r.running_success >= level) return r.env_step;
  return std::nullopt;
}

/// Running success in effect at env step t (last episode finished at or before t).
inline double running_success_at(const std::vector<MetricsRow>& rows, std::int64_t t) {
  double v = 0.0;
  for (const auto& r : rows) {
    if (r.env_step > t) break;
    v = r.running_success;
  }
  return v;
}

}  // namespace simlauncher
