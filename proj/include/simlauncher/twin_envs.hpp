// Sparse-reward toy manipulation tasks, each available as a nominal "sim"
// variant and a gapped "real" variant.
#pragma once

#include "simlauncher/approximator.hpp"

#include <array>
#include <deque>
#include <string>
#include <string_view>

namespace simlauncher {

enum class TaskId { push_place, peg_insert, highdim_grasp };
enum class Variant { sim, real };

inline const char* to_string(TaskId t) {
  switch (t) {
    case TaskId::push_place: return "push_place";
    case TaskId::peg_insert: return "peg_insert";
    case TaskId::highdim_grasp: return "highdim_grasp";
  }
  return "?";
}

inline TaskId parse_task(std::string_view s) {
  if (s == "push_place") return TaskId::push_place;
  if (s == "peg_insert") return TaskId::peg_insert;
  if (s == "highdim_grasp") return TaskId::highdim_grasp;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

inline const char* to_string(Variant v) { return v == Variant::sim ? "sim" : "real"; }

/// Read-only task constants.
struct TaskConstants {
  TaskId task;
  int obs_dim;
  int act_dim;
  int horizon = 100;
  double max_step = 0.08;
  double grab_radius = 0.05;
  std::array<double, 2> agent_start;
  std::array<double, 2> object_center;
  double object_range;  // half-width per axis of the uniform object placement
  // push_place
  std::array<double, 2> goal_center{0.0, 0.0};
  double goal_radius = 0.12;
  // peg_insert
  double slot_x = 0.0;
  double slot_y = 0.0;
  double slot_half_width = 0.03;
  double insert_depth = 0.05;
  // highdim_grasp
  std::array<double, 9> closure_pattern{};
  double closure_band = 0.15;
  int closure_required = 6;
  double lift_required = 0.25;
  double grasp_max_lift = 0.05;
  std::vector<double> feature_map;
};

inline const TaskConstants& task_constants(TaskId task) {
  static const TaskConstants push = [] {
    TaskConstants c{};
    c.task = TaskId::push_place;
    c.obs_dim = 5;
    c.act_dim = 3;
    c.agent_start = {0.0, -0.6};
    c.object_center = {-0.4, 0.0};
    c.object_range = 0.25;
    c.goal_center = {0.5, 0.45};
    c.feature_map = {1.0, 1.0, 0.5, 0.5, 0.5};
    return c;
  }();
  static const TaskConstants peg = [] {
    TaskConstants c{};
    c.task = TaskId::peg_insert;
    c.obs_dim = 5;
    c.act_dim = 3;
    c.agent_start = {0.0, -0.6};
    c.object_center = {-0.3, -0.1};
    c.object_range = 0.20;
    c.slot_x = 0.45;
    c.slot_y = 0.35;
    c.feature_map = {1.0, 1.0, 0.5, 0.5, 0.5};
    return c;
  }();
  static const TaskConstants grasp = [] {
    TaskConstants c{};
    c.task = TaskId::highdim_grasp;
    c.obs_dim = 15;
    c.act_dim = 12;
    c.agent_start = {0.0, -0.35};
    c.object_center = {0.0, 0.0};
    c.object_range = 0.10;
    c.closure_pattern = {0.6, -0.4, 0.5, 0.7, -0.6, 0.3, 0.55, -0.5, 0.4};
    c.feature_map = {1.0, 1.0, 0.5, 0.5, 1.0, 0.5, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7};
    return c;
  }();
  switch (task) {
    case TaskId::push_place: return push;
    case TaskId::peg_insert: return peg;
    case TaskId::highdim_grasp: return grasp;
  }
  throw std::invalid_argument("unknown task");
}

/// Perturbation applied by the real variant. Empty bias/drift vectors mean zero.
struct GapConfig {
  std::vector<double> obs_bias;  // additive, one entry per observation dim
  double obs_noise_std = 0.0;
  double action_gain = 1.0;
  std::vector<double> drift;  // constant per-step agent displacement (x, y)
  int latency_steps = 0;

  void validate(int obs_dim) const {
    if (!(obs_noise_std >= 0.0) || !std::isfinite(obs_noise_std))
      throw std::invalid_argument("gap: obs_noise_std must be >= 0");
    if (!(action_gain > 0.0) || !std::isfinite(action_gain))
      throw std::invalid_argument("gap: action_gain must be > 0");
    if (latency_steps < 0 || latency_steps > 3) throw std::invalid_argument("gap: latency_steps must be in [0,3]");
    if (!obs_bias.empty() && static_cast<int>(obs_bias.size()) != obs_dim)
      throw std::invalid_argument("gap: obs_bias length must equal obs_dim");
    if (!drift.empty() && drift.size() != 2) throw std::invalid_argument("gap: drift must have 2 entries");
    for (double v : obs_bias)
      if (!std::isfinite(v)) throw std::invalid_argument("gap: non-finite obs_bias");
    for (double v : drift)
      if (!std::isfinite(v)) throw std::invalid_argument("gap: non-finite drift");
  }

  static GapConfig identity() { return {}; }

  /// Study default: bias of magnitude `bias_magnitude` with a random sign per dimension.
  static GapConfig study_default(TaskId task, std::uint64_t seed, double bias_magnitude = 0.02) {
    GapConfig g;
    Rng rng(seed ^ 0x5bd1e995ULL);
    std::bernoulli_distribution coin(0.5);
    g.obs_bias.resize(static_cast<std::size_t>(task_constants(task).obs_dim));
    for (auto& b : g.obs_bias) b = coin(rng) ? bias_magnitude : -bias_magnitude;
    g.obs_noise_std = 0.01;
    g.action_gain = 0.9;
    g.latency_steps = 1;
    return g;
  }

  bool operator==(const GapConfig&) const = default;
};

struct EnvState {
  std::array<double, 2> agent{};
  std::array<double, 2> object{};
  bool held = false;
  double lift = 0.0;               // highdim_grasp only
  std::array<double, 9> fingers{};  // highdim_grasp only
  int step = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  Vec obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool success = false;
};

class TwinEnv {
 public:
  TwinEnv(TaskId task, Variant variant, GapConfig gap, std::uint64_t seed)
      : consts_(&task_constants(task)), variant_(variant), gap_(std::move(gap)), noise_rng_(seed) {
    gap_.validate(consts_->obs_dim);
  }

  TaskId task() const { return consts_->task; }
  Variant variant() const { return variant_; }
  const GapConfig& gap() const { return gap_; }
  const TaskConstants& constants() const { return *consts_; }
  int obs_dim() const { return consts_->obs_dim; }
  int act_dim() const { return consts_->act_dim; }
  const EnvState& state() const { return state_; }
  bool is_real() const { return variant_ == Variant::real; }

  Vec reset(Rng& rng) {
    const auto& c = *consts_;
    std::uniform_real_distribution<double> u(-c.object_range, c.object_range);
    state_ = EnvState{};
    state_.agent = c.agent_start;
    state_.object = {c.object_center[0] + u(rng), c.object_center[1] + u(rng)};
    pending_.clear();
    if (is_real())
      for (int i = 0; i < gap_.latency_steps; ++i) pending_.push_back(Vec::Zero(c.act_dim));
    done_ = false;
    return observe();
  }

  StepResult step(const Vec& action) {
    const auto& c = *consts_;
    if (action.size() != c.act_dim)
      throw std::invalid_argument("step: action has " + std::to_string(action.size()) + " entries, task expects " +
                                  std::to_string(c.act_dim));
    Vec a = action.cwiseMax(-1.0).cwiseMin(1.0);
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (std::isnan(a[i])) a[i] = 0.0;
    if (is_real() && gap_.latency_steps > 0) {
      pending_.push_back(a);
      a = pending_.front();
      pending_.pop_front();
    }
    const double gain = is_real() ? gap_.action_gain : 1.0;
    std::array<double, 2> drift{0.0, 0.0};
    if (is_real() && !gap_.drift.empty()) drift = {gap_.drift[0], gap_.drift[1]};

    bool success = false;
    switch (c.task) {
      case TaskId::push_place: success = step_push(a, gain, drift); break;
      case TaskId::peg_insert: success = step_peg(a, gain, drift); break;
      case TaskId::highdim_grasp: success = step_grasp(a, gain, drift); break;
    }
    state_.step += 1;
    StepResult r;
    r.success = success;
    r.reward = success ? 1.0 : 0.0;
    r.terminated = success;
    r.truncated = !success && state_.step >= c.horizon;
    r.obs = observe();
    done_ = r.terminated || r.truncated;
    return r;
  }

  /// Exact noiseless state as a flat vector.
  Vec privileged_state() const {
    const auto& c = *consts_;
    Vec s(c.obs_dim);
    s[0] = state_.agent[0];
    s[1] = state_.agent[1];
    s[2] = state_.object[0];
    s[3] = state_.object[1];
    if (c.task == TaskId::highdim_grasp) {
      s[4] = state_.lift;
      s[5] = state_.held ? 1.0 : 0.0;
      for (int i = 0; i < 9; ++i) s[6 + i] = state_.fingers[static_cast<std::size_t>(i)];
    } else {
      s[4] = state_.held ? 1.0 : 0.0;
    }
    return s;
  }

  /// Feature-mapped privileged state, plus bias and noise on the real variant.
  Vec observe() {
    Vec o = noiseless_observation(privileged_state(), *consts_);
    if (is_real()) {
      if (!gap_.obs_bias.empty()) o += Eigen::Map<const Vec>(gap_.obs_bias.data(), o.size());
      if (gap_.obs_noise_std > 0.0) {
        std::normal_distribution<double> n(0.0, gap_.obs_noise_std);
        for (auto& v : o) v += n(noise_rng_);
      }
    }
    return o;
  }

  static Vec noiseless_observation(const Vec& privileged, const TaskConstants& c) {
    return privileged.cwiseProduct(Eigen::Map<const Vec>(c.feature_map.data(), c.obs_dim));
  }

  // Checkpoint support: full mutable state.
  const std::deque<Vec>& pending_actions() const { return pending_; }
  const Rng& noise_rng() const { return noise_rng_; }
  void restore(const EnvState& s, std::deque<Vec> pending, const Rng& noise_rng) {
    state_ = s;
    pending_ = std::move(pending);
    noise_rng_ = noise_rng;
  }

 private:
  static double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }
  static double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  }

  std::array<double, 2> moved_agent(const Vec& a, double gain, const std::array<double, 2>& drift) const {
    const double s = consts_->max_step * gain;
    return {clamp1(state_.agent[0] + s * a[0] + drift[0]), clamp1(state_.agent[1] + s * a[1] + drift[1])};
  }

  // Grab channel: > 0 engages when close enough, < 0 releases, 0 keeps the current state.
  // Returns true when the object was released this step.
  bool apply_grab(double grab) {
    if (grab > 0.0 && !state_.held && dist(state_.agent, state_.object) <= consts_->grab_radius) {
      state_.held = true;
    } else if (grab < 0.0 && state_.held) {
      state_.held = false;
      return true;
    }
    return false;
  }

  bool step_push(const Vec& a, double gain, const std::array<double, 2>& drift) {
    const auto& c = *consts_;
    const bool released = apply_grab(a[2]);
    if (released && dist(state_.object, c.goal_center) <= c.goal_radius) return true;
    state_.agent = moved_agent(a, gain, drift);
    if (state_.held) state_.object = state_.agent;
    return false;
  }

  bool step_peg(const Vec& a, double gain, const std::array<double, 2>& drift) {
    const auto& c = *consts_;
    apply_grab(a[2]);
    auto p = moved_agent(a, gain, drift);
    if (state_.held) {
      // Everything above slot_y is the toaster body; a held object passes only through the slot.
      if (p[1] > c.slot_y) {
        const bool inside = state_.object[1] > c.slot_y;
        if (inside) {
          p[0] = std::clamp(p[0], c.slot_x - c.slot_half_width, c.slot_x + c.slot_half_width);
        } else if (std::abs(p[0] - c.slot_x) > c.slot_half_width) {
          p[1] = c.slot_y;  // stuck on the edge
        }
      }
      state_.object = p;
    }
    state_.agent = p;
    return std::abs(state_.object[0] - c.slot_x) <= c.slot_half_width &&
           state_.object[1] - c.slot_y >= c.insert_depth;
  }

  int closure_count() const {
    const auto& c = *consts_;
    int n = 0;
    for (std::size_t i = 0; i < 9; ++i)
      if (std::abs(state_.fingers[i] - c.closure_pattern[i]) <= c.closure_band) ++n;
    return n;
  }

  bool step_grasp(const Vec& a, double gain, const std::array<double, 2>& drift) {
    const auto& c = *consts_;
    const double s = c.max_step * gain;
    state_.agent = moved_agent(a, gain, drift);
    state_.lift = std::clamp(state_.lift + s * a[2], 0.0, 1.0);
    for (std::size_t i = 0; i < 9; ++i)
      state_.fingers[i] = clamp1(state_.fingers[i] + s * a[static_cast<Eigen::Index>(3 + i)]);
    const bool closed = closure_count() >= c.closure_required;
    if (state_.held) {
      if (!closed) state_.held = false;
    } else if (closed && state_.lift <= c.grasp_max_lift && dist(state_.agent, state_.object) <= c.grab_radius) {
      state_.held = true;
    }
    if (state_.held) state_.object = state_.agent;
    return state_.held && state_.lift >= c.lift_required;
  }

  const TaskConstants* consts_;
  Variant variant_;
  GapConfig gap_;
  Rng noise_rng_;
  EnvState state_;
  std::deque<Vec> pending_;
  bool done_ = false;
};

/// Twin-pair construction. The sim variant ignores the gap entirely.
inline TwinEnv make_env(TaskId task, Variant variant, const GapConfig& gap, std::uint64_t seed) {
  return TwinEnv(task, variant, variant == Variant::real ? gap : GapConfig::identity(), seed);
}

/// Scripted controller acting on the privileged state. Test fixture and debug demo source.
inline Vec scripted_oracle(const TaskConstants& c, const Vec& priv, double gain = 0.6) {
  Vec a = Vec::Zero(c.act_dim);
  auto toward = [&](double tx, double ty) {
    a[0] = std::clamp(gain * (tx - priv[0]) / c.max_step, -1.0, 1.0);
    a[1] = std::clamp(gain * (ty - priv[1]) / c.max_step, -1.0, 1.0);
  };
  const double ax = priv[0], ay = priv[1], ox = priv[2], oy = priv[3];
  const double reach = std::hypot(ox - ax, oy - ay);
  switch (c.task) {
    case TaskId::push_place: {
      const bool held = priv[4] > 0.5;
      if (!held) {
        toward(ox, oy);
        a[2] = reach <= 0.6 * c.grab_radius ? 1.0 : -1.0;
      } else if (std::hypot(ox - c.goal_center[0], oy - c.goal_center[1]) <= 0.5 * c.goal_radius) {
        a[2] = -1.0;  // release, hold still
      } else {
        toward(c.goal_center[0], c.goal_center[1]);
        a[2] = 1.0;
      }
      break;
    }
    case TaskId::peg_insert: {
      const bool held = priv[4] > 0.5;
      if (!held) {
        toward(ox, oy);
        a[2] = reach <= 0.6 * c.grab_radius ? 1.0 : -1.0;
      } else {
        // Line up below the slot, then push straight in.
        const double below = c.slot_y - 0.06;
        if (std::abs(ox - c.slot_x) > 0.3 * c.slot_half_width && oy <= c.slot_y) {
          toward(c.slot_x, std::min(oy, below));
        } else {
          toward(c.slot_x, c.slot_y + 2.0 * c.insert_depth);
        }
        a[2] = 1.0;
      }
      break;
    }
    case TaskId::highdim_grasp: {
      const bool held = priv[5] > 0.5;
      const double lift = priv[4];
      for (int i = 0; i < 9; ++i)
        a[3 + i] = std::clamp(gain * (c.closure_pattern[static_cast<std::size_t>(i)] - priv[6 + i]) / c.max_step,
                              -1.0, 1.0);
      if (!held) {
        toward(ox, oy);
        a[2] = lift > 0.0 ? -1.0 : 0.0;
      } else {
        a[0] = a[1] = 0.0;
        a[2] = 1.0;
      }
      break;
    }
  }
  return a;
}

}  // namespace simlauncher
