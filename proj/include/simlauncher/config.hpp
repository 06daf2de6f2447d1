// Sectioned key = value configuration files mapped onto TrainConfig.
#pragma once

#include "simlauncher/orchestrator.hpp"

#include <set>

namespace simlauncher {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) throw ConfigError("malformed value for '" + key + "': '" + v + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) throw ConfigError("non-finite value for '" + key + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("malformed boolean for '" + key + "': '" + v + "' (expected true or false)");
}

inline std::vector<std::size_t> parse_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    const auto d = parse_number<long long>(key, item);
    if (d < 1) throw ConfigError("'" + key + "' entries must be >= 1");
    out.push_back(static_cast<std::size_t>(d));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string join_dims(const std::vector<std::size_t>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s;
}

template <class F>
auto rethrow_as_config(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace detail

/// Keys present in a parsed file, as "section.key".
struct ParsedConfig {
  TrainConfig config;
  std::set<std::string> keys;
};

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"task", {"task", "method"}},
      {"gap", {"bias", "bias_seed", "noise_std", "action_gain", "latency_steps", "drift_x", "drift_y"}},
      {"sac",
       {"gamma", "rho", "ensemble_size", "subsample", "grad_steps", "batch_size", "actor_lr", "critic_lr", "alpha_lr",
        "init_alpha", "actor_hidden", "critic_hidden"}},
      {"proposal", {"beta0", "doubling_period", "beta_max"}},
      {"demos",
       {"n_sim", "sim_mode", "n_real", "n_bc", "bc_steps", "baseline_n", "baseline_source", "pretrain_budget"}},
      {"run",
       {"seed", "budget", "eval_trials", "window", "mode", "wall_clock", "snapshot_interval", "queue_capacity"}},
  };
  return schema;
}

inline void apply_key(TrainConfig& c, const std::string& section, const std::string& key, const std::string& v) {
  using detail::parse_number;
  const std::string full = section + "." + key;
  auto num_i = [&] { return parse_number<long long>(full, v); };
  auto num_d = [&] { return parse_number<double>(full, v); };
  auto to_int = [&](long long x) {
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      throw ConfigError("value out of range for '" + full + "'");
    return static_cast<int>(x);
  };
  detail::rethrow_as_config([&] {
    if (section == "task") {
      if (key == "task") c.task = parse_task(v);
      else if (key == "method") c.method = parse_method(v);
    } else if (section == "gap") {
      if (key == "bias") c.gap.bias = num_d();
      else if (key == "bias_seed") c.gap.bias_seed = num_i();
      else if (key == "noise_std") c.gap.noise_std = num_d();
      else if (key == "action_gain") c.gap.action_gain = num_d();
      else if (key == "latency_steps") c.gap.latency_steps = to_int(num_i());
      else if (key == "drift_x") c.gap.drift_x = num_d();
      else if (key == "drift_y") c.gap.drift_y = num_d();
    } else if (section == "sac") {
      auto& s = c.sac;
      if (key == "gamma") s.gamma = num_d();
      else if (key == "rho") s.rho = num_d();
      else if (key == "ensemble_size") s.ensemble_size = to_int(num_i());
      else if (key == "subsample") s.subsample = to_int(num_i());
      else if (key == "grad_steps") s.grad_steps = to_int(num_i());
      else if (key == "batch_size") s.batch_size = to_int(num_i());
      else if (key == "actor_lr") s.actor_lr = num_d();
      else if (key == "critic_lr") s.critic_lr = num_d();
      else if (key == "alpha_lr") s.alpha_lr = num_d();
      else if (key == "init_alpha") s.init_alpha = num_d();
      else if (key == "actor_hidden") s.actor_hidden = detail::parse_dims(full, v);
      else if (key == "critic_hidden") s.critic_hidden = detail::parse_dims(full, v);
    } else if (section == "proposal") {
      if (key == "beta0") c.beta0 = num_d();
      else if (key == "doubling_period") c.beta_doubling_period = num_i();
      else if (key == "beta_max") c.beta_max = num_d();
    } else if (section == "demos") {
      auto& d = c.demos;
      if (key == "n_sim") d.n_sim = to_int(num_i());
      else if (key == "sim_mode") d.sim_mode = parse_demo_mode(v);
      else if (key == "n_real") d.n_real = to_int(num_i());
      else if (key == "n_bc") d.n_bc = to_int(num_i());
      else if (key == "bc_steps") d.bc_steps = to_int(num_i());
      else if (key == "baseline_n") d.baseline_n = to_int(num_i());
      else if (key == "baseline_source") d.baseline_source = parse_baseline_source(v);
      else if (key == "pretrain_budget") d.pretrain_budget = num_i();
    } else if (section == "run") {
      auto& r = c.run;
      if (key == "seed") {
        const auto s = num_i();
        if (s < 0) throw ConfigError("'run.seed' must be >= 0");
        c.seed = static_cast<std::uint64_t>(s);
      } else if (key == "budget") r.budget = num_i();
      else if (key == "eval_trials") r.eval_trials = to_int(num_i());
      else if (key == "window") r.window = to_int(num_i());
      else if (key == "mode") r.mode = parse_run_mode(v);
      else if (key == "wall_clock") r.wall_clock = detail::parse_bool(full, v);
      else if (key == "snapshot_interval") r.snapshot_interval = to_int(num_i());
      else if (key == "queue_capacity") r.queue_capacity = to_int(num_i());
    }
  });
}

/// Rejects section/preset combinations that have no meaning.
inline void check_consistency(const TrainConfig& c, const std::set<std::string>& keys) {
  const PresetTraits t = preset_traits(c.method);
  auto any_in = [&](const std::string& section) {
    return std::any_of(keys.begin(), keys.end(), [&](const std::string& k) { return k.rfind(section + ".", 0) == 0; });
  };
  if (!t.action_proposal && any_in("proposal"))
    throw ConfigError("method '" + std::string(to_string(c.method)) + "' has no action proposal; remove the [proposal] section");
  if (!t.baseline_buffer && (keys.contains("demos.baseline_n") || keys.contains("demos.baseline_source")))
    throw ConfigError("baseline_n / baseline_source apply only to rlpd and ibrl");
  if (t.baseline_buffer)
    for (const char* k : {"demos.n_sim", "demos.sim_mode", "demos.n_real"})
      if (keys.contains(k)) throw ConfigError(std::string("'") + k + "' does not apply to rlpd and ibrl");
}

inline ParsedConfig parse_config_full(std::string_view text) {
  if (!detail::valid_utf8(std::string(text))) throw ConfigError("config is not valid UTF-8");
  ParsedConfig out;
  const auto& schema = config_schema();
  std::string section;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line =
        detail::trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (!schema.contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    if (!schema.at(section).contains(key)) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!out.keys.insert(section + "." + key).second)
      throw ConfigError(where + "duplicate key '" + section + "." + key + "'");
    try {
      apply_key(out.config, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  check_consistency(out.config, out.keys);
  detail::rethrow_as_config([&] { out.config.validate(); });
  return out;
}

inline TrainConfig parse_config(std::string_view text) { return parse_config_full(text).config; }

/// Canonical text form; sections a preset rejects are omitted.
inline std::string serialize_config(const TrainConfig& c) {
  const PresetTraits t = preset_traits(c.method);
  const auto f = format_double;
  std::string o;
  o += "[task]\ntask = " + std::string(to_string(c.task)) + "\nmethod = " + to_string(c.method) + "\n\n";
  o += "[gap]\nbias = " + f(c.gap.bias) + "\nbias_seed = " + std::to_string(c.gap.bias_seed) +
       "\nnoise_std = " + f(c.gap.noise_std) + "\naction_gain = " + f(c.gap.action_gain) +
       "\nlatency_steps = " + std::to_string(c.gap.latency_steps) + "\ndrift_x = " + f(c.gap.drift_x) +
       "\ndrift_y = " + f(c.gap.drift_y) + "\n\n";
  const auto& s = c.sac;
  o += "[sac]\ngamma = " + f(s.gamma) + "\nrho = " + f(s.rho) + "\nensemble_size = " + std::to_string(s.ensemble_size) +
       "\nsubsample = " + std::to_string(s.subsample) + "\ngrad_steps = " + std::to_string(s.grad_steps) +
       "\nbatch_size = " + std::to_string(s.batch_size) + "\nactor_lr = " + f(s.actor_lr) +
       "\ncritic_lr = " + f(s.critic_lr) + "\nalpha_lr = " + f(s.alpha_lr) + "\ninit_alpha = " + f(s.init_alpha) +
       "\nactor_hidden = " + detail::join_dims(s.actor_hidden) + "\ncritic_hidden = " + detail::join_dims(s.critic_hidden) +
       "\n\n";
  if (t.action_proposal)
    o += "[proposal]\nbeta0 = " + f(c.beta0) + "\ndoubling_period = " + std::to_string(c.beta_doubling_period) +
         "\nbeta_max = " + f(c.beta_max) + "\n\n";
  const auto& d = c.demos;
  o += "[demos]\n";
  if (t.baseline_buffer)
    o += "baseline_n = " + std::to_string(d.baseline_n) + "\nbaseline_source = " + to_string(d.baseline_source) + "\n";
  else
    o += "n_sim = " + std::to_string(d.n_sim) + "\nsim_mode = " + to_string(d.sim_mode) +
         "\nn_real = " + std::to_string(d.n_real) + "\n";
  o += "n_bc = " + std::to_string(d.n_bc) + "\nbc_steps = " + std::to_string(d.bc_steps) +
       "\npretrain_budget = " + std::to_string(d.pretrain_budget) + "\n\n";
  const auto& r = c.run;
  o += "[run]\nseed = " + std::to_string(c.seed) + "\nbudget = " + std::to_string(r.budget) +
       "\neval_trials = " + std::to_string(r.eval_trials) + "\nwindow = " + std::to_string(r.window) +
       "\nmode = " + to_string(r.mode) + "\nwall_clock = " + (r.wall_clock ? "true" : "false") +
       "\nsnapshot_interval = " + std::to_string(r.snapshot_interval) +
       "\nqueue_capacity = " + std::to_string(r.queue_capacity) + "\n";
  return o;
}

}  // namespace simlauncher
