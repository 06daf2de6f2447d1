// Command-line front end: subcommands delegating to the pipeline, orchestrator and studies.
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
#pragma once

#include "simlauncher/manifest.hpp"
#include "simlauncher/study.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace simlauncher {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

namespace cli {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

/// Config load with --seed, then SIMLAUNCHER_SEED, as the seed source.
inline TrainConfig load_config(const Common& c) {
  std::string text;
  try {
    text = detail::read_file(c.config_path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config '" + c.config_path + "': " + e.what());
  }
  TrainConfig cfg = parse_config(text);
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (const char* env = std::getenv("SIMLAUNCHER_SEED"); env && *env) {
    const std::string v = env;
    std::uint64_t s = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), s);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
      throw ConfigError("SIMLAUNCHER_SEED is not a nonnegative integer: '" + v + "'");
    cfg.seed = s;
  } else {
    throw ConfigError("missing --seed (and SIMLAUNCHER_SEED is not set)");
  }
  return cfg;
}

inline RunManifest begin_manifest(const std::string& command, const TrainConfig& cfg, const Common& c,
                                  std::vector<std::string> artifacts, const std::vector<std::string>& inputs = {}) {
  RunManifest m;
  m.command = command;
  m.config = cfg;
  m.inputs[c.config_path] = hash_file(c.config_path);
  for (const auto& p : inputs) m.inputs[p] = hash_file(p);
  m.artifacts = std::move(artifacts);
  write_manifest(c.out, m);
  return m;
}

inline void write_text(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  detail::write_file((dir / name).string(), text);
}

inline std::vector<PolicyCheckpoint> policy_from(const TrainConfig& cfg, const std::string& path, InputCache& cache) {
  if (!path.empty()) return load_policy_checkpoints(Checkpoint::load(path));
  return cache.state_policy(cfg.task, cfg.seed, cfg.demos.pretrain_budget).checkpoints;
}

inline BcPolicy bc_from(const TrainConfig& cfg, const std::string& path, InputCache& cache) {
  if (!path.empty()) return BcPolicy::load(Checkpoint::load(path), "bc");
  return cache.sim_bc(cfg.task, cfg.seed, cfg.demos.pretrain_budget, cfg.demos.n_bc, cfg.demos.bc_steps);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = detail::trim(std::string_view(s).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    std::uint64_t v = 0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size())
      throw ConfigError("malformed seed list '" + s + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Reads a curve CSV (env_step,mean,...) or a metrics CSV (env_step,...,running_success,...).
inline PlotSeries read_series(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::istringstream h(header);
    std::string c;
    while (std::getline(h, c, ',')) cols.push_back(c);
  }
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return i;
    return std::nullopt;
  };
  const auto xi = col("env_step");
  auto yi = col("mean");
  if (!yi) yi = col("running_success");
  const auto si = col("std");
  if (!xi || !yi) throw ConfigError("'" + path + "' has neither a curve nor a metrics header");
  PlotSeries s;
  s.name = fs::path(path).stem().string();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream l(line);
    std::string c;
    while (std::getline(l, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) throw ConfigError("'" + path + "': ragged row");
    s.x.push_back(std::stod(f[*xi]));
    s.y.push_back(std::stod(f[*yi]));
    if (si) s.sd.push_back(std::stod(f[*si]));
  }
  return s;
}

inline std::string default_config_help() {
  return "Configuration file (sectioned key = value; unknown keys are rejected). Defaults:\n\n" +
         serialize_config(TrainConfig{}) +
         "\n[proposal] doubling_period = 0 means one tenth of run.budget. [gap] bias_seed = -1 means the run seed.\n"
         "rlpd and ibrl take [demos] baseline_n / baseline_source (real_oracle | sim_policy) instead of\n"
         "n_sim / sim_mode / n_real. Presets without action proposal reject a [proposal] section.\n"
         "Seed: --seed, else the SIMLAUNCHER_SEED environment variable.\n";
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Hybrid sim-to-real RL laboratory on twin toy tasks."};
  app.footer(default_config_help());
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", common.config_path, "configuration file")->required();
    s->add_option("--seed", seed_value, "run seed (fallback: SIMLAUNCHER_SEED)");
    s->add_option("--out", common.out, "output directory")->required();
  };

  auto* pretrain = app.add_subcommand("pretrain", "train the privileged-state policy in sim, save 10 checkpoints");
  add_common(pretrain);

  std::string collect_mode = "success_only", policy_path;
  int collect_n = 100;
  auto* collect = app.add_subcommand("collect", "roll out the sim policy into a D_sim demo file");
  add_common(collect);
  collect->add_option("--mode", collect_mode, "success_only | hybrid")->check(CLI::IsMember({"success_only", "hybrid"}));
  collect->add_option("--n", collect_n, "trajectories to collect")->check(CLI::PositiveNumber);
  collect->add_option("--policy", policy_path, "state_policy.slck from pretrain (default: pretrain in-process)");

  std::string bc_demos_path;
  auto* bc = app.add_subcommand("bc", "distill sim demos into a BC policy");
  add_common(bc);
  bc->add_option("--demos", bc_demos_path, "SLDM demo file (default: demos.n_bc success-only sim demos)");

  std::string bc_path;
  int real_n = 0;
  auto* collect_real = app.add_subcommand("collect-real", "roll the BC policy in the real variant into a D_real demo file");
  add_common(collect_real);
  collect_real->add_option("--bc", bc_path, "bc.slck (default: distill in-process)");
  collect_real->add_option("--n", real_n, "successful trajectories (default: demos.n_real)");

  std::string run_mode, sim_demos_path, real_demos_path, train_bc_path, resume_path;
  auto* train = app.add_subcommand("train", "online RL in the real variant");
  add_common(train);
  train->add_option("--mode", run_mode, "sync | async (default: run.mode)")->check(CLI::IsMember({"sync", "async"}));
  train->add_option("--sim-demos", sim_demos_path, "D_sim demo file");
  train->add_option("--real-demos", real_demos_path, "D_real demo file");
  train->add_option("--bc", train_bc_path, "bc.slck");
  train->add_option("--resume", resume_path, "run checkpoint to continue from");

  std::string eval_ck;
  int eval_trials = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a trained actor with its deterministic mean action");
  add_common(eval);
  eval->add_option("--checkpoint", eval_ck, "final.slck from train")->required();
  eval->add_option("--trials", eval_trials, "episodes (default: run.eval_trials)");

  std::string study_name, seeds_text = "1,2,3";
  auto* study = app.add_subcommand("study", "run a multi-seed study and emit curves, plot and manifest");
  add_common(study);
  study->add_option("--name", study_name, "baselines | ablations | bc_scaling | sim_demo_bootstrap | hybrid_vs_success")
      ->required()
      ->check(CLI::IsMember({"baselines", "ablations", "bc_scaling", "sim_demo_bootstrap", "hybrid_vs_success"}));
  study->add_option("--seeds", seeds_text, "comma-separated seeds");
  study->add_option("--mode", run_mode, "sync | async (default: run.mode)")->check(CLI::IsMember({"sync", "async"}));

  std::vector<std::string> plot_inputs;
  std::string plot_title = "learning curves";
  auto* plot = app.add_subcommand("plot", "render curve or metrics CSVs as an SVG line chart");
  add_common(plot);
  plot->add_option("--csv", plot_inputs, "CSV files")->required();
  plot->add_option("--title", plot_title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) common.seed = seed_value;
  const std::string name = sub->get_name();
  const fs::path outdir = common.out;

  TrainConfig cfg;
  try {
    cfg = load_config(common);
    if (!run_mode.empty()) cfg.run.mode = parse_run_mode(run_mode);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n" << sub->help();
    return kExitConfig;
  }

  try {
    InputCache cache;
    if (name == "pretrain") {
      begin_manifest(name, cfg, common, {"state_policy.slck", "summary.json"});
      const auto& sp = cache.state_policy(cfg.task, cfg.seed, cfg.demos.pretrain_budget);
      Checkpoint ck;
      save_policy_checkpoints(ck, sp.checkpoints);
      ck.save((outdir / "state_policy.slck").string());
      nlohmann::ordered_json j;
      j["final_success"] = sp.final_success;
      j["failed"] = sp.failed;
      j["budget"] = cfg.demos.pretrain_budget;
      std::vector<std::int64_t> steps;
      for (const auto& c : sp.checkpoints) steps.push_back(c.env_step);
      j["checkpoint_steps"] = steps;
      write_text(outdir, "summary.json", j.dump(2) + "\n");
      out << "pretrain: final sim success " << sp.final_success << (sp.failed ? " (below threshold, flagged)" : "")
          << "\n";
    } else if (name == "collect") {
      begin_manifest(name, cfg, common, {"demos.sldm", "summary.json"},
                     policy_path.empty() ? std::vector<std::string>{} : std::vector<std::string>{policy_path});
      const auto cks = policy_from(cfg, policy_path, cache);
      const DemoMode mode = parse_demo_mode(collect_mode);
      const DemoSet d = collect_demos(cks, cfg.task, collect_n, mode, derive_seed(cfg.seed, seed_stream::sim_demos));
      save_demos(d.buffer, (outdir / "demos.sldm").string());
      int successes = 0;
      for (const auto& t : d.trajectories) successes += t.success ? 1 : 0;
      nlohmann::ordered_json j;
      j["mode"] = collect_mode;
      j["trajectories"] = d.trajectories.size();
      j["successful"] = successes;
      j["attempts"] = d.attempts;
      j["transitions"] = d.buffer.size();
      j["object_cells_20x20"] = object_coverage_cells(d.buffer, cfg.task);
      write_text(outdir, "summary.json", j.dump(2) + "\n");
      out << "collect: " << d.trajectories.size() << " trajectories, " << d.buffer.size() << " transitions\n";
    } else if (name == "bc") {
      begin_manifest(name, cfg, common, {"bc.slck", "summary.json"},
                     bc_demos_path.empty() ? std::vector<std::string>{} : std::vector<std::string>{bc_demos_path});
      const auto& c = task_constants(cfg.task);
      BcPolicy pol;
      if (bc_demos_path.empty()) {
        pol = cache.sim_bc(cfg.task, cfg.seed, cfg.demos.pretrain_budget, cfg.demos.n_bc, cfg.demos.bc_steps);
      } else {
        const BufferStore demos = load_demos(bc_demos_path);
        pol = bc_train(demos, default_bc_spec(c.obs_dim, c.act_dim), bc_epochs_for(demos.size(), cfg.demos.bc_steps),
                       derive_seed(cfg.seed, seed_stream::bc));
      }
      Checkpoint ck;
      pol.save(ck, "bc");
      ck.save((outdir / "bc.slck").string());
      TwinEnv sim = make_env(cfg.task, Variant::sim, GapConfig::identity(), derive_seed(cfg.seed, seed_stream::eval_env));
      TwinEnv real = make_env(cfg.task, Variant::real, cfg.gap.resolve(cfg.task, cfg.seed),
                              derive_seed(cfg.seed, seed_stream::eval_env));
      nlohmann::ordered_json j;
      j["final_loss"] = pol.final_loss;
      j["sim_success_50"] = evaluate(bc_action_fn(pol), sim, 50, derive_seed(cfg.seed, seed_stream::eval));
      j["real_success_50"] = evaluate(bc_action_fn(pol), real, 50, derive_seed(cfg.seed, seed_stream::eval));
      write_text(outdir, "summary.json", j.dump(2) + "\n");
      out << "bc: sim success " << j["sim_success_50"] << ", real success " << j["real_success_50"] << "\n";
    } else if (name == "collect-real") {
      begin_manifest(name, cfg, common, {"real_demos.sldm", "summary.json"},
                     bc_path.empty() ? std::vector<std::string>{} : std::vector<std::string>{bc_path});
      const BcPolicy pol = bc_from(cfg, bc_path, cache);
      TwinEnv real = make_env(cfg.task, Variant::real, cfg.gap.resolve(cfg.task, cfg.seed),
                              derive_seed(cfg.seed, seed_stream::real_demos));
      const int n = real_n > 0 ? real_n : cfg.demos.n_real;
      const DemoSet d = collect_real_demos(pol, real, n, derive_seed(cfg.seed, seed_stream::real_demos));
      save_demos(d.buffer, (outdir / "real_demos.sldm").string());
      nlohmann::ordered_json j;
      j["successful"] = d.trajectories.size();
      j["attempts"] = d.attempts;
      j["transitions"] = d.buffer.size();
      write_text(outdir, "summary.json", j.dump(2) + "\n");
      out << "collect-real: " << d.trajectories.size() << " successes in " << d.attempts << " attempts\n";
    } else if (name == "train") {
      std::vector<std::string> inputs;
      for (const auto* p : {&sim_demos_path, &real_demos_path, &train_bc_path, &resume_path})
        if (!p->empty()) inputs.push_back(*p);
      begin_manifest(name, cfg, common, {"metrics.csv", "final.slck", "summary.json"}, inputs);
      std::optional<RunState> state;
      if (!resume_path.empty()) {
        state.emplace(load_run(cfg, Checkpoint::load(resume_path)));
      } else {
        RunInputs in;
        if (sim_demos_path.empty() && real_demos_path.empty() && train_bc_path.empty()) {
          in = build_inputs(cfg, cache);
        } else {
          if (!sim_demos_path.empty()) in.d_sim = load_demos(sim_demos_path);
          if (!real_demos_path.empty()) in.d_real = load_demos(real_demos_path);
          if (!train_bc_path.empty()) in.bc = BcPolicy::load(Checkpoint::load(train_bc_path), "bc");
        }
        state.emplace(cfg, std::move(in));
      }
      advance(*state, cfg.run.budget);
      write_text(outdir, "metrics.csv", metrics_csv(state->rows));
      save_run(*state).save((outdir / "final.slck").string());
      const auto& k = state->counters;
      nlohmann::ordered_json j;
      j["env_steps"] = k.env_steps;
      j["episodes"] = k.episodes;
      j["final_running_success"] = state->rows.empty() ? 0.0 : state->rows.back().running_success;
      j["eval_success_real"] = evaluate_actor(*state, cfg.run.eval_trials);
      j["propose_calls"] = k.propose_calls;
      j["bc_invocations"] = k.bc_invocations;
      j["d_real_appends"] = k.d_real_appends;
      j["d_real_growth"] = k.d_real_growth;
      j["d_real_final_size"] = state->d_real.size();
      j["invariant_violations"] = {{"learner", k.learner_violations},
                                   {"d_real", k.d_real_violations},
                                   {"composition", k.composition_violations}};
      write_text(outdir, "summary.json", j.dump(2) + "\n");
      out << "train: " << k.episodes << " episodes, final running success " << j["final_running_success"] << "\n";
    } else if (name == "eval") {
      begin_manifest(name, cfg, common, {"eval.json"}, {eval_ck});
      const SacLearner l = load_learner(Checkpoint::load(eval_ck));
      const auto& c = task_constants(cfg.task);
      if (l.obs_dim != c.obs_dim || l.act_dim != c.act_dim)
        throw ConfigError("checkpoint dimensions do not match task " + std::string(to_string(cfg.task)));
      const int trials = eval_trials > 0 ? eval_trials : cfg.run.eval_trials;
      TwinEnv real = make_env(cfg.task, Variant::real, cfg.gap.resolve(cfg.task, cfg.seed),
                              derive_seed(cfg.seed, seed_stream::eval_env));
      TwinEnv sim = make_env(cfg.task, Variant::sim, GapConfig::identity(), derive_seed(cfg.seed, seed_stream::eval_env));
      nlohmann::ordered_json j;
      j["trials"] = trials;
      j["real_success"] = evaluate(mean_action_fn(l.actor), real, trials, derive_seed(cfg.seed, seed_stream::eval));
      j["sim_success"] = evaluate(mean_action_fn(l.actor), sim, trials, derive_seed(cfg.seed, seed_stream::eval));
      write_text(outdir, "eval.json", j.dump(2) + "\n");
      out << "eval: real " << j["real_success"] << ", sim " << j["sim_success"] << "\n";
    } else if (name == "study") {
      std::vector<std::uint64_t> seeds;
      try {
        seeds = parse_seed_list(seeds_text);
      } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      const StudyKind kind = parse_study(study_name);
      RunManifest m = begin_manifest(name, cfg, common, {});
      StudyRunner runner([&](const std::string& msg) { out << "  " << msg << "\n" << std::flush; });
      const StudyReport rep = runner.run_study(kind, seeds, cfg);
      const auto written = write_study(rep, outdir);
      m.artifacts = written;
      std::string seeds_csv;
      for (auto s : seeds) seeds_csv += (seeds_csv.empty() ? "" : ",") + std::to_string(s);
      m.notes["study"] = study_name;
      m.notes["seeds"] = seeds_csv;
      for (const auto& c : study_curves(kind, cfg)) m.notes["curve." + c.name] = serialize_config(c.config);
      write_text(outdir, "study_manifest.json", m.to_json());
      out << "study " << study_name << ": wrote " << written.size() << " files to " << common.out << "\n";
    } else if (name == "plot") {
      begin_manifest(name, cfg, common, {"plot.svg"}, plot_inputs);
      std::vector<PlotSeries> series;
      for (const auto& p : plot_inputs) series.push_back(read_series(p));
      write_text(outdir, "plot.svg", render_svg(plot_title, "env steps", "success rate", series));
      out << "plot: " << series.size() << " series\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace simlauncher
